"""End-to-end studies built from the core modules: direction sweeps, GA runs, timing."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .ga import GaConfig, SimulatorBackend, SurrogateBackend, cross_evaluate, run_ga
from .wake import FarmScenario, WakeParams, simulate_farm

BACKENDS = ("simulator", "surrogate", "both")


def _require_model(backend, model):
    if backend in ("surrogate", "both") and model is None:
        raise ValueError(f"backend {backend!r} needs a surrogate checkpoint")


def sweep(scenario: FarmScenario, step_deg: float = 1.0, backend: str = "simulator",
          model=None, params: WakeParams | None = None, yaw=None) -> dict:
    """Total farm power over wind directions ``0, step, ..., < 360``.

    Turbines face the incoming wind (zero yaw) unless ``yaw`` is given.
    Returns a dict with ``rows`` (one dict per direction) and, for
    ``backend="both"``, ``summary`` holding mean and min relative accuracy.
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    _require_model(backend, model)
    if not 0 < step_deg <= 360:
        raise ValueError("step_deg must be in (0, 360]")
    params = params or WakeParams()
    yaw = np.zeros(scenario.n_turbines) if yaw is None else np.asarray(yaw, dtype=float)
    directions = np.arange(0.0, 360.0, step_deg)
    cases = [scenario.with_yaw(yaw).with_direction(d) for d in directions]
    rows = [{"direction_deg": float(d)} for d in directions]
    sim = sur = None
    if backend in ("simulator", "both"):
        sim = np.array([simulate_farm(c, params).total_power for c in cases])
    if backend in ("surrogate", "both"):
        sur = np.array([p.sum() for p in model.predict_power(cases)])
    for i, row in enumerate(rows):
        if sim is not None:
            row["total_power_w"] = float(sim[i])
        if sur is not None:
            row["surrogate_w"] = float(sur[i])
        if sim is not None and sur is not None:
            row["rel_err"] = float(abs(sur[i] - sim[i]) / sim[i])
    out = {"rows": rows}
    if backend == "both":
        acc = 1.0 - np.array([r["rel_err"] for r in rows])
        out["summary"] = {"mean_accuracy": float(acc.mean()), "min_accuracy": float(acc.min())}
    return out


def sweep_csv(result: dict) -> str:
    rows = result["rows"]
    cols = [c for c in ("direction_deg", "total_power_w", "surrogate_w", "rel_err") if c in rows[0]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(r[c]) for c in cols])
    return buf.getvalue()


@dataclass
class OptimizeReport:
    champion: object
    history: object
    backend: str
    cross: dict


def optimize(scenario: FarmScenario, config: GaConfig, backend: str = "simulator", model=None,
             params: WakeParams | None = None) -> OptimizeReport:
    """Run the GA with one backend; when a model is available, re-score the
    champion with the other backend too."""
    if backend not in ("simulator", "surrogate"):
        raise ValueError(f"unknown backend {backend!r}")
    _require_model(backend, model)
    sim = SimulatorBackend(scenario, params)
    sur = SurrogateBackend(model, scenario) if model is not None else None
    fit = sim if backend == "simulator" else sur
    champion, history = run_ga(fit, scenario.n_turbines, config)
    cross = {}
    if sur is not None:
        other = sur if backend == "simulator" else sim
        cross = {"other_backend": "surrogate" if backend == "simulator" else "simulator",
                 "champion_under_other_w": cross_evaluate(champion, other)}
    baseline = float(sim(np.zeros((1, scenario.n_turbines)))[0])
    cross["zero_yaw_simulator_w"] = baseline
    return OptimizeReport(champion, history, backend, cross)


def bench(scenario: FarmScenario, model, population: int = 200, seed: int = 0,
          params: WakeParams | None = None, repeats: int = 3) -> dict:
    """Wall-clock for one GA generation: per-individual simulator vs batched surrogate."""
    rng = np.random.default_rng(seed)
    chrom = rng.uniform(-30, 30, size=(population, scenario.n_turbines))
    sim = SimulatorBackend(scenario, params, threads=1)
    sur = SurrogateBackend(model, scenario)
    sur(chrom[:2])  # warm-up

    def timed(fn):
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn(chrom)
            best = min(best, time.perf_counter() - t0)
        return best

    t_sim = timed(sim)
    t_sur = timed(sur)
    return {
        "n_turbines": scenario.n_turbines,
        "population": population,
        "simulator_s_per_generation": t_sim,
        "surrogate_s_per_generation": t_sur,
        "speedup": t_sim / t_sur,
    }
