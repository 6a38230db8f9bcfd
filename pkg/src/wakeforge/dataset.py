"""Desk-scale training datasets: random-yaw ("standard") and GA-sampled ("enhanced").

Each scenario draws from its own RNG stream seeded by ``(master_seed, index)``
so serial and parallel generation agree exactly. Records are stored as JSON
Lines, one file per split, next to a manifest that pins the wake parameters.
"""
from __future__ import annotations

import gzip
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .ga import GaConfig, SimulatorBackend, run_ga
from .layout import RANDOM_STYLES, LayoutInfeasible, LayoutParams, generate_layout
from .schemas import validate_manifest, validate_record
from .turbine import V80, get_turbine
from .wake import FarmScenario, FlowConditions, WakeParams, simulate_farm

SCHEMA_VERSION = 1
SPLITS = ("train", "val", "test")


@dataclass
class DatasetRanges:
    n_turbines: tuple[int, int] = (2, 100)
    wind_speed: tuple[float, float] = (8.0, 15.0)
    wind_direction: tuple[float, float] = (0.0, 359.0)
    ti: tuple[float, float] = (0.05, 0.15)
    yaw_bound: float = 30.0
    min_spacing: float = 3.0

    def __post_init__(self):
        lo, hi = self.n_turbines
        if not 2 <= lo <= hi <= 100:
            raise ValueError("turbine count range must lie within [2, 100]")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRanges":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class DatasetRecord:
    scenario_id: int
    scenario: FarmScenario
    power_w: np.ndarray
    provenance: dict
    style: str = ""

    def to_dict(self) -> dict:
        s, c = self.scenario, self.scenario.conditions
        return {
            "scenario_id": self.scenario_id,
            "style": self.style,
            "positions": s.positions.tolist(),
            "yaw": s.yaw.tolist(),
            "wind_speed": c.wind_speed,
            "wind_direction": c.wind_direction,
            "ti": c.turbulence_intensity,
            "turbine": s.spec.name if s.spec == V80 else s.spec.to_dict(),
            "power_w": np.asarray(self.power_w).tolist(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecord":
        scenario = FarmScenario(d["positions"], d["yaw"],
                                FlowConditions(d["wind_speed"], d["wind_direction"], d["ti"]),
                                get_turbine(d.get("turbine", "v80")))
        return cls(int(d["scenario_id"]), scenario, np.asarray(d["power_w"], dtype=float),
                   d["provenance"], d.get("style", ""))


@dataclass
class DatasetManifest:
    name: str
    kind: str
    master_seed: int
    n_scenarios: int
    wake_params: dict
    ranges: dict
    split_fractions: tuple = (0.8, 0.1, 0.1)
    split_counts: dict = field(default_factory=dict)
    split_scenarios: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    generator_version: str = __version__
    schema_version: int = SCHEMA_VERSION
    compressed: bool = False

    def __post_init__(self):
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {self.split_fractions}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_fractions"] = list(self.split_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        d = dict(d)
        d["split_fractions"] = tuple(d["split_fractions"])
        return cls(**d)


# ---------------------------------------------------------------------------
# generation

def _draw_scenario(rng, ranges: DatasetRanges):
    """Layout style, layout and flow conditions for one scenario; resamples infeasible layouts."""
    for _ in range(10):
        style = RANDOM_STYLES[int(rng.integers(len(RANDOM_STYLES)))]
        n = int(rng.integers(ranges.n_turbines[0], ranges.n_turbines[1] + 1))
        lp = LayoutParams(n, min_spacing=ranges.min_spacing, seed=int(rng.integers(2**63)),
                          d0=V80.rotor_diameter)
        try:
            positions = generate_layout(style, lp)
        except LayoutInfeasible:
            continue
        cond = FlowConditions(float(rng.uniform(*ranges.wind_speed)),
                              float(rng.uniform(*ranges.wind_direction)),
                              float(rng.uniform(*ranges.ti)))
        return style.value, positions, cond
    raise LayoutInfeasible("could not draw a feasible layout in 10 tries")


def _standard_one(args):
    index, seed, ranges, params = args
    rng = np.random.default_rng([seed, index])
    style, positions, cond = _draw_scenario(rng, ranges)
    yaw = rng.uniform(-ranges.yaw_bound, ranges.yaw_bound, len(positions))
    scenario = FarmScenario(positions, yaw, cond)
    power = simulate_farm(scenario, params).powers
    return [DatasetRecord(index, scenario, power, {"kind": "random_yaw"}, style)]


def _enhanced_one(args):
    index, seed, ranges, params, ga_config, samples = args
    rng = np.random.default_rng([seed, index])
    style, positions, cond = _draw_scenario(rng, ranges)
    template = FarmScenario(positions, np.zeros(len(positions)), cond)
    cfg = GaConfig(**{**ga_config.to_dict(), "seed": int(rng.integers(2**63)),
                      "yaw_bound": ranges.yaw_bound})
    _, hist = run_ga(SimulatorBackend(template, params, threads=1), len(positions), cfg,
                     keep_populations=True)
    pool = cfg.population_size * len(hist.populations)
    if samples > pool:
        raise ValueError(f"cannot sample {samples} configurations from {pool} GA evaluations")
    picks = np.sort(rng.choice(pool, size=samples, replace=False))
    out = []
    for flat in picks:
        g, i = divmod(int(flat), cfg.population_size)
        sc = template.with_yaw(hist.populations[g][i])
        out.append(DatasetRecord(index, sc, simulate_farm(sc, params).powers,
                                 {"kind": "ga_sampled", "generation": g, "individual": i}, style))
    return out


def _run(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(fn, jobs, chunksize=8))
    else:
        chunks = [fn(j) for j in jobs]
    return [r for chunk in chunks for r in chunk]


def gen_standard(n_scenarios: int, ranges: DatasetRanges | None = None, seed: int = 0,
                 params: WakeParams | None = None, workers: int = 1) -> list:
    """One random-yaw record per scenario, targets from :func:`simulate_farm`."""
    ranges = ranges or DatasetRanges()
    params = params or WakeParams()
    jobs = [(i, seed, ranges, params) for i in range(n_scenarios)]
    return _run(_standard_one, jobs, workers)


def gen_enhanced(n_scenarios: int, ga_config: GaConfig | None = None,
                 samples_per_scenario: int = 25, seed: int = 0,
                 ranges: DatasetRanges | None = None, params: WakeParams | None = None,
                 workers: int = 1) -> list:
    """Records sampled without replacement from one simulator GA run per scenario."""
    ranges = ranges or DatasetRanges()
    params = params or WakeParams()
    ga_config = ga_config or GaConfig()
    if samples_per_scenario > ga_config.population_size * ga_config.n_generations:
        raise ValueError("samples_per_scenario exceeds the number of GA evaluations")
    jobs = [(i, seed, ranges, params, ga_config, samples_per_scenario) for i in range(n_scenarios)]
    return _run(_enhanced_one, jobs, workers)


# ---------------------------------------------------------------------------
# splitting and I/O

def split(records, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> dict:
    """Partition records by scenario id into train/val/test."""
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"invalid split fractions {fractions}")
    ids = sorted({r.scenario_id for r in records})
    rng = np.random.default_rng(seed)
    perm = [ids[i] for i in rng.permutation(len(ids))]
    n = len(ids)
    n_val = int(round(fractions[1] * n))
    n_test = int(round(fractions[2] * n))
    n_train = n - n_val - n_test
    owner = {}
    for name, chunk in zip(SPLITS, (perm[:n_train], perm[n_train:n_train + n_val],
                                    perm[n_train + n_val:])):
        for sid in chunk:
            owner[sid] = name
    out = {name: [] for name in SPLITS}
    for r in records:
        out[owner[r.scenario_id]].append(r)
    return out


def check_disjoint(splits: dict) -> None:
    seen = {}
    for name, recs in splits.items():
        for r in recs:
            other = seen.setdefault(r.scenario_id, name)
            if other != name:
                raise ValueError(f"scenario {r.scenario_id} appears in both {other} and {name}")


def _paths(directory, name, compressed):
    d = Path(directory)
    ext = ".jsonl.gz" if compressed else ".jsonl"
    return d / f"{name}.manifest.json", {s: d / f"{name}.{s}{ext}" for s in SPLITS}


def _dump_lines(records) -> bytes:
    lines = []
    for r in records:
        d = r.to_dict()
        validate_record(d)
        lines.append(json.dumps(d, sort_keys=True, separators=(",", ":")))
    return ("\n".join(lines) + ("\n" if lines else "")).encode()


def write_dataset(directory, manifest: DatasetManifest, splits: dict) -> dict:
    """Write manifest and split files; returns the written paths."""
    check_disjoint(splits)
    manifest.split_counts = {s: len(splits[s]) for s in SPLITS}
    manifest.split_scenarios = {s: len({r.scenario_id for r in splits[s]}) for s in SPLITS}
    mpath, paths = _paths(directory, manifest.name, manifest.compressed)
    mpath.parent.mkdir(parents=True, exist_ok=True)
    md = manifest.to_dict()
    validate_manifest(md)
    for s, p in paths.items():
        blob = _dump_lines(splits[s])
        if manifest.compressed:
            with open(p, "wb") as fh, gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=0) as gz:
                gz.write(blob)
        else:
            p.write_bytes(blob)
    mpath.write_text(json.dumps(md, indent=2, sort_keys=True) + "\n")
    return {"manifest": mpath, **paths}


def read_dataset(directory, name: str):
    """Load and validate a dataset; returns ``(manifest, {split: records})``."""
    d = Path(directory)
    mpath = d / f"{name}.manifest.json"
    md = json.loads(mpath.read_text())
    validate_manifest(md)
    manifest = DatasetManifest.from_dict(md)
    _, paths = _paths(directory, name, manifest.compressed)
    splits = {}
    for s, p in paths.items():
        raw = gzip.decompress(p.read_bytes()) if manifest.compressed else p.read_bytes()
        recs = []
        for line in raw.decode().splitlines():
            if line.strip():
                obj = json.loads(line)
                validate_record(obj)
                recs.append(DatasetRecord.from_dict(obj))
        if len(recs) != manifest.split_counts.get(s, len(recs)):
            raise ValueError(f"{p}: {len(recs)} records but manifest says {manifest.split_counts[s]}")
        splits[s] = recs
    check_disjoint(splits)
    return manifest, splits


def build_dataset(directory, name: str, kind: str, n_scenarios: int, seed: int = 0,
                  ranges: DatasetRanges | None = None, params: WakeParams | None = None,
                  fractions=(0.8, 0.1, 0.1), ga_config: GaConfig | None = None,
                  samples_per_scenario: int = 25, compressed: bool = False, workers: int = 1):
    """Generate, split and write a dataset in one call."""
    ranges = ranges or DatasetRanges()
    params = params or WakeParams()
    options = {}
    if kind == "standard":
        records = gen_standard(n_scenarios, ranges, seed, params, workers)
    elif kind == "enhanced":
        ga_config = ga_config or GaConfig()
        records = gen_enhanced(n_scenarios, ga_config, samples_per_scenario, seed, ranges,
                               params, workers)
        options = {"ga_config": {k: v for k, v in ga_config.to_dict().items() if k != "seed"},
                   "samples_per_scenario": samples_per_scenario}
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    manifest = DatasetManifest(name, kind, seed, n_scenarios, params.to_dict(), ranges.to_dict(),
                               tuple(fractions), options=options, compressed=compressed)
    splits = split(records, fractions, seed)
    paths = write_dataset(directory, manifest, splits)
    return manifest, splits, paths


def regenerate(manifest: DatasetManifest, directory, workers: int = 1):
    """Rebuild a dataset from its manifest alone."""
    opts = manifest.options
    ga = GaConfig(**opts["ga_config"]) if "ga_config" in opts else None
    return build_dataset(directory, manifest.name, manifest.kind, manifest.n_scenarios,
                         manifest.master_seed, DatasetRanges.from_dict(manifest.ranges),
                         WakeParams.from_dict(manifest.wake_params), manifest.split_fractions,
                         ga, opts.get("samples_per_scenario", 25), manifest.compressed, workers)
