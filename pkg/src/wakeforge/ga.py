"""Real-valued genetic algorithm for yaw optimisation.

A fitness backend is any callable mapping a ``(P, n_turbines)`` array of yaw
chromosomes (degrees) to ``P`` total farm powers (W) for one fixed scenario.
Two backends are provided: the analytical simulator and a trained surrogate.
"""
from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .graph import N_MAX, FeatureStats, denormalize_power, normalize, dense_from_features, turbine_features
from .wake import FarmScenario, WakeParams, simulate_farm


@dataclass
class GaConfig:
    population_size: int = 100
    n_generations: int = 50
    crossover_prob: float = 0.7
    mutation_rate: float = 0.5
    elitism: int = 2
    tournament_size: int = 3
    yaw_bound: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.n_generations < 1:
            raise ValueError("n_generations must be >= 1")
        for name in ("crossover_prob", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if not 0 <= self.elitism <= self.population_size:
            raise ValueError("elitism must be between 0 and population_size")
        if self.tournament_size < 1 or self.yaw_bound <= 0:
            raise ValueError("invalid tournament size or yaw bound")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Individual:
    chromosome: np.ndarray
    fitness: float | None = None


@dataclass
class GaHistory:
    best_fitness: list = field(default_factory=list)
    mean_fitness: list = field(default_factory=list)
    best_chromosome: list = field(default_factory=list)
    populations: list = field(default_factory=list)
    fitnesses: list = field(default_factory=list)

    def __len__(self):
        return len(self.best_fitness)

    def record(self, pop, fit, keep):
        i = int(np.argmax(fit))
        self.best_fitness.append(float(fit[i]))
        self.mean_fitness.append(float(np.mean(fit)))
        self.best_chromosome.append(pop[i].copy())
        if keep:
            self.populations.append(pop.copy())
            self.fitnesses.append(np.array(fit, dtype=float))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["generation", "best_w", "mean_w"])
        for g, (b, m) in enumerate(zip(self.best_fitness, self.mean_fitness)):
            w.writerow([g, repr(b), repr(m)])
        return buf.getvalue()


class GaAborted(RuntimeError):
    """The fitness backend failed; ``history`` holds the generations completed so far."""

    def __init__(self, message, history: GaHistory):
        super().__init__(message)
        self.history = history


def _tournament(rng, fit, n_select, size):
    contestants = rng.integers(0, len(fit), size=(n_select, size))
    winners = np.argmax(fit[contestants], axis=1)
    return contestants[np.arange(n_select), winners]


def _evaluate(fitness, chromosomes, history):
    try:
        out = np.asarray(fitness(chromosomes), dtype=float).reshape(-1)
    except Exception as exc:
        raise GaAborted(f"fitness backend failed after {len(history)} generations: {exc}",
                        history) from exc
    if len(out) != len(chromosomes):
        raise GaAborted(f"backend returned {len(out)} fitnesses for {len(chromosomes)} "
                        "chromosomes", history)
    return out


def run_ga(fitness, n_turbines: int, config: GaConfig | None = None,
           keep_populations: bool = False):
    """Maximise ``fitness`` over yaw vectors of length ``n_turbines``.

    Generation 0 is a uniform random population; each later generation keeps
    ``elitism`` best individuals verbatim and fills the rest with
    tournament-selected parents, uniform crossover (applied per pair with
    ``crossover_prob``) and per-gene uniform redraw mutation.

    Returns
    -------
    (Individual, GaHistory)
        The best individual seen and per-generation statistics.
    """
    cfg = config or GaConfig()
    rng = np.random.default_rng(cfg.seed)
    b = cfg.yaw_bound
    P = cfg.population_size
    history = GaHistory()

    pop = rng.uniform(-b, b, size=(P, n_turbines))
    fit = _evaluate(fitness, pop, history)
    history.record(pop, fit, keep_populations)

    for _ in range(1, cfg.n_generations):
        order = np.argsort(-fit, kind="stable")
        elite = order[: cfg.elitism]
        n_child = P - cfg.elitism
        if n_child:
            n_par = n_child + (n_child % 2)
            parents = pop[_tournament(rng, fit, n_par, cfg.tournament_size)]
            p0, p1 = parents[0::2], parents[1::2]
            do_cross = rng.uniform(size=(len(p0), 1)) < cfg.crossover_prob
            swap = (rng.uniform(size=p0.shape) < 0.5) & do_cross
            c0 = np.where(swap, p1, p0)
            c1 = np.where(swap, p0, p1)
            children = np.empty((n_par, n_turbines))
            children[0::2], children[1::2] = c0, c1
            children = children[:n_child]
            mutate = rng.uniform(size=children.shape) < cfg.mutation_rate
            children[mutate] = rng.uniform(-b, b, size=int(mutate.sum()))
            child_fit = _evaluate(fitness, children, history)
            pop = np.vstack([pop[elite], children])
            fit = np.concatenate([fit[elite], child_fit])
        else:
            pop, fit = pop[elite], fit[elite]
        history.record(pop, fit, keep_populations)

    g = int(np.argmax(history.best_fitness))
    return Individual(history.best_chromosome[g].copy(), history.best_fitness[g]), history


# ---------------------------------------------------------------------------
# fitness backends

def _threads():
    try:
        return max(1, int(os.environ.get("WAKEFORGE_THREADS", "1")))
    except ValueError:
        return 1


def simulator_fitness(scenario: FarmScenario, chromosomes, params: WakeParams | None = None,
                      threads: int | None = None) -> np.ndarray:
    """Total farm power for each chromosome, one :func:`simulate_farm` call each."""
    chromosomes = np.atleast_2d(np.asarray(chromosomes, dtype=float))
    if chromosomes.shape[1] != scenario.n_turbines:
        raise ValueError(f"chromosome length {chromosomes.shape[1]} != {scenario.n_turbines} turbines")
    params = params or WakeParams()

    def one(c):
        return simulate_farm(scenario.with_yaw(c), params).total_power

    threads = threads or _threads()
    if threads > 1 and len(chromosomes) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return np.array(list(pool.map(one, chromosomes)))
    return np.array([one(c) for c in chromosomes])


def surrogate_fitness(model, scenario: FarmScenario, chromosomes) -> np.ndarray:
    """Total farm power for every chromosome from ONE batched transformer pass."""
    chromosomes = np.atleast_2d(np.asarray(chromosomes, dtype=float))
    n = scenario.n_turbines
    if n > N_MAX:
        raise ValueError(f"farm with {n} turbines exceeds N_max={N_MAX}")
    if chromosomes.shape[1] != n:
        raise ValueError(f"chromosome length {chromosomes.shape[1]} != {n} turbines")
    stats: FeatureStats = model.stats
    base = turbine_features(scenario)
    X = np.repeat(base[None], len(chromosomes), axis=0)
    X[:, :, 2] = chromosomes
    batch = normalize(dense_from_features(list(X), n_max=None), stats)
    y = model.forward(batch).data
    return denormalize_power(y, stats).sum(axis=1)


class SimulatorBackend:
    def __init__(self, scenario: FarmScenario, params: WakeParams | None = None, threads=None):
        self.scenario, self.params, self.threads = scenario, params, threads

    def __call__(self, chromosomes):
        return simulator_fitness(self.scenario, chromosomes, self.params, self.threads)


class SurrogateBackend:
    def __init__(self, model, scenario: FarmScenario):
        self.model, self.scenario = model, scenario

    def __call__(self, chromosomes):
        return surrogate_fitness(self.model, self.scenario, chromosomes)


def cross_evaluate(champion, backend) -> float:
    """Fitness of one champion chromosome under another backend."""
    chrom = champion.chromosome if isinstance(champion, Individual) else champion
    return float(backend(np.asarray(chrom, dtype=float)[None])[0])
