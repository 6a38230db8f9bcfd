"""Random wind-farm layouts in four string/cluster styles plus a regular grid.

Every generator is driven by a single seed and places turbines in metres,
centred on the origin. Spacing feasibility is enforced by rejection and
retry.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

MAX_ATTEMPTS = 100


class LayoutStyle(str, enum.Enum):
    CLUSTER = "cluster"
    SINGLE_STRING = "single_string"
    MULTIPLE_STRING = "multiple_string"
    PARALLEL_STRING = "parallel_string"
    REGULAR_GRID = "regular_grid"


RANDOM_STYLES = (
    LayoutStyle.CLUSTER,
    LayoutStyle.SINGLE_STRING,
    LayoutStyle.MULTIPLE_STRING,
    LayoutStyle.PARALLEL_STRING,
)


class LayoutInfeasible(RuntimeError):
    pass


@dataclass
class LayoutParams:
    """Knobs for :func:`generate_layout`.

    Distances are multiples of the rotor diameter ``d0``. ``heading`` (degrees,
    compass) fixes the string direction; ``None`` draws it at random.
    """

    n_turbines: int
    min_spacing: float = 3.0
    seed: int = 0
    d0: float = 80.0
    heading: float | None = None
    string_pitch: tuple[float, float] = (5.0, 7.0)
    row_pitch: tuple[float, float] = (4.0, 6.0)
    cluster_radius_scale: float = 1.0
    grid_pitch: float = 7.0
    grid_shape: tuple[int, int] | None = None

    def __post_init__(self):
        if not 2 <= self.n_turbines <= 100:
            raise ValueError(f"n_turbines must be in [2, 100], got {self.n_turbines}")
        if self.min_spacing < 2:
            raise ValueError(f"min_spacing must be >= 2 rotor diameters, got {self.min_spacing}")


@dataclass
class LayoutReport:
    ok: bool
    violations: list = field(default_factory=list)


def validate_layout(positions, d0: float, min_spacing: float) -> LayoutReport:
    """Report every turbine pair closer than ``min_spacing * d0``."""
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(p) < 2:
        return LayoutReport(True)
    dist = squareform(pdist(p))
    limit = min_spacing * d0 * (1.0 - 1e-9)
    i, j = np.nonzero(np.triu(dist < limit, k=1))
    violations = [(int(a), int(b), float(dist[a, b])) for a, b in zip(i, j)]
    return LayoutReport(not violations, violations)


def _unit(heading_deg):
    h = np.radians(heading_deg)
    return np.array([np.sin(h), np.cos(h)])


def _perp(u):
    return np.array([-u[1], u[0]])


def _jitter(rng, n, u, d0):
    # along-string up to 0.4 d0, across-string up to 0.25 d0 (|jitter| < 0.5 d0)
    along = rng.uniform(-0.4, 0.4, n) * d0
    across = rng.uniform(-0.25, 0.25, n) * d0
    return along[:, None] * u + across[:, None] * _perp(u)


def _pitch_range(lo_hi, min_spacing):
    lo, hi = lo_hi
    lo = max(lo, min_spacing + 1.0)
    return lo, max(hi, lo)


def _string(rng, n, start, u, pitch, d0):
    steps = np.arange(n)[:, None] * pitch * d0
    return start + steps * u + _jitter(rng, n, u, d0)


def _split(rng, n, k):
    """Split ``n`` turbines into ``k`` strings as evenly as possible, in random order."""
    base = np.full(k, n // k)
    base[: n % k] += 1
    rng.shuffle(base)
    return base


def _heading(rng, params):
    return rng.uniform(0.0, 360.0) if params.heading is None else params.heading


def _cluster(rng, params):
    n, d0, sp = params.n_turbines, params.d0, params.min_spacing
    radius = params.cluster_radius_scale * 1.1 * sp * d0 * np.sqrt(n)
    pts = np.empty((0, 2))
    for _ in range(200 * n):
        r = radius * np.sqrt(rng.uniform())
        t = rng.uniform(0, 2 * np.pi)
        cand = np.array([r * np.cos(t), r * np.sin(t)])
        if len(pts) == 0 or np.min(np.hypot(*(pts - cand).T)) >= sp * d0:
            pts = np.vstack([pts, cand])
            if len(pts) == n:
                return pts
    raise LayoutInfeasible("cluster disc too small for the requested spacing")


def _single_string(rng, params):
    n, d0 = params.n_turbines, params.d0
    u = _unit(_heading(rng, params))
    pitch = rng.uniform(*_pitch_range(params.string_pitch, params.min_spacing))
    return _string(rng, n, np.zeros(2), u, pitch, d0)


def _multiple_string(rng, params):
    n, d0, sp = params.n_turbines, params.d0, params.min_spacing
    k = int(rng.integers(2, min(5, max(2, n // 2)) + 1)) if n >= 2 else 1
    sizes = _split(rng, n, k)
    base = rng.uniform(0, 360)
    # spokes separated by at least 30 degrees
    gaps = rng.dirichlet(np.ones(k)) * (360.0 - 30.0 * k) + 30.0
    headings = base + np.concatenate([[0.0], np.cumsum(gaps[:-1])])
    lo, hi = _pitch_range(params.string_pitch, sp)
    parts = []
    for size, h in zip(sizes, headings):
        u = _unit(h)
        start = rng.uniform(-0.5, 0.5, 2) * d0 + u * (1.5 * sp * d0)
        parts.append(_string(rng, int(size), start, u, rng.uniform(lo, hi), d0))
    return np.vstack(parts)


def _parallel_string(rng, params):
    n, d0, sp = params.n_turbines, params.d0, params.min_spacing
    k = int(rng.integers(2, min(6, n // 2) + 1)) if n >= 4 else 1
    sizes = _split(rng, n, k)
    u = _unit(_heading(rng, params))
    v = _perp(u)
    row = rng.uniform(*_pitch_range(params.row_pitch, sp))
    pitch = rng.uniform(*_pitch_range(params.string_pitch, sp))
    parts = []
    for i, size in enumerate(sizes):
        start = v * (i * row * d0) + u * (rng.uniform(-1.0, 1.0) * pitch * d0)
        parts.append(_string(rng, int(size), start, u, pitch, d0))
    return np.vstack(parts)


def _grid_shape(n):
    r = max(d for d in range(1, int(np.sqrt(n)) + 1) if n % d == 0)
    if r == 1 and n > 3:
        c = int(np.ceil(np.sqrt(n)))
        return int(np.ceil(n / c)), c
    return r, n // r


def _regular_grid(rng, params):
    n, d0 = params.n_turbines, params.d0
    rows, cols = params.grid_shape or _grid_shape(n)
    if rows * cols < n:
        raise LayoutInfeasible(f"grid {rows}x{cols} cannot hold {n} turbines")
    pitch = params.grid_pitch * d0
    if params.grid_pitch < params.min_spacing:
        raise LayoutInfeasible("grid pitch below minimum spacing")
    r, c = np.divmod(np.arange(n), cols)
    return np.stack([c * pitch, -r * pitch], axis=1).astype(float)


_BUILDERS = {
    LayoutStyle.CLUSTER: _cluster,
    LayoutStyle.SINGLE_STRING: _single_string,
    LayoutStyle.MULTIPLE_STRING: _multiple_string,
    LayoutStyle.PARALLEL_STRING: _parallel_string,
    LayoutStyle.REGULAR_GRID: _regular_grid,
}


def generate_layout(style, params: LayoutParams) -> np.ndarray:
    """Turbine positions ``(n, 2)`` in metres, deterministic for a fixed seed.

    Raises
    ------
    LayoutInfeasible
        If no layout satisfying the spacing constraint is found within
        ``MAX_ATTEMPTS`` draws.
    """
    style = LayoutStyle(style)
    rng = np.random.default_rng(params.seed)
    build = _BUILDERS[style]
    for _ in range(MAX_ATTEMPTS):
        try:
            pts = build(rng, params)
        except LayoutInfeasible:
            if style is LayoutStyle.REGULAR_GRID:
                raise
            continue
        if validate_layout(pts, params.d0, params.min_spacing).ok:
            return pts - pts.mean(axis=0)
    raise LayoutInfeasible(
        f"no {style.value} layout with {params.n_turbines} turbines at spacing "
        f">= {params.min_spacing} d0 after {MAX_ATTEMPTS} attempts")
