"""Graph and dense-tensor encodings of a farm scenario.

Both encodings work in the wind-aligned frame with coordinates measured from
the farm centroid, so wind direction is implicit and a joint rotation of
layout and wind leaves the features unchanged.

Feature order for a turbine row: ``spanwise, streamwise, yaw, U_inf, TI``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .wake import FarmScenario, to_wind_frame

N_MAX = 100
FEATURES = ("spanwise", "streamwise", "yaw", "wind_speed", "ti")


@dataclass
class FarmGraph:
    v: np.ndarray           # (N_v, 3) spanwise, streamwise, yaw
    edge_index: np.ndarray  # (N_e, 2) int src, dst
    e: np.ndarray           # (N_e, 2) relative spanwise, relative streamwise
    u: np.ndarray           # (2,) wind speed, TI

    @property
    def n_vertices(self) -> int:
        return len(self.v)

    @property
    def n_edges(self) -> int:
        return len(self.edge_index)

    def edge_set(self) -> set:
        return {(int(s), int(d)) for s, d in self.edge_index}

    def to_dict(self) -> dict:
        return {"v": self.v.tolist(), "edges": self.edge_index.tolist(),
                "e": self.e.tolist(), "u": self.u.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FarmGraph":
        return cls(np.asarray(d["v"], float).reshape(-1, 3),
                   np.asarray(d["edges"], np.int64).reshape(-1, 2),
                   np.asarray(d["e"], float).reshape(-1, 2),
                   np.asarray(d["u"], float))


@dataclass
class DenseBatch:
    X: np.ndarray        # (B, N_max, 5)
    mask: np.ndarray     # (B, N_max) bool
    n_real: np.ndarray   # (B,)
    fingerprint: str | None = None

    @property
    def batch_size(self) -> int:
        return self.X.shape[0]


def turbine_features(scenario: FarmScenario) -> np.ndarray:
    """Unnormalised ``(N, 5)`` feature rows for one scenario."""
    c = scenario.conditions
    x, y = to_wind_frame(scenario.positions, c.wind_direction)
    x = x - x.mean()
    y = y - y.mean()
    n = len(x)
    return np.column_stack([y, x, scenario.yaw, np.full(n, c.wind_speed),
                            np.full(n, c.turbulence_intensity)])


def build_directed_graph(scenario: FarmScenario, cone_half_angle: float = 15.0) -> FarmGraph:
    """Edges ``i -> j`` for every ``j`` strictly downstream of ``i`` within the wake cone."""
    f = turbine_features(scenario)
    y, x = f[:, 0], f[:, 1]
    dx = x[None, :] - x[:, None]
    dy = y[None, :] - y[:, None]
    angle = np.degrees(np.arctan2(np.abs(dy), dx))
    src, dst = np.nonzero((dx > 0) & (angle <= cone_half_angle))
    edge_index = np.stack([src, dst], axis=1).astype(np.int64).reshape(-1, 2)
    e = np.column_stack([dy[src, dst], dx[src, dst]]).reshape(-1, 2)
    c = scenario.conditions
    return FarmGraph(f[:, :3].copy(), edge_index, e,
                     np.array([c.wind_speed, c.turbulence_intensity]))


def to_dense(scenarios, n_max: int | None = N_MAX) -> DenseBatch:
    """Pad scenarios into one ``(B, n_max, 5)`` batch.

    ``n_max=None`` pads only to the largest farm in the batch.
    """
    feats = [turbine_features(s) for s in scenarios]
    return dense_from_features(feats, n_max)


def dense_from_features(feats, n_max: int | None = N_MAX) -> DenseBatch:
    sizes = np.array([len(f) for f in feats], dtype=np.int64)
    width = int(sizes.max()) if n_max is None else n_max
    if sizes.max() > (N_MAX if n_max is None else n_max):
        raise ValueError(f"farm with {sizes.max()} turbines exceeds N_max={n_max or N_MAX}")
    X = np.zeros((len(feats), width, 5))
    mask = np.zeros((len(feats), width), dtype=bool)
    for b, f in enumerate(feats):
        X[b, : len(f)] = f
        mask[b, : len(f)] = True
    return DenseBatch(X, mask, sizes)


@dataclass
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray
    edge_mean: np.ndarray
    edge_std: np.ndarray
    power_scale: float

    def __post_init__(self):
        for name in ("mean", "std", "edge_mean", "edge_std"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.std <= 0) or np.any(self.edge_std <= 0):
            raise ValueError("feature standard deviations must be positive")

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "edge_mean": self.edge_mean.tolist(), "edge_std": self.edge_std.tolist(),
                "power_scale": self.power_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(d["mean"], d["std"], d["edge_mean"], d["edge_std"], float(d["power_scale"]))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _scenario_of(item):
    return getattr(item, "scenario", item)


def fit_stats(records) -> FeatureStats:
    """Z-score statistics over real turbine rows and over GNN edges.

    Accepts scenarios or objects with a ``scenario`` attribute.
    """
    scenarios = [_scenario_of(r) for r in records]
    if not scenarios:
        raise ValueError("cannot fit statistics on an empty training set")
    rows = np.vstack([turbine_features(s) for s in scenarios])
    mean, std = rows.mean(axis=0), rows.std(axis=0)
    bad = [FEATURES[i] for i in np.nonzero(std <= 1e-12)[0]]
    if bad:
        raise ValueError(f"zero-variance feature(s) in training set: {bad}")
    edges = [build_directed_graph(s).e for s in scenarios]
    edges = np.vstack(edges) if any(len(e) for e in edges) else np.zeros((0, 2))
    if len(edges) >= 2 and np.all(edges.std(axis=0) > 1e-12):
        edge_mean, edge_std = edges.mean(axis=0), edges.std(axis=0)
    else:
        # too few edges to estimate; fall back to the coordinate scales
        edge_mean, edge_std = np.zeros(2), std[:2].copy()
    return FeatureStats(mean, std, edge_mean, edge_std, float(scenarios[0].spec.rated_power))


def normalize(batch: DenseBatch, stats: FeatureStats) -> DenseBatch:
    X = (batch.X - stats.mean) / stats.std
    X = np.where(batch.mask[..., None], X, 0.0)
    return DenseBatch(X, batch.mask.copy(), batch.n_real.copy(), stats.fingerprint())


def denormalize(batch: DenseBatch, stats: FeatureStats) -> DenseBatch:
    X = np.where(batch.mask[..., None], batch.X * stats.std + stats.mean, 0.0)
    return DenseBatch(X, batch.mask.copy(), batch.n_real.copy(), None)


def normalize_graph(graph: FarmGraph, stats: FeatureStats) -> FarmGraph:
    return FarmGraph((graph.v - stats.mean[:3]) / stats.std[:3], graph.edge_index,
                     (graph.e - stats.edge_mean) / stats.edge_std,
                     (graph.u - stats.mean[3:]) / stats.std[3:])


def normalize_power(power_w, stats: FeatureStats):
    return np.asarray(power_w, dtype=float) / stats.power_scale


def denormalize_power(y, stats: FeatureStats):
    return np.asarray(y, dtype=float) * stats.power_scale
