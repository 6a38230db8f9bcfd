"""Training, evaluation and checkpointing for the surrogate models."""
from __future__ import annotations

import json
import logging
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .graph import (FeatureStats, build_directed_graph, dense_from_features, fit_stats,
                    normalize, normalize_graph, normalize_power, turbine_features)
from .models import GnnConfig, GraphNetwork, TransformerConfig, batch_graphs, build_model
from .optim import AdamW, LrSchedule
from .schemas import validate

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "wakeforge-checkpoint/1"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 32
    total_steps: int = 20000
    max_lr: float = 1e-3
    warmup_steps: int = 1000
    floor_lr: float = 1e-5
    weight_decay: float = 0.01
    seed: int = 0
    eval_every: int = 500
    log_every: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def schedule(self) -> LrSchedule:
        warm = min(self.warmup_steps, max(self.total_steps - 1, 0))
        return LrSchedule(self.max_lr, warm, max(self.total_steps, 1), self.floor_lr)


@dataclass
class TrainResult:
    model: object
    history: dict = field(default_factory=dict)
    best_step: int = 0
    best_val: float = float("inf")
    optimizer: object = None


# ---------------------------------------------------------------------------
# data preparation

class _DenseData:
    def __init__(self, records, stats: FeatureStats):
        self.stats = stats
        self.feats = [turbine_features(r.scenario) for r in records]
        self.targets = [normalize_power(r.power_w, stats) for r in records]

    def __len__(self):
        return len(self.feats)

    def batch(self, idx):
        b = normalize(dense_from_features([self.feats[i] for i in idx], n_max=None), self.stats)
        y = np.zeros(b.mask.shape)
        for row, i in enumerate(idx):
            y[row, : len(self.targets[i])] = self.targets[i]
        return b, y

    def loss(self, model, idx, rng=None):
        b, y = self.batch(idx)
        pred = model.forward(b, rng=rng)
        return ad.mse_loss(pred, y, b.mask)

    def predict(self, model, idx):
        b, _ = self.batch(idx)
        y = model.forward(b).data
        return [y[r, :n] for r, n in enumerate(b.n_real)]


class _GraphData:
    def __init__(self, records, stats: FeatureStats):
        self.stats = stats
        self.graphs = [normalize_graph(build_directed_graph(r.scenario), stats) for r in records]
        self.targets = [normalize_power(r.power_w, stats) for r in records]

    def __len__(self):
        return len(self.graphs)

    def loss(self, model, idx, rng=None):
        gb = batch_graphs([self.graphs[i] for i in idx])
        y = np.concatenate([self.targets[i] for i in idx])[gb.restore]
        pred = model.forward_batch(gb)
        return ad.mse_loss(pred, y)

    def predict(self, model, idx):
        return model.forward([self.graphs[i] for i in idx])


def _data_for(model, records, stats):
    return _GraphData(records, stats) if isinstance(model, GraphNetwork) else _DenseData(records, stats)


def _chunks(n, size):
    return [np.arange(i, min(i + size, n)) for i in range(0, n, size)]


def _mse(model, data, chunk=256):
    se, count = 0.0, 0
    for idx in _chunks(len(data), chunk):
        for p, i in zip(data.predict(model, idx), idx):
            se += float(np.sum((p - data.targets[i]) ** 2))
            count += len(p)
    return se / max(count, 1)


# ---------------------------------------------------------------------------
# training

def train(kind: str, model_config, train_config: TrainConfig, train_records, val_records=None,
          stats: FeatureStats | None = None) -> TrainResult:
    """Fit a surrogate with AdamW on normalised per-turbine power MSE.

    Statistics are fitted on ``train_records`` unless given. The weights with
    the lowest validation MSE (training MSE when no validation split is given)
    are restored at the end.
    """
    if not train_records:
        raise ValueError("empty training set")
    tc = train_config
    stats = stats or fit_stats(train_records)
    model = build_model(kind, model_config, stats, seed=tc.seed)
    data = _data_for(model, train_records, stats)
    val = _data_for(model, val_records, stats) if val_records else None
    opt = AdamW(model.params, weight_decay=tc.weight_decay)
    sched = tc.schedule()
    rng = np.random.default_rng(tc.seed)
    drop_rng = np.random.default_rng([tc.seed, 1]) if getattr(model_config, "dropout", 0) else None

    history = {"step": [], "train_loss": [], "lr": [], "eval_step": [], "val_mse": []}
    best = (float("inf"), 0, model.state_arrays())
    bs = min(tc.batch_size, len(data))
    perm, cursor, batch_id = rng.permutation(len(data)), 0, 0

    def check_point(step):
        nonlocal best
        score = _mse(model, val if val is not None else data)
        history["eval_step"].append(step)
        history["val_mse"].append(score)
        if score < best[0]:
            best = (score, step, model.state_arrays())

    check_point(0)
    for step in range(1, tc.total_steps + 1):
        if cursor + bs > len(data):
            perm, cursor = rng.permutation(len(data)), 0
        idx = perm[cursor: cursor + bs]
        cursor += bs
        batch_id += 1
        lr = sched.lr_at(step)
        opt.zero_grad()
        loss = data.loss(model, idx, drop_rng)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingDiverged(
                f"non-finite loss {value} at step {step} (lr={lr:.3g}, batch={batch_id}, "
                f"records={idx[:8].tolist()}...)")
        loss.backward()
        opt.step(lr)
        history["step"].append(step)
        history["train_loss"].append(value)
        history["lr"].append(lr)
        if tc.log_every and step % tc.log_every == 0:
            log.info("step %d loss %.3e lr %.2e", step, value, lr)
        if step % tc.eval_every == 0 or step == tc.total_steps:
            check_point(step)

    model.load_arrays(best[2])
    return TrainResult(model, history, best[1], best[0], opt.state)


# ---------------------------------------------------------------------------
# evaluation

def farm_accuracy(pred_total, true_total):
    """``1 - |sum(P_hat) - sum(P)| / sum(P)`` per scenario."""
    pred_total = np.asarray(pred_total, dtype=float)
    true_total = np.asarray(true_total, dtype=float)
    return 1.0 - np.abs(pred_total - true_total) / true_total


def evaluate_predictions(pred_w, true_w) -> dict:
    """Metrics from per-turbine predicted and true powers (lists of arrays, watts)."""
    acc = farm_accuracy([np.sum(p) for p in pred_w], [np.sum(t) for t in true_w])
    return {"n_scenarios": len(acc), "mean_accuracy": float(np.mean(acc)),
            "min_accuracy": float(np.min(acc))}


def evaluate(model, records, chunk: int = 256) -> dict:
    """MSE (normalised units) and relative farm-power accuracy on a split."""
    data = _data_for(model, records, model.stats)
    preds = []
    for idx in _chunks(len(data), chunk):
        preds.extend(data.predict(model, idx))
    scale = model.stats.power_scale
    se = sum(float(np.sum((p - t) ** 2)) for p, t in zip(preds, data.targets))
    count = sum(len(t) for t in data.targets)
    metrics = evaluate_predictions([p * scale for p in preds], [r.power_w for r in records])
    metrics["mse"] = se / count
    return metrics


# ---------------------------------------------------------------------------
# checkpoints

def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def checkpoint_dict(model, optimizer_state=None, step: int | None = None, meta=None) -> dict:
    d = {
        "format": CHECKPOINT_FORMAT,
        "kind": model.kind,
        "config": model.config_dict(),
        "stats": model.stats.to_dict(),
        "stats_fingerprint": model.stats.fingerprint(),
        "params": {k: {"shape": list(t.shape), "values": t.data.ravel().tolist()}
                   for k, t in model.params.items()},
        "meta": {"seed": model.seed, "git_describe": _git_describe(), **(meta or {})},
    }
    if optimizer_state is not None:
        d["optimizer"] = optimizer_state.to_dict()
    if step is not None:
        d["schedule_step"] = step
    return d


def save_checkpoint(path, model, optimizer_state=None, step=None, meta=None) -> None:
    d = checkpoint_dict(model, optimizer_state, step, meta)
    validate("checkpoint", d)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(d))


def model_from_checkpoint(d: dict):
    validate("checkpoint", d)
    stats = FeatureStats.from_dict(d["stats"])
    if d.get("stats_fingerprint") not in (None, stats.fingerprint()):
        raise ValueError("checkpoint statistics do not match their stored fingerprint")
    cfg_cls = TransformerConfig if d["kind"] == "transformer" else GnnConfig
    model = build_model(d["kind"], cfg_cls(**d["config"]), stats, seed=d["meta"].get("seed", 0))
    model.load_arrays({k: np.asarray(v["values"]).reshape(v["shape"])
                       for k, v in d["params"].items()})
    return model


def load_checkpoint(path):
    """Rebuild a model (with its feature statistics) from a checkpoint file."""
    return model_from_checkpoint(json.loads(Path(path).read_text()))

