"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line detail string; ``conftest.py`` prints a
PASS/FAIL line per criterion in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from wakeforge import autodiff as ad
from wakeforge.autodiff import Tensor, grad_check
from wakeforge.dataset import (DatasetRanges, build_dataset, check_disjoint, gen_enhanced,
                               gen_standard, read_dataset, regenerate, split)
from wakeforge.ga import GaConfig, SimulatorBackend, SurrogateBackend, run_ga, surrogate_fitness
from wakeforge.graph import FarmGraph, build_directed_graph, fit_stats, normalize, to_dense
from wakeforge.layout import LayoutParams, generate_layout
from wakeforge.models import GnnConfig, GraphNetwork, GraphTransformer, TransformerConfig, gnn_forward
from wakeforge.graph import DenseBatch
from wakeforge.pipeline import bench, sweep
from wakeforge.training import TrainConfig, evaluate, train
from wakeforge.wake import (beta_of_ct, from_wind_frame, gaussian_deficit,
                            make_scenario, simulate_farm, to_wind_frame, wake_sigma)

from conftest import random_farm
from test_graph import brute_force_edges

D0 = 80.0
TOY = TransformerConfig()   # 2 blocks, 2 heads, d = 64


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# ---------------------------------------------------------------------------
# shared desk-scale training run (criteria 6, 8, 9)

@pytest.fixture(scope="module")
def desk_run():
    recs = gen_standard(5000, DatasetRanges(n_turbines=(2, 10)), seed=1)
    sp = split(recs, seed=1)
    tc = TrainConfig(batch_size=32, total_steps=20000, max_lr=1e-3, warmup_steps=1000,
                     eval_every=1000, seed=0)
    t0 = time.perf_counter()
    res = train("transformer", TOY, tc, sp["train"], sp["val"])
    return res, sp, time.perf_counter() - t0


@pytest.fixture(scope="module")
def optimisation_surrogate():
    """Toy transformer trained on standard plus GA-sampled (enhanced) records.

    Same architecture as the desk run, with more standard farms and a small
    enhanced set so configurations near GA optima are covered.
    """
    ranges = DatasetRanges(n_turbines=(2, 10))
    t0 = time.perf_counter()
    std = split(gen_standard(20000, ranges, seed=7), seed=7)
    enh = split(gen_enhanced(1500, GaConfig(population_size=40, n_generations=20), 10, seed=2,
                             ranges=ranges), seed=2)
    tc = TrainConfig(batch_size=64, total_steps=40000, max_lr=1e-3, warmup_steps=2000,
                     eval_every=2000, seed=0)
    res = train("transformer", TOY, tc, std["train"] + enh["train"], std["val"])
    return res.model, evaluate(res.model, std["test"]), time.perf_counter() - t0


# ---------------------------------------------------------------------------

def test_criterion_01_wake_oracles(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        ct, d0, k = rng.uniform(0, 0.95), rng.uniform(40, 180), rng.uniform(0.01, 0.08)
        x, r = rng.uniform(1, 4000), rng.uniform(-600, 600)
        beta = 0.5 * (1 + math.sqrt(1 - ct)) / math.sqrt(1 - ct)
        sigma = k * x + 0.2 * math.sqrt(beta) * d0
        arg = 1 - ct / (8 * (sigma / d0) ** 2)
        deficit = (1 - math.sqrt(max(arg, 0.0))) * math.exp(-r * r / (2 * sigma * sigma))
        worst = max(worst, rel(beta_of_ct(ct), beta), rel(wake_sigma(x, ct, d0, k), sigma))
        if deficit > 0:
            worst = max(worst, rel(gaussian_deficit(x, r, ct, d0, k), deficit))
    x_half = (0.5 * D0 - 0.2 * math.sqrt(beta_of_ct(0.8)) * D0) / 0.03
    derived = [(gaussian_deficit(x_half, 0.0, 0.8, D0, 0.03), 0.22540),
               (wake_sigma(400, 0.8, D0, 0.03), 32.352), (beta_of_ct(0.8), 1.61803)]
    worst_derived = max(rel(a, b) for a, b in derived)
    dt = time.perf_counter() - t0
    record_property("detail", f"oracle rel err {worst:.1e}, derived values rel err {worst_derived:.1e}, {dt:.2f}s")
    assert worst <= 1e-12 and worst_derived <= 1e-4 and dt < 1.0


def _rotate(positions, phi):
    t = math.radians(phi)
    rot = np.array([[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]])
    return positions @ rot.T


def test_criterion_02_simulator_symmetry(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    err = {"order": 0.0, "rotation": 0.0, "mirror": 0.0}
    bounds_ok = True
    for _ in range(500):
        sc = random_farm(rng)
        c = sc.conditions
        base = simulate_farm(sc)
        u = base.effective_speeds
        bounds_ok &= bool(np.all((u >= 0) & (u <= c.wind_speed)) and np.all(base.powers >= 0))
        bounds_ok &= base.total_power == float(base.powers.sum())

        p = rng.permutation(sc.n_turbines)
        perm = simulate_farm(make_scenario(sc.positions[p], sc.yaw[p], c.wind_speed, c.wind_direction,
                                           c.turbulence_intensity))
        err["order"] = max(err["order"], np.max(np.abs(perm.powers - base.powers[p])) / base.total_power)

        phi = rng.uniform(0, 360)
        rot = simulate_farm(make_scenario(_rotate(sc.positions, phi), sc.yaw, c.wind_speed,
                                          c.wind_direction + phi, c.turbulence_intensity))
        err["rotation"] = max(err["rotation"], np.max(np.abs(rot.powers - base.powers)) / base.total_power)

        x, y = to_wind_frame(sc.positions, c.wind_direction)
        mirrored = make_scenario(from_wind_frame(x, -y, c.wind_direction), -sc.yaw, c.wind_speed,
                                 c.wind_direction, c.turbulence_intensity)
        err["mirror"] = max(err["mirror"], rel(simulate_farm(mirrored).total_power, base.total_power))
    dt = time.perf_counter() - t0
    record_property("detail", ", ".join(f"{k} {v:.1e}" for k, v in err.items())
                    + f", bounds {'ok' if bounds_ok else 'VIOLATED'}, {dt:.1f}s")
    assert err["order"] <= 1e-12 and err["rotation"] <= 1e-9 and err["mirror"] <= 1e-9
    assert bounds_ok and dt < 30


def test_criterion_03_graph_edges(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    mismatches = 0
    for i in range(200):
        sc = random_farm(rng, n=int(rng.integers(2, 60)))
        mismatches += build_directed_graph(sc).edge_set() != brute_force_edges(
            sc.positions, sc.conditions.wind_direction)
    dt = time.perf_counter() - t0
    record_property("detail", f"{mismatches}/200 layouts differ from the O(N^2) oracle, {dt:.1f}s")
    assert mismatches == 0 and dt < 10


def test_criterion_04_autodiff(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    errs = {}

    def wsum(out):
        w = Tensor(np.random.default_rng(0).standard_normal(out.shape))
        return ad.tsum(out * w)

    a, b = Tensor(rng.standard_normal((4, 6, 8)), True), Tensor(rng.standard_normal((4, 6, 8)), True)
    g, bb = Tensor(rng.standard_normal(8), True), Tensor(rng.standard_normal(8), True)
    w = Tensor(rng.standard_normal((8, 5)), True)
    mask = rng.uniform(size=(4, 6, 8)) < 0.3
    wq, wk, wv, wo = (Tensor(rng.standard_normal((8, 8)) / 3, True) for _ in range(4))
    bo = Tensor(rng.standard_normal(8), True)
    keys = np.ones((4, 6), bool)
    keys[:, 4:] = False
    e = Tensor(rng.standard_normal((7, 3)), True)
    rows = np.array([0, 2, 2, 6, 1])
    seg = np.array([0, 0, 2, 1, 2, 2, 0])
    ops = {
        "matmul": (lambda: ad.matmul(a, w), [a, w]),
        "add": (lambda: ad.add(a, b), [a, b]),
        "scale": (lambda: ad.scale(a, -1.3), [a]),
        "concat": (lambda: ad.concat([a, b]), [a, b]),
        "softmax": (lambda: ad.softmax(a), [a]),
        "layer_norm": (lambda: ad.layer_norm(a, g, bb), [a, g, bb]),
        "gelu": (lambda: ad.gelu(a), [a]),
        "masked_fill": (lambda: ad.masked_fill(a, mask, 0.0), [a]),
        "mean": (lambda: ad.mean(a, axis=1), [a]),
        "mul": (lambda: ad.mul(a, b), [a, b]),
        "neg": (lambda: ad.neg(a), [a]),
        "reshape": (lambda: ad.reshape(a, (24, 8)), [a]),
        "transpose": (lambda: ad.transpose(a, (2, 0, 1)), [a]),
        "sum": (lambda: ad.tsum(a, axis=2, keepdims=True), [a]),
        "attention": (lambda: ad.multi_head_attention(a, wq, wk, wv, wo, bo, key_mask=keys, n_heads=2),
                      [a, wq, wk, wv, wo, bo]),
        "gather_rows": (lambda: ad.gather_rows(e, rows), [e]),
        "segment_sum": (lambda: ad.segment_sum(e, seg, 3), [e]),
    }
    for name, (f, params) in ops.items():
        errs[name] = grad_check(lambda: wsum(f()), params)
    y = rng.standard_normal((4, 6, 8))
    errs["mse_loss"] = grad_check(lambda: ad.mse_loss(a, y, mask), [a])

    # full training loss over a 3-scenario padded batch: every coordinate of a
    # narrow 2-block model, then 256 random coordinates per tensor of the toy model
    scs = [random_farm(rng, n=int(rng.integers(2, 6))) for _ in range(3)]
    stats = fit_stats(scs)
    batch = normalize(to_dense(scs, n_max=8), stats)
    target = rng.uniform(0, 1, batch.mask.shape)
    narrow = TransformerConfig(n_blocks=2, n_heads=2, hidden_dim=16, encoder_hidden=16,
                               decoder_hidden=16, ffn_hidden=16)
    for name, cfg, cap in (("narrow model", narrow, None), ("toy model", TOY, 256)):
        model = GraphTransformer(cfg, stats, seed=4)
        errs[name] = grad_check(lambda: ad.mse_loss(model.forward(batch), target, batch.mask),
                                list(model.params.values()), max_entries=cap)
    dt = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    record_property("detail", f"max rel err {errs[worst]:.1e} ({worst}), {len(errs)} checks; "
                    f"toy model {errs['toy model']:.1e}, {dt:.0f}s")
    assert all(v <= 1e-4 for v in errs.values()) and dt < 120


def test_criterion_05_architecture_invariants(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    m = GraphTransformer(TOY, seed=5)
    perm_err = pad_err = row_err = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 30))
        X = rng.standard_normal((1, n, 5))
        mask = np.ones((1, n), bool)
        b = DenseBatch(X, mask, np.array([n]))
        y, maps = m.forward(b, want_attention=True)
        p = rng.permutation(n)
        yp = m.forward(DenseBatch(X[:, p], mask[:, p], b.n_real)).data
        perm_err = max(perm_err, np.max(np.abs(yp - y.data[:, p])))
        pad = int(rng.integers(1, 40))
        X2 = np.concatenate([X, np.zeros((1, pad, 5))], axis=1)
        m2 = np.concatenate([mask, np.zeros((1, pad), bool)], axis=1)
        y2, maps2 = m.forward(DenseBatch(X2, m2, b.n_real), want_attention=True)
        pad_err = max(pad_err, np.max(np.abs(y2.data[:, :n] - y.data)), np.max(np.abs(y2.data[:, n:])))
        for w in maps + maps2:
            row_err = max(row_err, np.max(np.abs(w.sum(axis=-1) - 1.0)))
    gm = GraphNetwork(GnnConfig(), seed=5)
    gnn_exact = True
    for _ in range(10):
        sc = random_farm(rng, n=int(rng.integers(2, 20)))
        g = build_directed_graph(sc)
        p = rng.permutation(g.n_vertices)
        inv = np.argsort(p)
        ep = rng.permutation(g.n_edges)
        gp = FarmGraph(g.v[p], inv[g.edge_index][ep].reshape(-1, 2), g.e[ep].reshape(-1, 2), g.u)
        gnn_exact &= bool(np.array_equal(gnn_forward(gp, gm), gnn_forward(g, gm)[p]))
    dt = time.perf_counter() - t0
    record_property("detail", f"permutation {perm_err:.1e}, padding {pad_err:.1e}, "
                    f"attention rows {row_err:.1e}, GNN relabel {'exact' if gnn_exact else 'INEXACT'}, {dt:.1f}s")
    assert perm_err <= 1e-10 and pad_err <= 1e-10 and row_err <= 1e-6 and gnn_exact and dt < 60


def test_criterion_06_desk_training(record_property, desk_run):
    res, sp, train_s = desk_run
    held_out = evaluate(res.model, sp["test"])

    t0 = time.perf_counter()
    recs = gen_standard(32, DatasetRanges(n_turbines=(2, 10)), seed=11)
    tc = TrainConfig(batch_size=32, total_steps=2000, max_lr=3e-3, warmup_steps=100,
                     weight_decay=0.0, eval_every=100)
    overfit = evaluate(train("transformer", TOY, tc, recs).model, recs)["mse"]
    dt = train_s + time.perf_counter() - t0
    record_property("detail", f"held-out mean accuracy {held_out['mean_accuracy']:.4f} "
                    f"(min {held_out['min_accuracy']:.3f}, {held_out['n_scenarios']} scenarios), "
                    f"overfit-32 MSE {overfit:.1e}, {dt / 60:.1f} min")
    assert held_out["mean_accuracy"] >= 0.95 and overfit <= 1e-4 and dt <= 7200


def test_criterion_07_ga_vs_grid(record_property):
    t0 = time.perf_counter()
    sc = make_scenario([[0, 0], [5 * D0, 0]], wind_speed=10.0, wind_direction=270.0)
    grid = np.arange(-30, 31, dtype=float)
    g1, g2 = np.meshgrid(grid, grid, indexing="ij")
    chrom = np.stack([g1.ravel(), g2.ravel()], axis=1)
    powers = SimulatorBackend(sc)(chrom)
    best_grid = powers.max()
    opt = chrom[powers == best_grid][0]
    zero = simulate_farm(sc).total_power
    monotone = True
    results = []
    for seed in range(3):
        best, hist = run_ga(SimulatorBackend(sc), 2, GaConfig(population_size=100, n_generations=50, seed=seed))
        monotone &= bool(np.all(np.diff(hist.best_fitness) >= 0))
        results.append(best)
    best = results[0]
    gap = (best_grid - best.fitness) / best_grid
    # the optimum is mirror-symmetric in yaw; compare magnitudes
    angle_err = abs(abs(best.chromosome[0]) - abs(opt[0]))
    dt = time.perf_counter() - t0
    record_property("detail", f"GA {best.fitness / 1e3:.1f} kW vs grid {best_grid / 1e3:.1f} kW "
                    f"(gap {gap * 100:+.2f}%), zero-yaw {zero / 1e3:.1f} kW, upstream yaw "
                    f"{best.chromosome[0]:+.1f} vs {opt[0]:+.0f} deg, elitism monotone "
                    f"{'yes' if monotone else 'NO'}, {dt:.1f}s")
    assert gap <= 0.005 and best.fitness > zero and monotone and angle_err <= 2.0 and dt < 300


def _string_scenario(seed=8, wind_speed=10.0, heading=60.0):
    """Five-turbine single string with the wind blowing along it."""
    pos = generate_layout("single_string", LayoutParams(5, seed=seed, heading=heading))
    return make_scenario(pos, wind_speed=wind_speed, wind_direction=(heading + 180.0) % 360.0, ti=0.08)


def _surrogate_ratio(model, sc):
    cfg = GaConfig(population_size=100, n_generations=50, seed=0)
    sim_best, _ = run_ga(SimulatorBackend(sc), sc.n_turbines, cfg)
    sur_best, _ = run_ga(SurrogateBackend(model, sc), sc.n_turbines, cfg)
    return simulate_farm(sc.with_yaw(sur_best.chromosome)).total_power / sim_best.fitness, sim_best


def test_criterion_08_surrogate_in_the_loop(record_property, optimisation_surrogate):
    model, held_out, train_s = optimisation_surrogate
    t0 = time.perf_counter()
    sc = _string_scenario()
    ratio, sim_best = _surrogate_ratio(model, sc)
    zero = simulate_farm(sc).total_power
    dt = time.perf_counter() - t0
    # reported only: the same comparison on other strings, speeds and headings
    others = [_surrogate_ratio(model, _string_scenario(s, u, h))[0]
              for s, u, h in ((1, 9.0, 0.0), (2, 12.0, 120.0), (3, 11.0, 200.0), (4, 8.5, 300.0))]
    record_property("detail", f"surrogate champion under simulator = {ratio * 100:.2f}% of simulator "
                    f"champion {sim_best.fitness / 1e3:.1f} kW (zero yaw {zero / sim_best.fitness * 100:.1f}%), "
                    f"GA loop {dt:.1f}s; other strings "
                    f"{', '.join(f'{r * 100:.1f}%' for r in others)}; surrogate held-out accuracy "
                    f"{held_out['mean_accuracy']:.4f}, trained in {train_s / 60:.0f} min")
    assert ratio >= 0.95 and dt <= 600


def test_criterion_09_batched_surrogate(record_property, desk_run):
    model = desk_run[0].model
    pos = generate_layout("cluster", LayoutParams(50, seed=9))
    sc = make_scenario(pos, wind_speed=11.0, wind_direction=200.0, ti=0.1)
    rng = np.random.default_rng(9)
    chrom = rng.uniform(-30, 30, (200, 50))
    batched = surrogate_fitness(model, sc, chrom)
    single = np.array([surrogate_fitness(model, sc, c[None])[0] for c in chrom])
    err = float(np.max(np.abs(batched - single) / np.abs(single)))
    rep = bench(sc, model, population=200, seed=9)
    record_property("detail", f"batched vs single rel err {err:.1e}; per generation simulator "
                    f"{rep['simulator_s_per_generation']:.3f}s, surrogate "
                    f"{rep['surrogate_s_per_generation']:.3f}s, speedup {rep['speedup']:.1f}x")
    assert err <= 1e-5 and rep["surrogate_s_per_generation"] < rep["simulator_s_per_generation"]


def _minima(rows, k=2, sep=30.0):
    dirs = np.array([r["direction_deg"] for r in rows])
    p = np.array([r["total_power_w"] for r in rows])
    found = []
    for i in np.argsort(p, kind="stable"):
        if all(abs((dirs[i] - f + 180) % 360 - 180) > sep for f in found):
            found.append(dirs[i])
        if len(found) == k:
            break
    return found


def test_criterion_10_sweep(record_property):
    t0 = time.perf_counter()
    one = sweep(make_scenario([[0, 0]], wind_speed=9.0))["rows"]
    constant = len({r["total_power_w"] for r in one}) == 1
    worst = 0.0
    for bearing in (90.0, 37.0, 311.5):
        b = math.radians(bearing)
        pair = make_scenario([[0, 0], [6 * D0 * math.sin(b), 6 * D0 * math.cos(b)]], wind_speed=9.0)
        rows = sweep(pair)["rows"]
        assert len(rows) == 360
        for m in _minima(rows):
            worst = max(worst, min(abs((m - t + 180) % 360 - 180) for t in (bearing, bearing + 180)))
        mins = _minima(rows)
        hit = {min((bearing, bearing + 180), key=lambda t: abs((m - t + 180) % 360 - 180)) for m in mins}
        assert len(hit) == 2
    dt = time.perf_counter() - t0
    record_property("detail", f"360 rows, single turbine {'constant' if constant else 'VARIES'}, "
                    f"pair minima within {worst:.0f} deg of bearing/reciprocal, {dt:.1f}s")
    assert constant and worst <= 3.0 and dt < 60


def test_criterion_11_dataset_reproducibility(record_property, tmp_path):
    ranges = DatasetRanges(n_turbines=(2, 20))
    ok = True
    names = []
    for kind, compressed in (("standard", False), ("standard", True), ("enhanced", False)):
        name = f"{kind}{'_gz' if compressed else ''}"
        kw = {"ga_config": GaConfig(population_size=20, n_generations=5), "samples_per_scenario": 5} \
            if kind == "enhanced" else {}
        build_dataset(tmp_path / "a", name, kind, 40 if kind == "standard" else 10, seed=21,
                      ranges=ranges, compressed=compressed, **kw)
        manifest, splits = read_dataset(tmp_path / "a", name)
        check_disjoint(splits)
        regenerate(manifest, tmp_path / "b")
        for f in (tmp_path / "a").glob(f"{name}.*"):
            ok &= f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
        names.append(name)
    record_property("detail", f"{', '.join(names)}: regeneration "
                    f"{'byte-identical' if ok else 'DIFFERS'}, splits disjoint")
    assert ok
