"""``wakeforge`` command-line entry point.

Every subcommand is deterministic given its flags. On failure the process
exits non-zero and prints ``{"error": ..., "message": ...}`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from . import dataset as ds
from .files import field_to_csv, load_scenario, result_to_dict, write_json
from .ga import GaConfig
from .layout import LayoutParams, LayoutStyle, generate_layout, validate_layout
from .models import GnnConfig, TransformerConfig, extract_attention
from .pipeline import bench, optimize, sweep, sweep_csv
from .schemas import validate
from .training import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train
from .wake import WakeParams, lattice, sample_wake_field, simulate_farm, to_wind_frame


class CliError(Exception):
    pass


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _wake_params(args) -> WakeParams:
    return WakeParams(k=args.k, kd=args.kd)


def _model(args):
    if not getattr(args, "checkpoint", None):
        raise CliError("this command needs --checkpoint")
    return load_checkpoint(args.checkpoint)


# ---------------------------------------------------------------------------

def cmd_simulate(args):
    sc = load_scenario(args.scenario)
    params = _wake_params(args)
    res = simulate_farm(sc, params)
    write_json(args.out, result_to_dict(res), "result")
    if args.field_out:
        x, y = sc.positions[:, 0], sc.positions[:, 1]
        m = args.field_margin * sc.spec.rotor_diameter
        pts = lattice(x.min() - m, x.max() + m, y.min() - m, y.max() + m, args.field_res, args.field_res)
        uw = sample_wake_field(sc, params, pts, res)
        _write_text(args.field_out, field_to_csv(pts, uw))


def cmd_layout(args):
    params = LayoutParams(args.n, min_spacing=args.min_spacing, seed=args.seed)
    pos = generate_layout(args.style, params)
    report = validate_layout(pos, params.d0, params.min_spacing)
    if not report.ok:
        raise CliError(f"generated layout violates spacing: {report.violations[:3]}")
    write_json(args.out, {"positions": pos.tolist()})
    if args.out not in (None, "-"):
        manifest = {"style": LayoutStyle(args.style).value, "n_turbines": args.n,
                    "min_spacing": args.min_spacing, "seed": args.seed, "d0": params.d0,
                    "layout_file": Path(args.out).name}
        write_json(Path(args.out).with_suffix(".manifest.json"), manifest)


def _ranges(args) -> ds.DatasetRanges:
    return ds.DatasetRanges(
        n_turbines=(args.min_turbines, args.max_turbines),
        wind_speed=(args.min_speed, args.max_speed),
        wind_direction=(args.min_direction, args.max_direction),
        ti=(args.min_ti, args.max_ti),
    )


def cmd_dataset(args, kind):
    ga = None
    if kind == "enhanced":
        ga = GaConfig(population_size=args.pop, n_generations=args.gens,
                      crossover_prob=args.crossover, mutation_rate=args.mutation)
    manifest, splits, paths = ds.build_dataset(
        args.out, args.name, kind, args.n, seed=args.seed, ranges=_ranges(args),
        params=_wake_params(args), ga_config=ga,
        samples_per_scenario=getattr(args, "samples", 25), compressed=args.gzip,
        workers=args.workers)
    # re-read to validate what was written
    ds.read_dataset(args.out, args.name)
    write_json("-", {"manifest": str(paths["manifest"]), "split_counts": manifest.split_counts})


def cmd_train(args):
    _, splits = ds.read_dataset(args.data, args.name)
    if args.kind == "transformer":
        mc = TransformerConfig(n_blocks=args.blocks, n_heads=args.heads, hidden_dim=args.dim,
                               encoder_hidden=args.mlp, decoder_hidden=args.mlp, ffn_hidden=args.mlp)
    else:
        mc = GnnConfig(n_blocks=args.blocks, width=args.mlp, vertex_latent=args.dim,
                       edge_latent=args.dim, global_latent=args.dim)
    tc = TrainConfig(batch_size=args.batch_size, total_steps=args.steps, max_lr=args.lr,
                     warmup_steps=args.warmup, seed=args.seed, eval_every=args.eval_every)
    res = train(args.kind, mc, tc, splits["train"], splits["val"])
    save_checkpoint(args.out, res.model, res.optimizer, args.steps,
                    meta={"dataset": args.name, "best_step": res.best_step})
    metrics = {"best_step": res.best_step, "best_val_mse": res.best_val,
               "val": evaluate(res.model, splits["val"]) if splits["val"] else None}
    write_json(args.metrics, metrics)


def cmd_eval(args):
    model = _model(args)
    _, splits = ds.read_dataset(args.data, args.name)
    write_json(args.out, evaluate(model, splits[args.split]))


def _ga_config(args) -> GaConfig:
    d = {}
    if args.ga_config:
        d = json.loads(Path(args.ga_config).read_text())
        validate("ga_config", d)
    for flag, key in (("pop", "population_size"), ("gens", "n_generations"),
                      ("crossover", "crossover_prob"), ("mutation", "mutation_rate"),
                      ("seed", "seed")):
        v = getattr(args, flag)
        if v is not None:
            d[key] = v
    return GaConfig(**d)


def cmd_optimize(args):
    sc = load_scenario(args.scenario)
    model = load_checkpoint(args.checkpoint) if args.checkpoint else None
    rep = optimize(sc, _ga_config(args), args.backend, model, _wake_params(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    champ = {"yaw": rep.champion.chromosome.tolist(), "fitness_w": rep.champion.fitness,
             "backend": rep.backend}
    write_json(out / "champion.json", champ, "champion")
    _write_text(out / "history.csv", rep.history.to_csv())
    write_json(out / "report.json", {"backend": rep.backend, "champion_w": rep.champion.fitness,
                                     **rep.cross})


def cmd_sweep(args):
    sc = load_scenario(args.scenario)
    model = load_checkpoint(args.checkpoint) if args.checkpoint else None
    if args.backend != "simulator" and model is None:
        raise CliError(f"backend {args.backend!r} needs --checkpoint")
    yaw = None
    if args.yaw:
        yaw = json.loads(Path(args.yaw).read_text())
        yaw = yaw["yaw"] if isinstance(yaw, dict) else yaw
    res = sweep(sc, args.step_deg, args.backend, model, _wake_params(args), yaw)
    _write_text(args.out, sweep_csv(res))
    if "summary" in res:
        if args.out in (None, "-"):
            sys.stderr.write(json.dumps(res["summary"]) + "\n")
        else:
            write_json(args.out + ".summary.json", res["summary"])


def cmd_attention(args):
    sc = load_scenario(args.scenario)
    model = _model(args)
    triples = extract_attention(model, sc, args.threshold)
    x, y = to_wind_frame(sc.positions, sc.conditions.wind_direction)
    write_json(args.out, {"threshold": args.threshold,
                          "edges": [{"i": i, "j": j, "score": s} for i, j, s in triples],
                          "streamwise": x.tolist(), "spanwise": y.tolist()})


def cmd_bench(args):
    sc = load_scenario(args.scenario)
    model = _model(args)
    write_json(args.out, bench(sc, model, population=args.pop, seed=args.seed or 0))


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wakeforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help=None):
        if out_help:
            sp.add_argument("--out", required=True, help=out_help)
        else:
            sp.add_argument("--out", default="-")
        sp.add_argument("--k", type=float, default=WakeParams.k, help="wake growth rate")
        sp.add_argument("--kd", type=float, default=WakeParams.kd, help="deflection decay constant")
        return sp

    s = common(sub.add_parser("simulate", help="simulate one scenario file"))
    s.add_argument("--scenario", required=True)
    s.add_argument("--field-out", help="CSV of x,y,uw on a lattice")
    s.add_argument("--field-res", type=int, default=60)
    s.add_argument("--field-margin", type=float, default=5.0, help="margin in rotor diameters")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("layout", help="generate a random layout")
    s.add_argument("--style", required=True, choices=[x.value for x in LayoutStyle])
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--min-spacing", type=float, default=3.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_layout)

    for kind in ("standard", "enhanced"):
        s = common(sub.add_parser(f"dataset-{kind}", help=f"generate the {kind} dataset"), "output directory")
        s.add_argument("--name", default=kind)
        s.add_argument("--n", type=int, required=True, help="number of scenarios")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--min-turbines", type=int, default=2)
        s.add_argument("--max-turbines", type=int, default=100)
        s.add_argument("--min-speed", type=float, default=8.0)
        s.add_argument("--max-speed", type=float, default=15.0)
        s.add_argument("--min-direction", type=float, default=0.0)
        s.add_argument("--max-direction", type=float, default=359.0)
        s.add_argument("--min-ti", type=float, default=0.05)
        s.add_argument("--max-ti", type=float, default=0.15)
        s.add_argument("--gzip", action="store_true")
        s.add_argument("--workers", type=int, default=1)
        if kind == "enhanced":
            s.add_argument("--samples", type=int, default=25)
            s.add_argument("--pop", type=int, default=100)
            s.add_argument("--gens", type=int, default=50)
            s.add_argument("--crossover", type=float, default=0.7)
            s.add_argument("--mutation", type=float, default=0.5)
        s.set_defaults(func=lambda a, k=kind: cmd_dataset(a, k))

    s = sub.add_parser("train", help="train a surrogate on a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--name", required=True)
    s.add_argument("--kind", choices=["transformer", "gnn"], default="transformer")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--metrics", default="-")
    s.add_argument("--steps", type=int, default=20000)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--warmup", type=int, default=1000)
    s.add_argument("--eval-every", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--blocks", type=int, default=2)
    s.add_argument("--heads", type=int, default=2)
    s.add_argument("--dim", type=int, default=64)
    s.add_argument("--mlp", type=int, default=128)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--name", required=True)
    s.add_argument("--split", choices=ds.SPLITS, default="test")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_eval)

    s = common(sub.add_parser("optimize", help="GA yaw optimisation"), "output directory")
    s.add_argument("--scenario", required=True)
    s.add_argument("--backend", choices=["simulator", "surrogate"], default="simulator")
    s.add_argument("--checkpoint")
    s.add_argument("--ga-config")
    s.add_argument("--pop", type=int)
    s.add_argument("--gens", type=int)
    s.add_argument("--crossover", type=float)
    s.add_argument("--mutation", type=float)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_optimize)

    s = common(sub.add_parser("sweep", help="total power over wind directions"))
    s.add_argument("--scenario", required=True)
    s.add_argument("--step-deg", type=float, default=1.0)
    s.add_argument("--backend", choices=["simulator", "surrogate", "both"], default="simulator")
    s.add_argument("--checkpoint")
    s.add_argument("--yaw", help="JSON file with a yaw list (or {\"yaw\": [...]})")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("attention", help="thresholded last-block attention edges")
    s.add_argument("--scenario", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--threshold", type=float, default=0.1)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_attention)

    s = sub.add_parser("bench", help="time simulator vs batched surrogate GA generations")
    s.add_argument("--scenario", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--pop", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # reported as machine-readable JSON
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
