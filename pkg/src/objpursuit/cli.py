"""Command-line entry points tying simulator, pursuit engine and harnesses
into reproducible runs.

Subcommands: gen-data, pretrain, pursue, reid-eval, fewshot, sweep, report,
gradcheck.  Every subcommand reads an optional JSON config (flat dotted
keys), applies flag overrides, and writes run-meta.json with the resolved
values.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, evaluation as ev, harness, pursuit as pe, scenesim as sim
from .config import SCHEMA, make_config, parse_config
from .errors import ConfigError

SUBCOMMANDS = ("gen-data", "pretrain", "pursue", "reid-eval", "fewshot",
               "sweep", "report", "gradcheck")


def _add_common(p):
    p.add_argument("--config", type=str, default=None, help="JSON config file")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--margin", type=float, default=None,
                   help="registration hysteresis above tau")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--alpha-express", type=float, default=None)
    p.add_argument("--alpha-base", type=float, default=None)
    p.add_argument("--order-seed", type=int, default=None)
    p.add_argument("--library-seed", type=int, default=None)
    p.add_argument("--data-seed", type=int, default=None)
    p.add_argument("--samples", type=int, default=None, help="samples per object")
    p.add_argument("--pretrain-steps", type=int, default=None)
    p.add_argument("--base-steps", type=int, default=None)
    p.add_argument("--express-steps", type=int, default=None)


_FLAG_KEYS = {
    "out": "out.dir", "tau": "quality.tau", "margin": "quality.margin",
    "beta": "quality.beta",
    "alpha_express": "quality.alpha_express", "alpha_base": "quality.alpha_base",
    "order_seed": "seeds.order", "library_seed": "seeds.library",
    "data_seed": "seeds.data", "samples": "counts.samples_per_object",
    "pretrain_steps": "steps.pretrain", "base_steps": "steps.base",
    "express_steps": "steps.express",
}


def _resolve_config(args):
    cfg = parse_config(args.config) if args.config else make_config()
    overrides = dict(cfg.values)
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return make_config(overrides)


def _out_dir(cfg):
    out = Path(cfg["out.dir"])
    out.mkdir(parents=True, exist_ok=True)
    harness.write_run_meta(out, cfg)
    return out


def cmd_gen_data(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    pretrain, pursuit, unseen = harness.build_library(cfg)
    library = pretrain + pursuit + unseen
    n = cfg["counts.samples_per_object"]
    for group, specs in (("pretrain", pretrain), ("pursuit", pursuit),
                         ("unseen", unseen)):
        datasets = harness.build_datasets(specs, library, n, cfg["seeds.data"])
        for object_id, ds in datasets.items():
            sim.persist_dataset(ds, out / "data" / group / object_id)
    print(f"wrote datasets for {len(library)} objects under {out / 'data'}")
    return 0


def cmd_pretrain(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    pretrain, pursuit, unseen = harness.build_library(cfg)
    library = pretrain + pursuit + unseen
    datasets = harness.build_datasets(pretrain, library,
                                      cfg["counts.samples_per_object"],
                                      cfg["seeds.data"])
    state = harness.run_pretrain(cfg, [datasets[s.object_id] for s in pretrain])
    checkpoint.save_state(state, out / "warmup")
    qualities = [e.quality for e in state.registry]
    print(f"pretrained {len(pretrain)} objects -> {state.n_bases} bases, "
          f"mean holdout quality {np.mean(qualities):.3f}; checkpoint at {out / 'warmup'}")
    return 0


def cmd_pursue(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "warmup"
    state = checkpoint.load_state(ckpt)
    state.config = cfg.quality()
    state.budgets = cfg.budgets()
    state.optim = cfg.optim()
    pretrain, pursuit, unseen = harness.build_library(cfg)
    library = pretrain + pursuit + unseen
    datasets = harness.build_datasets(pursuit, library,
                                      cfg["counts.samples_per_object"],
                                      cfg["seeds.data"])
    order = harness.pursuit_order([s.object_id for s in pursuit], cfg["seeds.order"])
    events = harness.run_pursuit(state, datasets, order, out / "events.jsonl")
    checkpoint.save_state(state, out / "final")
    report = ev.dynamics_metrics(events, state, datasets)
    gamma_f = ev.forgetting_rate(state, datasets)
    harness.write_csv(out / "summary.csv", [harness.summary_row(cfg, report, gamma_f)],
                      harness.SUMMARY_FIELDS,
                      comment="one row per run: config, dynamics report, gamma_f")
    print(f"pursued {len(events)} objects: {state.n_bases} bases, "
          f"{state.n_registered} registered, A_mu {report.mean_quality:.3f}, "
          f"gamma_f {gamma_f:.3f}")
    return 0


def cmd_reid_eval(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    state = checkpoint.load_state(args.checkpoint)
    pretrain, pursuit, unseen = harness.build_library(cfg)
    library = pretrain + pursuit + unseen
    registered = {e.object_id for e in state.registry}
    seen = [s for s in pursuit if s.object_id in registered]
    rows = []
    for tau in (0.5, 0.6, 0.7, 0.8):
        rep = ev.reid_eval(state, seen, unseen, library, cfg["seeds.data"] + 1,
                           tau=tau)
        rows.append({k: rep[k] for k in
                     ("tau", "seen_recall", "seen_precision", "unseen_recall",
                      "unseen_precision", "unseen_claimed_seen",
                      "near_duplicate_claimed_seen", "fresh_unseen_claimed_seen")})
    harness.write_csv(out / "reid.csv", rows, list(rows[0].keys()),
                      comment="re-identification recall/precision per tau; "
                              "near-duplicate unseen objects tallied separately")
    print(f"wrote {out / 'reid.csv'}")
    return 0


def cmd_fewshot(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    state = checkpoint.load_state(args.checkpoint)
    pretrain, pursuit, unseen = harness.build_library(cfg)
    library = pretrain + pursuit + unseen
    rows = []
    for spec in unseen:
        for n in args.shots:
            for mode in ("manifold", "full"):
                q = ev.fewshot_learn(state, spec, library, n, mode,
                                     cfg["seeds.data"] + 2)
                rows.append({"object_id": spec.object_id, "n": n, "mode": mode,
                             "holdout_quality": q})
    harness.write_csv(out / "fewshot.csv", rows,
                      ["object_id", "n", "mode", "holdout_quality"],
                      comment="few-shot holdout quality per object, shot count, "
                              "and search mode (manifold vs full latent space)")
    print(f"wrote {out / 'fewshot.csv'}")
    return 0


def cmd_sweep(args):
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    values = [float(v) for v in args.values.split(",")]
    key = {"tau": "quality.tau", "beta": "quality.beta",
           "alpha-express": "quality.alpha_express",
           "alpha-base": "quality.alpha_base",
           "order-seed": "seeds.order"}[args.param]
    rows = []
    for value in values:
        overrides = dict(cfg.values)
        overrides[key] = int(value) if key == "seeds.order" else value
        overrides["out.dir"] = str(out / f"{args.param}_{value:g}")
        sub = make_config(overrides)
        sub_out = _out_dir(sub)
        state = checkpoint.load_state(args.checkpoint)
        state.config = sub.quality()
        state.budgets = sub.budgets()
        state.optim = sub.optim()
        pretrain, pursuit, unseen = harness.build_library(sub)
        library = pretrain + pursuit + unseen
        datasets = harness.build_datasets(pursuit, library,
                                          sub["counts.samples_per_object"],
                                          sub["seeds.data"])
        order = harness.pursuit_order([s.object_id for s in pursuit],
                                      sub["seeds.order"])
        events = harness.run_pursuit(state, datasets, order,
                                     sub_out / "events.jsonl")
        checkpoint.save_state(state, sub_out / "final")
        report = ev.dynamics_metrics(events, state, datasets)
        gamma_f = ev.forgetting_rate(state, datasets)
        rows.append(harness.summary_row(sub, report, gamma_f))
    harness.write_csv(out / "summary.csv", rows, harness.SUMMARY_FIELDS,
                      comment="one row per grid point: config, dynamics, gamma_f")
    print(f"swept {args.param} over {values}; wrote {out / 'summary.csv'}")
    return 0


def cmd_report(args):
    rows = []
    for path in args.inputs:
        with open(path) as fh:
            reader = csv.DictReader(r for r in fh if not r.startswith("#"))
            rows.extend(reader)
    if not rows:
        print("report: no input rows", file=sys.stderr)
        return 1
    metrics = ["base_fraction", "learned_fraction", "expressed_rate",
               "failed_rate", "mean_quality", "gamma_f"]
    values = {m: [float(r[m]) for r in rows] for m in metrics}
    out_rows = [
        {"stat": "mean", **{m: float(np.mean(values[m])) for m in metrics}},
        {"stat": "std_dev", **{m: float(np.std(values[m])) for m in metrics}},
    ]
    harness.write_csv(args.out or "report.csv", out_rows, ["stat"] + metrics,
                      comment=f"aggregate over {len(rows)} runs")
    print(f"aggregated {len(rows)} runs -> {args.out or 'report.csv'}")
    return 0


def cmd_gradcheck(args):
    from . import gradsuite
    results = gradsuite.run_suite(seed=args.seed)
    failures = 0
    for name, err, tol in results:
        status = "ok" if err < tol else "FAIL"
        failures += status == "FAIL"
        print(f"{status:4s} {name:40s} rel_err={err:.3e} tol={tol:.0e}")
    return 1 if failures else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="objpursuit",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        if name not in ("report", "gradcheck"):
            _add_common(p)
        if name in ("pursue", "reid-eval", "fewshot", "sweep"):
            p.add_argument("--checkpoint", type=str, default=None,
                           required=name != "pursue")
        if name == "fewshot":
            p.add_argument("--shots", type=int, nargs="+", default=[1, 5])
        if name == "sweep":
            p.add_argument("--param", required=True,
                           choices=["tau", "beta", "alpha-express", "alpha-base",
                                    "order-seed"])
            p.add_argument("--values", required=True,
                           help="comma-separated grid values")
        if name == "report":
            p.add_argument("inputs", nargs="+", help="summary.csv files")
            p.add_argument("--out", type=str, default=None)
        if name == "gradcheck":
            p.add_argument("--seed", type=int, default=0)
    return parser


_HANDLERS = {
    "gen-data": cmd_gen_data, "pretrain": cmd_pretrain, "pursue": cmd_pursue,
    "reid-eval": cmd_reid_eval, "fewshot": cmd_fewshot, "sweep": cmd_sweep,
    "report": cmd_report, "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if argv and argv[0] not in SUBCOMMANDS and not argv[0].startswith("-"):
        parser.print_usage(sys.stderr)
        print(f"unknown subcommand {argv[0]!r}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
