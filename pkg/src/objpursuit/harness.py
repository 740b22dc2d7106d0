"""High-level run orchestration shared by the CLI, the demos and the tests."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation as ev, pursuit as pe, scenesim as sim
from .config import RunConfig


def data_workers():
    return max(1, int(os.environ.get("OBJP_THREADS", "1")))


def build_library(cfg: RunConfig):
    return sim.make_object_library(
        cfg["seeds.library"],
        n_pretrain=cfg["counts.pretrain_objects"],
        n_pursuit=cfg["counts.pursuit_objects"],
        n_unseen=cfg["counts.unseen_objects"],
        n_near_duplicates=cfg["counts.near_duplicates"])


def build_datasets(specs, library, n, seed):
    """Marginal dataset per spec; parallel across objects, order-independent."""
    workers = data_workers()
    if workers == 1:
        return {s.object_id: sim.sample_marginal(s, library, n, seed) for s in specs}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda s: sim.sample_marginal(s, library, n, seed), specs))
    return {s.object_id: d for s, d in zip(specs, results)}


def run_pretrain(cfg: RunConfig, datasets_in_order, log=None) -> pe.PursuitState:
    """Warm-up joint training followed by the sequential redundancy sweep."""
    enc, psi, latents = pe.pretrain_warmup(
        datasets_in_order, cfg["steps.pretrain"], config=cfg.quality(),
        budgets=cfg.budgets(), optim=cfg.optim(), seed=cfg["seeds.data"], log=log)
    return pe.redundancy_sweep(enc, psi, latents, datasets_in_order,
                               config=cfg.quality(), budgets=cfg.budgets(),
                               optim=cfg.optim(), seed=cfg["seeds.data"])


def pursuit_order(object_ids, order_seed):
    rng = np.random.Generator(np.random.Philox(key=[order_seed & 0xFFFFFFFFFFFFFFFF, 0]))
    ids = list(object_ids)
    return [ids[int(i)] for i in rng.permutation(len(ids))]


def run_pursuit(state: pe.PursuitState, datasets_by_id, order, events_path=None):
    """Stream the ordered objects through pursue_one, logging events as JSONL."""
    events = []
    fh = open(events_path, "w") if events_path else None
    try:
        for object_id in order:
            event = pe.pursue_one(state, datasets_by_id[object_id])
            events.append(event)
            if fh:
                fh.write(json.dumps(event.to_json(), sort_keys=True) + "\n")
                fh.flush()
    finally:
        if fh:
            fh.close()
    return events


def write_csv(path, rows, fieldnames, comment=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def summary_row(cfg: RunConfig, report: ev.DynamicsReport, gamma_f):
    row = {"tau": cfg["quality.tau"], "alpha_express": cfg["quality.alpha_express"],
           "alpha_base": cfg["quality.alpha_base"], "beta": cfg["quality.beta"],
           "order_seed": cfg["seeds.order"], "gamma_f": gamma_f}
    row.update(report.as_row())
    return row

SUMMARY_FIELDS = ["tau", "alpha_express", "alpha_base", "beta", "order_seed",
                  "base_fraction", "learned_fraction", "expressed_rate",
                  "failed_rate", "mean_quality", "gamma_f", "n_presented"]


def write_run_meta(out_dir, cfg: RunConfig):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run-meta.json").write_text(json.dumps(cfg.to_json(), indent=1,
                                                      sort_keys=True))
