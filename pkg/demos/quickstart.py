"""Quickstart: render scenes, pretrain briefly, then watch pursuit decide.

Runs at toy sizes (4 pretrain objects, 6 pursuit objects, short budgets) so
it finishes in a couple of minutes; expect rougher qualities than the full
configuration.
"""

import numpy as np

from objpursuit import evaluation as ev, pursuit as pe, scenesim as sim
from objpursuit.config import OptimConfig, StepBudgets
from objpursuit.objectives import QualityConfig

pre, pur, uns = sim.make_object_library(seed=7, n_pretrain=4, n_pursuit=6,
                                        n_unseen=2, n_near_duplicates=1)
library = pre + pur + uns

print("== the cast ==")
for spec in library:
    print(f"  {spec.object_id:18s} {spec.family:9s} {spec.texture[0]:8s} "
          f"hue={spec.color[0]:.2f}")

print("\n== one rendered sample ==")
ds0 = sim.sample_marginal(pre[0], library, n=10, seed=1)
sample = ds0.train[0]
print(f"  image {sample.image.shape}, mask covers "
      f"{int(sample.mask.sum())} of {sample.mask.size} pixels")

print("\n== pretraining (short) ==")
datasets = {s.object_id: sim.sample_marginal(s, library, n=80, seed=1234)
            for s in pre + pur}
budgets = StepBudgets(express=100, base=400, pretrain=1200, batch=16)
config = QualityConfig(tau=0.5)
enc, psi, zs = pe.pretrain_warmup([datasets[s.object_id] for s in pre],
                                  budgets.pretrain, config=config,
                                  budgets=budgets, seed=1234)
state = pe.redundancy_sweep(enc, psi, zs, [datasets[s.object_id] for s in pre],
                            config=config, budgets=budgets, seed=1234)
for entry in state.registry:
    print(f"  {entry.object_id}: {entry.provenance}, quality {entry.quality:.3f}")

print("\n== pursuit ==")
events = [pe.pursue_one(state, datasets[s.object_id]) for s in pur]
for e in events:
    extra = ", ".join(f"{k}={v:.3f}" for k, v in e.scores.items()
                      if isinstance(v, float))
    print(f"  {e.object_id}: {e.outcome:25s} ({extra})")

report = ev.dynamics_metrics(events, state, datasets)
print(f"\n|z|/N={report.base_fraction:.2f}  |mu|/N={report.learned_fraction:.2f}  "
      f"R_e={report.expressed_rate:.2f}  R_f={report.failed_rate:.2f}  "
      f"A_mu={report.mean_quality:.3f}")
