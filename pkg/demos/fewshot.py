"""Few-shot learning: base-manifold search vs full latent-space search.

After a pursuit run the base codes span a manifold of "objects the system
understands". Learning an unseen object from 1 or 5 annotated images goes
better when the search is confined to that manifold (optimizing the mixing
coefficients mu) than when a fresh 16-d latent is optimized from scratch --
provided the manifold actually covers the new object. This toy run makes
the coverage condition visible: two of the unseen objects are near-
duplicates of pretraining objects (on-manifold) and one is genuinely novel
(off-manifold at this tiny scale, where only a handful of bases exist).
Expect the manifold to win on the near-duplicates and to be capped at the
nearest base's quality on the novel object; the full-scale experiment, with
a richer base set, shows the manifold advantage across the board.
"""

import numpy as np

from objpursuit import evaluation as ev, pursuit as pe, scenesim as sim
from objpursuit.config import StepBudgets
from objpursuit.objectives import QualityConfig

pre, pur, uns = sim.make_object_library(seed=7, n_pretrain=4, n_pursuit=6,
                                        n_unseen=3, n_near_duplicates=2)
library = pre + pur + uns
datasets = {s.object_id: sim.sample_marginal(s, library, n=80, seed=1234)
            for s in pre}
budgets = StepBudgets(express=100, base=400, pretrain=1500, fewshot=200, batch=16)
config = QualityConfig(tau=0.5)

print("pretraining...")
enc, psi, zs = pe.pretrain_warmup([datasets[s.object_id] for s in pre],
                                  budgets.pretrain, config=config,
                                  budgets=budgets, seed=1234)
state = pe.redundancy_sweep(enc, psi, zs, [datasets[s.object_id] for s in pre],
                            config=config, budgets=budgets, seed=1234)
print(f"bases: {state.n_bases}")

for n in (1, 5):
    rows = []
    for spec in uns:
        manifold = ev.fewshot_learn(state, spec, library, n, "manifold", seed=99)
        full = ev.fewshot_learn(state, spec, library, n, "full", seed=99)
        rows.append((spec.object_id, manifold, full))
    mean_m = float(np.mean([r[1] for r in rows]))
    mean_f = float(np.mean([r[2] for r in rows]))
    print(f"\nn = {n} annotated image(s); holdout quality on 40 fresh scenes")
    for oid, m, f in rows:
        print(f"  {oid}: manifold {m:.3f}  vs  full space {f:.3f}")
    print(f"  mean: manifold {mean_m:.3f} vs full {mean_f:.3f} "
          f"({mean_m / max(mean_f, 1e-9):.2f}x)")
