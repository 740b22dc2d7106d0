"""Forgetting prevention: the same pursuit with and without the penalty.

Learning a new base updates the shared hypernetwork. Without the anchoring
term (beta = 0) those updates silently corrupt the decoder weights generated
for previously registered objects; gamma_f measures the fraction of the
registry that has dropped below the quality bar tau by the end of the run.
"""

from objpursuit import evaluation as ev, pursuit as pe, scenesim as sim
from objpursuit.config import StepBudgets
from objpursuit.objectives import QualityConfig

pre, pur, uns = sim.make_object_library(seed=7, n_pretrain=4, n_pursuit=6,
                                        n_unseen=2, n_near_duplicates=1)
library = pre + pur + uns
datasets = {s.object_id: sim.sample_marginal(s, library, n=80, seed=1234)
            for s in pre + pur}
budgets = StepBudgets(express=100, base=400, pretrain=1200, batch=16)

print("pretraining once, pursuing twice (beta = 0 vs beta = 0.04)...")
enc, psi, zs = pe.pretrain_warmup([datasets[s.object_id] for s in pre],
                                  budgets.pretrain, budgets=budgets, seed=1234)
enc_snap, psi_snap = enc.snapshot(), psi.snapshot()

for beta in (0.0, 0.04):
    enc.restore(enc_snap)
    psi.restore(psi_snap)
    config = QualityConfig(tau=0.5, beta=beta)
    state = pe.redundancy_sweep(enc, psi, zs,
                                [datasets[s.object_id] for s in pre],
                                config=config, budgets=budgets, seed=1234)
    before = {e.object_id: e.quality for e in state.registry}
    for s in pur:
        pe.pursue_one(state, datasets[s.object_id])
    print(f"\nbeta = {beta}")
    for entry in state.registry:
        if entry.object_id in before:
            q = ev.obj.expected_quality(state.enc, state.psi,
                                        entry.mu @ state.basis_matrix(),
                                        datasets[entry.object_id].holdout)
            print(f"  {entry.object_id}: registered {before[entry.object_id]:.3f}"
                  f" -> now {q:.3f}")
    gamma = ev.forgetting_rate(state, datasets)
    print(f"  gamma_f = {gamma:.3f} "
          f"({'forgot most of the registry' if gamma > 0.5 else 'registry intact'})")
