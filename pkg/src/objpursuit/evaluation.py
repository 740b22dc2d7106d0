"""Experiment harnesses: pursuit dynamics, re-identification precision and
recall, forgetting rate, few-shot learning, and base-coefficient ranking."""

from __future__ import annotations

import dataclasses

import numpy as np

from . import nets, numerics as nm, objectives as obj, pursuit as pe, scenesim as sim
from .numerics import Tensor

FEWSHOT_HOLDOUT = 40


@dataclasses.dataclass
class DynamicsReport:
    base_fraction: float     # |z| / N
    learned_fraction: float  # |mu| / N
    expressed_rate: float    # R_e
    failed_rate: float       # R_f: redundant-after-training + unqualified
    mean_quality: float      # A_mu under the final hypernetwork
    n_presented: int

    def as_row(self):
        return {"base_fraction": self.base_fraction,
                "learned_fraction": self.learned_fraction,
                "expressed_rate": self.expressed_rate,
                "failed_rate": self.failed_rate,
                "mean_quality": self.mean_quality,
                "n_presented": self.n_presented}


def _count(events, outcome):
    return sum(1 for e in events if e.outcome == outcome)


def dynamics_metrics(events, state: pe.PursuitState, datasets_by_id) -> DynamicsReport:
    """Aggregate one pursuit run; quality is evaluated under the final psi."""
    if not events:
        raise ValueError("dynamics_metrics: empty event sequence")
    n = len(events)
    new_base = _count(events, "new_base")
    expressed = _count(events, "expressed")
    redundant = _count(events, "redundant_after_training")
    unqualified = _count(events, "unqualified")
    qualities = []
    for entry, z in zip(state.registry, state.registry_latents()):
        ds = datasets_by_id[entry.object_id]
        qualities.append(obj.expected_quality(state.enc, state.psi, z, ds.holdout))
    return DynamicsReport(
        base_fraction=new_base / n,
        learned_fraction=(expressed + new_base + redundant) / n,
        expressed_rate=expressed / n,
        failed_rate=(redundant + unqualified) / n,
        mean_quality=float(np.mean(qualities)) if qualities else 0.0,
        n_presented=n)


def forgetting_rate(state: pe.PursuitState, datasets_by_id) -> float:
    """Fraction of registered objects now scoring below tau (gamma_f)."""
    if not state.registry:
        raise ValueError("forgetting_rate: empty registry")
    below = 0
    for entry, z in zip(state.registry, state.registry_latents()):
        ds = datasets_by_id[entry.object_id]
        q = obj.expected_quality(state.enc, state.psi, z, ds.holdout)
        below += q < state.config.tau
    return below / len(state.registry)


def reid_eval(state: pe.PursuitState, seen_specs, unseen_specs, library, seed,
              samples_per_object=100, tau=None):
    """Present fresh datasets for seen and unseen objects and score Eq.-2 calls.

    Recall/precision follow the all-test-objects definitions: seen recall is
    the fraction of seen objects claimed seen with the correct identity;
    seen precision divides by every object claimed seen.  Near-duplicate
    unseen objects (ids prefixed 'dup_') claimed seen are tallied apart.
    """
    tau = state.config.tau if tau is None else tau
    rows, claimed_seen_total, correct_seen = [], 0, 0
    dup_claimed, vanilla_claimed, unseen_claimed = 0, 0, 0
    for spec in list(seen_specs) + list(unseen_specs):
        ds = sim.sample_marginal(spec, library, samples_per_object, seed)
        best_i, best = None, float("-inf")
        for i, z in enumerate(state.registry_latents()):
            q = obj.expected_quality(state.enc, state.psi, z, ds.holdout)
            if q > best:
                best_i, best = i, q
        claimed = bool(state.registry) and best >= tau
        identity = state.registry[best_i].object_id if claimed else None
        is_seen = spec in seen_specs
        rows.append({"object_id": spec.object_id, "is_seen": is_seen,
                     "claimed_seen": claimed, "identity": identity,
                     "max_score": best if state.registry else None})
        if claimed:
            claimed_seen_total += 1
            if is_seen:
                correct_seen += identity == spec.object_id
            else:
                unseen_claimed += 1
                if spec.object_id.startswith("dup_"):
                    dup_claimed += 1
                else:
                    vanilla_claimed += 1
    n_seen, n_unseen = len(list(seen_specs)), len(list(unseen_specs))
    claimed_unseen_total = n_seen + n_unseen - claimed_seen_total
    unseen_correct = n_unseen - unseen_claimed
    report = {
        "tau": tau,
        "seen_recall": correct_seen / n_seen if n_seen else None,
        "seen_precision": (correct_seen / claimed_seen_total
                           if claimed_seen_total else None),
        "unseen_recall": unseen_correct / n_unseen if n_unseen else None,
        "unseen_precision": (unseen_correct / claimed_unseen_total
                             if claimed_unseen_total else None),
        "unseen_claimed_seen": unseen_claimed,
        "near_duplicate_claimed_seen": dup_claimed,
        "fresh_unseen_claimed_seen": vanilla_claimed,
        "rows": rows,
    }
    if n_unseen == 0:
        report["unseen_precision"] = None
    return report


def fewshot_learn(state: pe.PursuitState, target, library, n, mode, seed):
    """Learn a new object's representation from n images; psi and enc frozen.

    ``mode`` is 'manifold' (optimize the m base coefficients) or 'full'
    (optimize the latent code directly).  Returns holdout quality over a
    fresh 40-sample holdout.
    """
    if n < 1:
        raise ValueError("fewshot_learn: need n >= 1")
    if mode not in ("manifold", "full"):
        raise ValueError(f"fewshot_learn: unknown mode {mode!r}")
    if mode == "manifold" and not state.bases:
        raise ValueError("fewshot_learn: manifold mode needs at least one base")
    ds = sim.sample_marginal(target, library, n + FEWSHOT_HOLDOUT, seed)
    samples = list(ds.train) + list(ds.holdout)
    train, holdout = samples[:n], samples[n:n + FEWSHOT_HOLDOUT]
    rng = np.random.Generator(np.random.Philox(
        key=[(seed * 0x9E3779B97F4A7C15 + n) & 0xFFFFFFFFFFFFFFFF, 0]))
    basis = Tensor(state.basis_matrix())
    if mode == "manifold":
        var = Tensor(pe.best_base_init(state, state.psi, train), requires_grad=True)
    else:
        var = Tensor(rng.normal(0.0, 1.0, size=nets.LATENT_DIM) * pe.Z_INIT_SCALE,
                     requires_grad=True)
    opt = pe._new_adam([var], state.optim)
    state.psi.set_requires_grad(False)
    try:
        for _ in range(state.budgets.fewshot):
            batch = [train[int(i)] for i in
                     rng.integers(0, len(train), size=min(state.budgets.batch, 16))]
            z = nets.compose_latent(var, basis) if mode == "manifold" else var
            pred = nets.segment(state.enc, nets.generate_weights(state.psi, z),
                                nets.batch_images(batch))
            # Pure segmentation objective: with a handful of training images
            # the constant-magnitude l1 pull would dominate the data gradient
            # and drag the variable to zero before it can fit anything.
            loss = obj.training_loss(pred, nets.batch_masks(batch),
                                     sparsity_vec=None, sparsity_coef=0.0,
                                     weight_cap=state.config.bce_weight_cap)
            nm.assert_finite(loss, "fewshot loss")
            nm.zero_grads([var])
            loss.backward()
            nm.adam_step(opt)
    finally:
        state.psi.set_requires_grad(True)
    z_val = var.data @ state.basis_matrix() if mode == "manifold" else var.data
    return obj.expected_quality(state.enc, state.psi, z_val, holdout)


def rank_bases(mu, k):
    """Top-k (base index, coefficient) pairs by descending coefficient.

    Ties break toward the lower index.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if k > mu.shape[0]:
        raise ValueError(f"rank_bases: k={k} exceeds embedding length {mu.shape[0]}")
    order = sorted(range(mu.shape[0]), key=lambda i: (-mu[i], i))
    return [(i, float(mu[i])) for i in order[:k]]
