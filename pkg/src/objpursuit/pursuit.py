"""The object pursuit controller.

Per presented object: re-identify against the registry, try to express it
over the current bases, otherwise learn it jointly with the hypernetwork
under the forgetting penalty, then run the backward redundancy check.
State bookkeeping keeps the base list, the registry of embeddings, and the
frozen encoder consistent across episodes.
"""

from __future__ import annotations

import dataclasses
import time
import zlib

import numpy as np

from . import nets, numerics as nm, objectives as obj
from .errors import NumericFault
from .nets import EncoderParams, HypernetParams
from .numerics import AdamState, Tensor, adam_step, zero_grads
from .objectives import QualityConfig

Z_INIT_SCALE = 0.1


@dataclasses.dataclass
class StepBudgets:
    express: int = 200
    base: int = 1000
    pretrain: int = 3000
    fewshot: int = 200
    batch: int = 16


@dataclasses.dataclass
class OptimConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclasses.dataclass
class RegistryEntry:
    object_id: str
    mu: np.ndarray           # length = base count at last padding
    provenance: str          # "base" | "expressed"
    quality: float           # holdout quality at registration


@dataclasses.dataclass
class PursuitEvent:
    object_id: str
    outcome: str             # seen(identity) | expressed | new_base |
                             # redundant_after_training | unqualified
    scores: dict
    duration: float
    step: int

    def to_json(self):
        # duration is wall-clock and stays out so event logs replay
        # byte-identically
        return {"object_id": self.object_id, "outcome": self.outcome,
                "scores": self.scores, "step": self.step}


class PursuitState:
    """Base list, registry, hypernetwork and frozen encoder."""

    def __init__(self, enc: EncoderParams, psi: HypernetParams,
                 config: QualityConfig, budgets: StepBudgets | None = None,
                 optim: OptimConfig | None = None, seed: int = 0):
        self.enc = enc
        self.psi = psi
        self.config = config
        self.budgets = budgets or StepBudgets()
        self.optim = optim or OptimConfig()
        self.seed = int(seed)
        self.bases: list[np.ndarray] = []
        self.registry: list[RegistryEntry] = []
        self.step = 0
        enc.freeze()

    @property
    def n_bases(self):
        return len(self.bases)

    @property
    def n_registered(self):
        return len(self.registry)

    def basis_matrix(self) -> np.ndarray:
        return np.stack(self.bases) if self.bases else np.zeros((0, nets.LATENT_DIM))

    def registry_latents(self):
        basis = self.basis_matrix()
        return [e.mu @ basis for e in self.registry]

    def append_base(self, z: np.ndarray):
        """Add a base; zero-pad every stored embedding to the new length."""
        self.bases.append(np.asarray(z, dtype=np.float64).copy())
        m = len(self.bases)
        for e in self.registry:
            if e.mu.shape[0] < m:
                e.mu = np.concatenate([e.mu, np.zeros(m - e.mu.shape[0])])

    def register(self, object_id, mu, provenance, quality):
        mu = np.asarray(mu, dtype=np.float64).copy()
        if mu.shape[0] < len(self.bases):
            mu = np.concatenate([mu, np.zeros(len(self.bases) - mu.shape[0])])
        self.registry.append(RegistryEntry(object_id, mu, provenance, float(quality)))

    def _rng(self, tag, object_id=""):
        mix = zlib.crc32(f"{tag}/{object_id}/{self.step}".encode())
        key = (self.seed * 0x9E3779B97F4A7C15 + mix) & 0xFFFFFFFFFFFFFFFF
        return np.random.Generator(np.random.Philox(key=[key, 0]))


def _new_adam(params, oc: OptimConfig):
    return AdamState(params, lr=oc.lr, beta1=oc.beta1, beta2=oc.beta2, eps=oc.eps)


def _draw_batch(rng, samples, batch):
    idx = rng.integers(0, len(samples), size=min(batch, max(1, batch)))
    return [samples[int(i)] for i in idx]


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------

def reidentify(state: PursuitState, ds) -> tuple[int | None, float]:
    """Max holdout quality over registry entries; identity if it passes tau.

    Returns (identity index or None, max score; -inf for an empty registry).
    Pure: no state mutation.
    """
    if not state.registry:
        return None, float("-inf")
    best_i, best = -1, float("-inf")
    for i, z in enumerate(state.registry_latents()):
        q = obj.expected_quality(state.enc, state.psi, z, ds.holdout)
        if q > best:
            best_i, best = i, q
    if best >= state.config.tau:
        return best_i, best
    return None, best


def best_base_init(state: PursuitState, psi, samples) -> np.ndarray:
    """One-hot embedding selecting the base that best segments ``samples``.

    Warm start for embedding searches: with a fixed step budget a
    near-one-hot optimum is unreachable from a uniform blend, so the search
    starts at the closest base instead (ties go to the lower index).
    """
    scores = [obj.expected_quality(state.enc, psi, z, samples)
              for z in state.bases]
    mu = np.zeros(len(scores))
    mu[int(np.argmax(scores))] = 1.0
    return mu


def express(state: PursuitState, ds, psi=None, steps=None):
    """Optimize an embedding over the current bases (Eq.-3-style search).

    Returns (mu values, holdout quality, accepted) or None when there are
    no bases.  Acceptance compares holdout quality against the registration
    bar (tau + margin); the sparsity term never enters the acceptance test.
    """
    if not state.bases:
        return None
    psi = psi or state.psi
    steps = state.budgets.express if steps is None else steps
    basis = Tensor(state.basis_matrix())
    mu = Tensor(best_base_init(state, psi, ds.train[:8]), requires_grad=True)
    opt = _new_adam([mu], state.optim)
    rng = state._rng("express", ds.object_id)
    psi.set_requires_grad(False)
    try:
        for _ in range(steps):
            batch = _draw_batch(rng, ds.train, state.budgets.batch)
            z = nets.compose_latent(mu, basis)
            pred = nets.segment(state.enc, nets.generate_weights(psi, z),
                                nets.batch_images(batch))
            loss = obj.training_loss(
                pred, nets.batch_masks(batch),
                sparsity_vec=mu, sparsity_coef=state.config.alpha_express,
                weight_cap=state.config.bce_weight_cap)
            nm.assert_finite(loss, "express loss")
            zero_grads([mu])
            loss.backward()
            adam_step(opt)
    finally:
        psi.set_requires_grad(True)
    z_star = mu.data @ basis.data
    quality = obj.expected_quality(state.enc, psi, z_star, ds.holdout)
    return mu.data.copy(), quality, quality >= state.config.registration_bar()


def learn_base(state: PursuitState, ds, steps=None):
    """Jointly train a fresh latent and psi under the forgetting penalty.

    Mutates psi in place; the caller holds the pre-episode snapshot for the
    revert path.  Returns (z values, holdout quality).
    """
    steps = state.budgets.base if steps is None else steps
    rng = state._rng("learn_base", ds.object_id)
    z = Tensor(rng.normal(0.0, 1.0, size=nets.LATENT_DIM) * Z_INIT_SCALE,
               requires_grad=True)
    reg_latents = state.registry_latents()
    frozen = [nets.generate_weights(state.psi, Tensor(zv)).flat() for zv in reg_latents]
    params = [z] + state.psi.parameters()
    opt = _new_adam(params, state.optim)
    use_penalty = state.config.beta > 0.0 and reg_latents
    for _ in range(steps):
        batch = _draw_batch(rng, ds.train, state.budgets.batch)
        pred = nets.segment(state.enc, nets.generate_weights(state.psi, z),
                            nets.batch_images(batch))
        penalty = (obj.forgetting_penalty(state.psi, reg_latents, frozen)
                   if use_penalty else None)
        loss = obj.training_loss(
            pred, nets.batch_masks(batch),
            sparsity_vec=z, sparsity_coef=state.config.alpha_base,
            penalty=penalty, penalty_coef=state.config.beta,
            weight_cap=state.config.bce_weight_cap)
        nm.assert_finite(loss, "learn_base loss")
        zero_grads(params)
        loss.backward()
        adam_step(opt)
    quality = obj.expected_quality(state.enc, state.psi, z.data, ds.holdout)
    return z.data.copy(), quality


def backward_check(state: PursuitState, z_star, ds, post_score, psi_snapshot):
    """Decide unqualified / redundant_after_training / new_base and mutate state."""
    scores = {"post_train": post_score}
    if post_score < state.config.registration_bar():
        state.psi.restore(psi_snapshot)
        return "unqualified", scores
    re_exp = express(state, ds)
    if re_exp is not None:
        mu_star, q, accepted = re_exp
        scores["re_express"] = q
        if accepted:
            state.register(ds.object_id, mu_star, "expressed", q)
            return "redundant_after_training", scores
    state.append_base(z_star)
    one_hot = np.zeros(len(state.bases))
    one_hot[-1] = 1.0
    state.register(ds.object_id, one_hot, "base", post_score)
    return "new_base", scores


def pursue_one(state: PursuitState, ds) -> PursuitEvent:
    """One full pursuit episode; appends to state and returns its event."""
    t0 = time.monotonic()
    state.step += 1
    identity, reid_score = reidentify(state, ds)
    scores = {"reid_max": reid_score if np.isfinite(reid_score) else None}
    if identity is not None:
        scores["identity"] = state.registry[identity].object_id
        outcome = "seen"
    else:
        expressed = express(state, ds)
        if expressed is not None:
            mu_star, q, accepted = expressed
            scores["express"] = q
        if expressed is not None and accepted:
            state.register(ds.object_id, mu_star, "expressed", q)
            outcome = "expressed"
        else:
            snapshot = state.psi.snapshot()
            try:
                z_star, post_q = learn_base(state, ds)
            except NumericFault as exc:
                state.psi.restore(snapshot)
                scores["error"] = str(exc)
                outcome = "unqualified"
            else:
                outcome, extra = backward_check(state, z_star, ds, post_q, snapshot)
                scores.update(extra)
    return PursuitEvent(object_id=ds.object_id, outcome=outcome, scores=scores,
                        duration=time.monotonic() - t0, step=state.step)


# ---------------------------------------------------------------------------
# warm-up
# ---------------------------------------------------------------------------

def pretrain_warmup(datasets, steps, *, config: QualityConfig | None = None,
                    budgets: StepBudgets | None = None,
                    optim: OptimConfig | None = None, seed=0, log=None):
    """Joint training of encoder, hypernetwork and one latent per object.

    Every mini-batch holds data from a single uniformly drawn object; that
    object's latent plus the shared parameters take the Adam step.
    Returns (enc, psi, list of latent arrays).
    """
    if len(datasets) < 2:
        raise ValueError("pretrain_warmup: need at least 2 objects")
    config = config or QualityConfig()
    budgets = budgets or StepBudgets()
    optim = optim or OptimConfig()
    rng = np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, 0]))
    enc = EncoderParams(rng)
    psi = HypernetParams(rng)
    zs = [Tensor(rng.normal(0.0, 1.0, size=nets.LATENT_DIM) * Z_INIT_SCALE,
                 requires_grad=True) for _ in datasets]
    shared = enc.parameters() + psi.parameters()
    opt_shared = _new_adam(shared, optim)
    opt_z = [_new_adam([z], optim) for z in zs]
    for step in range(steps):
        k = int(rng.integers(len(datasets)))
        batch = _draw_batch(rng, datasets[k].train, budgets.batch)
        pred = nets.segment(enc, nets.generate_weights(psi, zs[k]),
                            nets.batch_images(batch))
        loss = obj.training_loss(pred, nets.batch_masks(batch),
                                 weight_cap=config.bce_weight_cap)
        nm.assert_finite(loss, "pretrain loss")
        zero_grads(shared + [zs[k]])
        loss.backward()
        adam_step(opt_shared)
        adam_step(opt_z[k])
        if log is not None:
            log.append({"step": step, "object": datasets[k].object_id,
                        "loss": float(loss.data)})
    return enc, psi, [z.data.copy() for z in zs]


def redundancy_sweep(enc, psi, latents, datasets, *, config=None, budgets=None,
                     optim=None, seed=0) -> PursuitState:
    """Sequential post-pretraining sweep: keep a latent as a base only when
    the object cannot be expressed by the bases accumulated so far."""
    state = PursuitState(enc, psi, config or QualityConfig(),
                         budgets=budgets, optim=optim, seed=seed)
    for z, ds in zip(latents, datasets):
        expressed = express(state, ds) if state.bases else None
        if expressed is not None and expressed[2]:
            mu_star, q, _ = expressed
            state.register(ds.object_id, mu_star, "expressed", q)
        else:
            state.append_base(z)
            one_hot = np.zeros(len(state.bases))
            one_hot[-1] = 1.0
            q = obj.expected_quality(enc, psi, np.asarray(z), ds.holdout)
            state.register(ds.object_id, one_hot, "base", q)
    return state
