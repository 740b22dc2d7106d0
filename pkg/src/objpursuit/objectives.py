"""Similarity measure, training losses, sparsity and forgetting penalties.

The quality criterion compares binarized dice against a threshold tau;
training minimizes (-soft dice + weighted BCE + sparsity + forgetting),
i.e. the maximization objectives rewritten with coefficient magnitudes.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import nets, numerics as nm
from .numerics import Tensor

DICE_EPS = 1.0
BCE_CLAMP = 1e-7


@dataclasses.dataclass
class QualityConfig:
    """Thresholds and loss coefficients (stored as magnitudes)."""

    tau: float = 0.6
    alpha_express: float = 0.2
    alpha_base: float = 0.1
    beta: float = 0.04
    bce_weight_cap: float = 20.0
    margin: float = 0.06

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0,1), got {self.tau}")
        if self.margin < 0.0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")

    def registration_bar(self) -> float:
        """Quality needed to register an object: tau plus a hysteresis margin.

        Holdout quality is a noisy mean, so an object admitted exactly at tau
        would fail re-identification on a fresh dataset about half the time.
        Registering only above tau + margin keeps every registry entry
        re-identifiable at tau.
        """
        return self.tau + self.margin


# ---------------------------------------------------------------------------
# evaluation-side (plain numpy) metrics
# ---------------------------------------------------------------------------

def dice_score(pred, gt, binarize=False) -> float:
    """Smoothed dice (2*sum(p*y)+eps)/(sum p + sum y + eps), eps = 1."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if binarize:
        pred = (pred >= 0.5).astype(np.float64)
    inter = float((pred * gt).sum())
    return (2.0 * inter + DICE_EPS) / (float(pred.sum()) + float(gt.sum()) + DICE_EPS)


def l1_norm(v) -> float:
    return float(np.abs(np.asarray(v, dtype=np.float64)).sum())


def expected_quality(enc, psi, z, split) -> float:
    """Mean binarized dice of segment(enc, psi(z), x) over a sample split."""
    if len(split) == 0:
        raise ValueError("expected_quality: empty split")
    zt = z if isinstance(z, Tensor) else Tensor(z)
    theta = nets.generate_weights(psi, zt)
    pred = nets.decode(theta, nets.encode(enc, nets.batch_images(split))).data
    gt = nets.batch_masks(split)
    return float(np.mean([dice_score(p, y, binarize=True) for p, y in zip(pred, gt)]))


# ---------------------------------------------------------------------------
# differentiable losses (batched, pred is (N,32,32) or (32,32))
# ---------------------------------------------------------------------------

def soft_dice(pred: Tensor, gt) -> Tensor:
    """Mean per-sample smoothed dice, differentiable w.r.t. pred."""
    gt = np.asarray(gt, dtype=np.float64)
    p = pred.data
    squeeze = p.ndim == 2
    pd = p[None] if squeeze else p
    gd = gt[None] if squeeze else gt
    axes = (1, 2)
    inter = (pd * gd).sum(axis=axes)
    denom = pd.sum(axis=axes) + gd.sum(axis=axes) + DICE_EPS
    per = (2.0 * inter + DICE_EPS) / denom
    out = Tensor(per.mean(), _parents=(pred,))

    def bw(g):
        if pred.requires_grad:
            n = pd.shape[0]
            grad = (2.0 * gd * denom[:, None, None]
                    - (2.0 * inter + DICE_EPS)[:, None, None]) / denom[:, None, None] ** 2
            grad *= float(g) / n
            pred._accumulate(grad[0] if squeeze else grad)

    out._backward = bw if out.requires_grad else None
    return out


def weighted_bce(pred: Tensor, gt, weight_cap=20.0) -> Tensor:
    """Foreground-weighted binary cross-entropy, mean over pixels and samples.

    Per sample, foreground entropy terms are scaled by
    clamp(#bg/#fg, 1, weight_cap); all-background samples use weight 1.
    """
    gt = np.asarray(gt, dtype=np.float64)
    squeeze = pred.data.ndim == 2
    pd = (pred.data[None] if squeeze else pred.data)
    gd = gt[None] if squeeze else gt
    pc = np.clip(pd, BCE_CLAMP, 1.0 - BCE_CLAMP)
    npx = pd.shape[1] * pd.shape[2]
    fg = gd.sum(axis=(1, 2))
    bg = npx - fg
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(fg > 0, np.clip(bg / np.maximum(fg, 1e-12), 1.0, weight_cap), 1.0)
    w = w[:, None, None]
    per_pixel = -(w * gd * np.log(pc) + (1.0 - gd) * np.log1p(-pc))
    out = Tensor(per_pixel.sum() / (npx * pd.shape[0]), _parents=(pred,))

    def bw(g):
        if pred.requires_grad:
            inside = (pd > BCE_CLAMP) & (pd < 1.0 - BCE_CLAMP)
            grad = -(w * gd / pc - (1.0 - gd) / (1.0 - pc)) * inside
            grad *= float(g) / (npx * pd.shape[0])
            pred._accumulate(grad[0] if squeeze else grad)

    out._backward = bw if out.requires_grad else None
    return out


def forgetting_penalty(psi, registry_latents, frozen_targets) -> Tensor:
    """Sum over registered objects of L1(psi(z_i) - frozen theta_i).

    ``registry_latents`` are constant composed latents z_i = mu_i^T Z and
    ``frozen_targets`` their generated weights under the pre-episode psi
    snapshot, flattened to numpy.
    """
    if len(registry_latents) != len(frozen_targets):
        raise ValueError("forgetting_penalty: latent/target count mismatch")
    total = Tensor(np.zeros(()))
    for z_val, target in zip(registry_latents, frozen_targets):
        theta = nets.generate_weights(psi, Tensor(np.asarray(z_val)))
        pos = 0
        for name, _, _ in nets.DECODER_LAYERS:
            k, b = theta.layer(name)
            for part in (k, b):
                ref = target[pos:pos + part.data.size].reshape(part.data.shape)
                total = nm.add(total, nm.l1_distance(part, ref))
                pos += part.data.size
    return total


def training_loss(pred: Tensor, gt, *, sparsity_vec=None, sparsity_coef=0.0,
                  penalty: Tensor | None = None, penalty_coef=0.0,
                  weight_cap=20.0) -> Tensor:
    """-soft dice + weighted BCE + sparsity_coef*L1 + penalty_coef*penalty."""
    loss = nm.add(nm.scale(soft_dice(pred, gt), -1.0), weighted_bce(pred, gt, weight_cap))
    if sparsity_vec is not None and sparsity_coef > 0.0:
        loss = nm.add(loss, nm.scale(nm.l1(sparsity_vec), sparsity_coef))
    if penalty is not None and penalty_coef > 0.0:
        loss = nm.add(loss, nm.scale(penalty, penalty_coef))
    return loss
