"""Gradient verification suite: every primitive against central differences,
plus the full latent -> hypernetwork -> decoder -> loss composite."""

from __future__ import annotations

import numpy as np

from . import nets, numerics as nm, objectives as obj
from .numerics import Tensor, grad_check

PRIMITIVE_TOL = 1e-5
COMPOSITE_TOL = 1e-4


def _away_from_kinks(rng, shape, margin=0.05):
    """Random values with |x| >= margin so leaky-relu/L1 kinks stay clear."""
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def primitive_checks(rng):
    """Yield (name, fn, point) for every differentiable primitive."""
    x_img = Tensor(_away_from_kinks(rng, (2, 6, 6)))
    k = Tensor(rng.normal(size=(3, 2, 3, 3)))
    b = Tensor(rng.normal(size=3))
    yield ("conv2d/input", lambda t: nm.tsum(nm.conv2d(t, k, b, stride=1, pad=1)), x_img)
    yield ("conv2d/kernel", lambda t: nm.tsum(nm.conv2d(x_img, t, b, stride=1, pad=1)), k)
    yield ("conv2d/bias", lambda t: nm.tsum(nm.conv2d(x_img, k, t, stride=1, pad=1)), b)
    x_s2 = Tensor(rng.normal(size=(2, 8, 8)))
    yield ("conv2d/stride2", lambda t: nm.tsum(nm.conv2d(t, k, b, stride=2, pad=1)), x_s2)

    w = Tensor(rng.normal(size=(3, 4)))
    ab = Tensor(rng.normal(size=3))
    v = Tensor(rng.normal(size=4))
    yield ("affine_map/input", lambda t: nm.tsum(nm.affine_map(t, w, ab)), v)
    yield ("affine_map/weight", lambda t: nm.tsum(nm.affine_map(v, t, ab)), w)
    yield ("affine_map/bias", lambda t: nm.tsum(nm.affine_map(v, w, t)), ab)

    u = Tensor(rng.normal(size=(2, 3, 3)))
    yield ("upsample_nearest_2x", lambda t: nm.tsum(nm.upsample_nearest_2x(t)), u)

    a = Tensor(_away_from_kinks(rng, (4, 4)))
    yield ("leaky_relu", lambda t: nm.tsum(nm.leaky_relu(t)), a)
    yield ("sigmoid", lambda t: nm.tsum(nm.sigmoid(t)), a)
    yield ("l1", lambda t: nm.l1(t), a)
    ref = rng.normal(size=(4, 4))
    yield ("l1_distance", lambda t: nm.l1_distance(t, ref), a)

    mu = Tensor(rng.normal(size=3))
    basis = Tensor(rng.normal(size=(3, 5)))
    yield ("weighted_sum/mu", lambda t: nm.tsum(nm.weighted_sum(t, basis)), mu)
    yield ("weighted_sum/basis", lambda t: nm.tsum(nm.weighted_sum(mu, t)), basis)

    pred = Tensor(rng.uniform(0.1, 0.9, size=(2, 8, 8)))
    gt = (rng.uniform(size=(2, 8, 8)) > 0.6).astype(np.float64)
    yield ("soft_dice", lambda t: obj.soft_dice(t, gt), pred)
    yield ("weighted_bce", lambda t: obj.weighted_bce(t, gt), pred)


def composite_check(rng):
    """Grad of the full z -> psi -> theta -> segment -> loss path w.r.t. z."""
    enc = nets.EncoderParams(rng)
    psi = nets.HypernetParams(rng)
    psi.set_requires_grad(False)
    x = Tensor(rng.uniform(0.0, 1.0, size=(2, 3, 32, 32)))
    gt = (rng.uniform(size=(2, 32, 32)) > 0.8).astype(np.float64)

    def fn(z):
        pred = nets.segment(enc, nets.generate_weights(psi, z), x)
        return obj.training_loss(pred, gt, sparsity_vec=z, sparsity_coef=0.1)

    z0 = Tensor(_away_from_kinks(rng, nets.LATENT_DIM, margin=0.02) * 0.3)
    return fn, z0


def run_suite(seed=0, instances=10):
    """Run every check ``instances`` times; return (name, max err, tol) rows."""
    results = []
    worst = {}
    for i in range(instances):
        rng = np.random.default_rng(seed + i)
        for name, fn, point in primitive_checks(rng):
            err = grad_check(fn, point, h=1e-5)
            worst[name] = max(worst.get(name, 0.0), err)
        fn, z0 = composite_check(rng)
        # smaller step than the primitives: the composite path crosses many
        # leaky-relu units whose pre-activations cannot be placed away from
        # the kink, and the crossing probability scales with h
        err = grad_check(fn, z0, h=1e-6)
        worst["composite/z->psi->segment->loss"] = max(
            worst.get("composite/z->psi->segment->loss", 0.0), err)
    for name, err in worst.items():
        tol = COMPOSITE_TOL if name.startswith("composite") else PRIMITIVE_TOL
        results.append((name, err, tol))
    return results
