"""Minimal deterministic tensor arithmetic with reverse-mode gradients.

Everything runs on float64 numpy arrays; float32 appears only at
serialization boundaries (see checkpoint module).  Ops accept an optional
leading batch dimension where noted so training loops can amortize numpy
dispatch over mini-batches.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericFault, ShapeError

LEAKY_SLOPE = 0.01
SIGMOID_CLIP = 500.0  # |x| beyond this saturates exactly, avoids overflow warnings


class Tensor:
    """A dense float64 array with an optional gradient buffer.

    Graph edges are recorded on construction; ``backward()`` runs a
    topological sweep accumulating into ``.grad``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar, got shape {self.data.shape}")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None:
                t._backward(t.grad)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_const(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def assert_finite(arr, what="tensor"):
    arr = _as_const(arr)
    if not np.all(np.isfinite(arr)):
        raise NumericFault(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# elementwise / structural primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: shapes differ {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data, _parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    out._backward = bw if out.requires_grad else None
    return out


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c, _parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * c)

    out._backward = bw if out.requires_grad else None
    return out


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = Tensor(a.data.reshape(shape), _parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    out._backward = bw if out.requires_grad else None
    return out


def flat_prefix(a: Tensor, n: int) -> Tensor:
    """First ``n`` entries of the row-major flattening of ``a``."""
    if n > a.data.size:
        raise ShapeError(f"flat_prefix: need {n} values, tensor has {a.data.size}")
    out = Tensor(a.data.reshape(-1)[:n].copy(), _parents=(a,))

    def bw(g):
        if a.requires_grad:
            full = np.zeros(a.data.size)
            full[:n] = g.reshape(-1)
            a._accumulate(full.reshape(a.data.shape))

    out._backward = bw if out.requires_grad else None
    return out


def activation_apply(a: Tensor, kind: str) -> Tensor:
    """Elementwise nonlinearity; ``kind`` is 'leaky_relu' or 'sigmoid'."""
    if kind == "leaky_relu":
        y = np.where(a.data >= 0, a.data, LEAKY_SLOPE * a.data)
        out = Tensor(y, _parents=(a,))

        def bw(g):
            if a.requires_grad:
                a._accumulate(g * np.where(a.data >= 0, 1.0, LEAKY_SLOPE))

    elif kind == "sigmoid":
        x = np.clip(a.data, -SIGMOID_CLIP, SIGMOID_CLIP)
        y = 1.0 / (1.0 + np.exp(-x))
        out = Tensor(y, _parents=(a,))

        def bw(g):
            if a.requires_grad:
                a._accumulate(g * y * (1.0 - y))

    else:
        raise ValueError(f"unknown activation kind {kind!r}")
    out._backward = bw if out.requires_grad else None
    return out


def leaky_relu(a: Tensor) -> Tensor:
    return activation_apply(a, "leaky_relu")


def sigmoid(a: Tensor) -> Tensor:
    return activation_apply(a, "sigmoid")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def affine_map(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """out = weight @ x + bias.  ``x`` may carry a leading batch axis."""
    n = weight.data.shape[1] if weight.data.ndim == 2 else -1
    if weight.data.ndim != 2:
        raise ShapeError(f"affine_map: weight must be 2-d, got {weight.data.shape}")
    if x.data.shape[-1] != n:
        raise ShapeError(
            f"affine_map: input last dim {x.data.shape[-1]} != weight cols {n}")
    if bias.data.shape != (weight.data.shape[0],):
        raise ShapeError(
            f"affine_map: bias shape {bias.data.shape} != ({weight.data.shape[0]},)")
    out = Tensor(x.data @ weight.data.T + bias.data, _parents=(x, weight, bias))

    def bw(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data)
        if weight.requires_grad:
            gx = g.reshape(-1, g.shape[-1])
            xx = x.data.reshape(-1, n)
            weight._accumulate(gx.T @ xx)
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))

    out._backward = bw if out.requires_grad else None
    return out


def weighted_sum(mu: Tensor, basis: Tensor) -> Tensor:
    """out_k = sum_i mu_i * basis_ik; the latent composition primitive."""
    if mu.data.ndim != 1 or basis.data.ndim != 2:
        raise ShapeError("weighted_sum: mu must be 1-d and basis 2-d")
    if mu.data.shape[0] != basis.data.shape[0]:
        raise ShapeError(
            f"weighted_sum: mu length {mu.data.shape[0]} != basis rows {basis.data.shape[0]}")
    out = Tensor(mu.data @ basis.data, _parents=(mu, basis))

    def bw(g):
        if mu.requires_grad:
            mu._accumulate(basis.data @ g)
        if basis.requires_grad:
            basis._accumulate(np.outer(mu.data, g))

    out._backward = bw if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# spatial ops
# ---------------------------------------------------------------------------

def _im2col(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[0], xp.shape[1]
    s0, s1, s2, s3 = xp.strides
    shape = (n, c, kh, kw, ho, wo)
    strides = (s0, s1, s2, s3, s2 * stride, s3 * stride)
    return np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation.

    ``x`` is (C,H,W) or batched (N,C,H,W); ``kernel`` is (C_out,C_in,k,k);
    ``bias`` is (C_out,).  Output extent is (H + 2*pad - k)//stride + 1;
    a trailing window that does not fit is dropped.
    """
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ShapeError(f"conv2d: input must be 3-d or 4-d, got {x.data.shape}")
    co, ci, kh, kw = kernel.data.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"conv2d: kernel must be square with odd extent, got {kh}x{kw}")
    if xd.shape[1] != ci:
        raise ShapeError(f"conv2d: input channels {xd.shape[1]} != kernel C_in {ci}")
    if bias.data.shape != (co,):
        raise ShapeError(f"conv2d: bias shape {bias.data.shape} != ({co},)")
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d: invalid stride={stride} pad={pad}")
    n, _, h, w = xd.shape
    # floor division, standard convolution semantics: a trailing window that
    # does not fit is dropped
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"conv2d: spatial extent ({h},{w}) too small for k={kh} pad={pad} "
            f"stride={stride}")
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    y = np.einsum("ncijhw,ocij->nohw", cols, kernel.data, optimize=True)
    y += bias.data[None, :, None, None]
    out = Tensor(y[0] if squeeze else y, _parents=(x, kernel, bias))

    def bw(g):
        gd = g[None] if squeeze else g
        if kernel.requires_grad:
            kernel._accumulate(np.einsum("ncijhw,nohw->ocij", cols, gd, optimize=True))
        if bias.requires_grad:
            bias._accumulate(gd.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    patch = np.einsum("oc,nohw->nchw", kernel.data[:, :, i, j], gd,
                                      optimize=True)
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += patch
            gx = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
            x._accumulate(gx[0] if squeeze else gx)

    out._backward = bw if out.requires_grad else None
    return out


def upsample_nearest_2x(x: Tensor) -> Tensor:
    """Replicate each cell into a 2x2 block over the trailing two axes."""
    if x.data.ndim < 2:
        raise ShapeError(f"upsample_nearest_2x: need >= 2 dims, got {x.data.shape}")
    y = x.data.repeat(2, axis=-2).repeat(2, axis=-1)
    out = Tensor(y, _parents=(x,))

    def bw(g):
        if x.requires_grad:
            h, w = x.data.shape[-2], x.data.shape[-1]
            gs = g.reshape(*g.shape[:-2], h, 2, w, 2).sum(axis=(-3, -1))
            x._accumulate(gs)

    out._backward = bw if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def tsum(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum(), _parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accumulate(np.full(a.data.shape, float(g)))

    out._backward = bw if out.requires_grad else None
    return out


def l1(a: Tensor) -> Tensor:
    """Sum of absolute values (subgradient sign(x) at the kink)."""
    out = Tensor(np.abs(a.data).sum(), _parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accumulate(float(g) * np.sign(a.data))

    out._backward = bw if out.requires_grad else None
    return out


def l1_distance(a: Tensor, ref) -> Tensor:
    """Sum of |a - ref| against a constant reference array."""
    ref = _as_const(ref)
    if a.data.shape != ref.shape:
        raise ShapeError(f"l1_distance: shapes differ {a.data.shape} vs {ref.shape}")
    diff = a.data - ref
    out = Tensor(np.abs(diff).sum(), _parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accumulate(float(g) * np.sign(diff))

    out._backward = bw if out.requires_grad else None
    return out


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment buffers and step counter for a fixed parameter list."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError(f"adam: lr must be positive, got {lr}")
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0


def adam_step(state: AdamState) -> None:
    """One bias-corrected Adam update over ``state.params`` in place.

    Parameters with ``grad is None`` are skipped (their moments stay put).
    """
    for p in state.params:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NumericFault("NaN/Inf gradient in adam_step")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, m, v in zip(state.params, state.m, state.v):
        if p.grad is None:
            continue
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def zero_grads(params):
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def grad_check(fn, point: Tensor, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps a Tensor to a scalar Tensor and is re-evaluated 2 per
    coordinate; relative error uses max(|analytic|, |cd|, 1e-8) as scale.
    """
    if h <= 0:
        raise ValueError("grad_check: h must be positive")
    p = Tensor(point.data.copy(), requires_grad=True)
    out = fn(p)
    if not np.isfinite(out.data).all():
        raise NumericFault("grad_check: fn produced a non-finite value")
    out.backward()
    analytic = np.zeros(p.data.shape) if p.grad is None else p.grad.copy()

    flat = p.data.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(fn(Tensor(p.data.copy())).data)
        flat[i] = orig - h
        fm = float(fn(Tensor(p.data.copy())).data)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericFault("grad_check: fn produced a non-finite value")
        cd = (fp - fm) / (2.0 * h)
        an = analytic.reshape(-1)[i]
        err = abs(an - cd) / max(abs(an), abs(cd), 1e-8)
        worst = max(worst, err)
    return worst
