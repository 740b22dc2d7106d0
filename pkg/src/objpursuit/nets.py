"""Segmentation network and the weight-generation hypernetwork.

The segmentation net is a fixed two-conv encoder (3->8->16, stride 2)
followed by a three-layer decoder whose weights are not learned directly:
a per-layer generator maps a 16-d latent code through an affine expansion
and two upsample+conv blocks to 4096 values, of which a prefix becomes the
decoder kernel; decoder biases come from a direct affine map of the code.
"""

from __future__ import annotations

import numpy as np

from . import numerics as nm
from .errors import ShapeError
from .numerics import Tensor

LATENT_DIM = 16

# decoder layers: (name, kernel shape, bias size)
DECODER_LAYERS = (
    ("dec1", (16, 16, 3, 3), 16),
    ("dec2", (8, 16, 3, 3), 8),
    ("dec3", (1, 8, 3, 3), 1),
)
GENERATOR_FLAT = 4096  # 4 x 32 x 32 output of the per-layer generator
TOTAL_GENERATED = sum(int(np.prod(k)) + b for _, k, b in DECODER_LAYERS)  # 3553


def _init(rng, shape, fan_in):
    return Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape), requires_grad=True)


class EncoderParams:
    """Two stride-2 convolutions, 3->8->16 channels; frozen during pursuit."""

    def __init__(self, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.conv1_w = _init(rng, (8, 3, 3, 3), 27)
        self.conv1_b = Tensor(np.zeros(8), requires_grad=True)
        self.conv2_w = _init(rng, (16, 8, 3, 3), 72)
        self.conv2_b = Tensor(np.zeros(16), requires_grad=True)
        self.frozen = False

    def tensors(self):
        return {"enc.conv1_w": self.conv1_w, "enc.conv1_b": self.conv1_b,
                "enc.conv2_w": self.conv2_w, "enc.conv2_b": self.conv2_b}

    def parameters(self):
        return list(self.tensors().values())

    def set_requires_grad(self, flag):
        for p in self.parameters():
            p.requires_grad = flag

    def freeze(self):
        self.frozen = True
        self.set_requires_grad(False)

    def snapshot(self):
        """Plain numpy copy of all parameter values."""
        return {k: t.data.copy() for k, t in self.tensors().items()}

    def restore(self, snap):
        for k, t in self.tensors().items():
            t.data[...] = snap[k]


class HypernetParams:
    """One generator per decoder layer plus a bias head per layer."""

    def __init__(self, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.layers = {}
        for name, kshape, nbias in DECODER_LAYERS:
            self.layers[name] = {
                "fc_w": _init(rng, (64, LATENT_DIM), LATENT_DIM),
                "fc_b": Tensor(np.zeros(64), requires_grad=True),
                "c1_w": _init(rng, (4, 1, 3, 3), 9),
                "c1_b": Tensor(np.zeros(4), requires_grad=True),
                # damped output head: generated kernels start small so the
                # decoder's sigmoid is not saturated before training
                "c2_w": Tensor(rng.normal(0.0, 0.2 * np.sqrt(2.0 / 36), size=(4, 4, 3, 3)),
                               requires_grad=True),
                "c2_b": Tensor(np.zeros(4), requires_grad=True),
                "bias_w": _init(rng, (nbias, LATENT_DIM), LATENT_DIM),
                "bias_b": Tensor(np.zeros(nbias), requires_grad=True),
            }

    def tensors(self):
        out = {}
        for name, ts in self.layers.items():
            for k, t in ts.items():
                out[f"psi.{name}.{k}"] = t
        return out

    def parameters(self):
        return list(self.tensors().values())

    def set_requires_grad(self, flag):
        for p in self.parameters():
            p.requires_grad = flag

    def snapshot(self):
        """Plain numpy copy of all parameter values."""
        return {k: t.data.copy() for k, t in self.tensors().items()}

    def restore(self, snap):
        for k, t in self.tensors().items():
            t.data[...] = snap[k]


class GeneratedWeights:
    """Ordered decoder tensors; total parameter count is always 3553."""

    def __init__(self, tensors):
        self.tensors = tensors  # {name: (kernel Tensor, bias Tensor)}

    def layer(self, name):
        return self.tensors[name]

    def flat(self):
        """Row-major concatenation (kernel then bias per layer) as numpy."""
        parts = []
        for name, _, _ in DECODER_LAYERS:
            k, b = self.tensors[name]
            parts.append(k.data.reshape(-1))
            parts.append(b.data.reshape(-1))
        return np.concatenate(parts)

    @property
    def total_params(self):
        return sum(k.data.size + b.data.size for k, b in self.tensors.values())


def compose_latent(mu: Tensor, bases) -> Tensor:
    """z = sum_i mu_i * bases_i; ``bases`` is a list of latent arrays or a Tensor matrix."""
    if isinstance(bases, Tensor):
        basis = bases
    else:
        if len(bases) != mu.data.shape[0]:
            raise ShapeError(
                f"compose_latent: {mu.data.shape[0]} coefficients vs {len(bases)} bases")
        basis = Tensor(np.stack([np.asarray(b, dtype=np.float64) for b in bases]))
    return nm.weighted_sum(mu, basis)


def generate_weights(psi: HypernetParams, z: Tensor) -> GeneratedWeights:
    """Run every per-layer generator on latent code ``z`` (shape (16,))."""
    out = {}
    for name, kshape, nbias in DECODER_LAYERS:
        ts = psi.layers[name]
        h = nm.leaky_relu(nm.affine_map(z, ts["fc_w"], ts["fc_b"]))
        h = nm.reshape(h, (1, 8, 8))
        h = nm.leaky_relu(nm.conv2d(nm.upsample_nearest_2x(h), ts["c1_w"], ts["c1_b"], pad=1))
        h = nm.conv2d(nm.upsample_nearest_2x(h), ts["c2_w"], ts["c2_b"], pad=1)
        kernel = nm.reshape(nm.flat_prefix(h, int(np.prod(kshape))), kshape)
        bias = nm.affine_map(z, ts["bias_w"], ts["bias_b"])
        out[name] = (kernel, bias)
    return GeneratedWeights(out)


def encode(enc: EncoderParams, x: Tensor) -> Tensor:
    """Image(s) (3,32,32) or (N,3,32,32) -> features (...,16,8,8)."""
    h = nm.leaky_relu(nm.conv2d(x, enc.conv1_w, enc.conv1_b, stride=2, pad=1))
    return nm.leaky_relu(nm.conv2d(h, enc.conv2_w, enc.conv2_b, stride=2, pad=1))


def decode(theta: GeneratedWeights, feats: Tensor) -> Tensor:
    """Features (...,16,8,8) -> mask probabilities (...,32,32) in (0,1)."""
    k1, b1 = theta.layer("dec1")
    k2, b2 = theta.layer("dec2")
    k3, b3 = theta.layer("dec3")
    h = nm.leaky_relu(nm.conv2d(feats, k1, b1, pad=1))
    h = nm.leaky_relu(nm.conv2d(nm.upsample_nearest_2x(h), k2, b2, pad=1))
    h = nm.sigmoid(nm.conv2d(nm.upsample_nearest_2x(h), k3, b3, pad=1))
    squeeze_axis = -3  # drop the singleton channel
    shape = h.data.shape[:squeeze_axis] + h.data.shape[-2:]
    return nm.reshape(h, shape)


def segment(enc: EncoderParams, theta: GeneratedWeights, x: Tensor) -> Tensor:
    """Full forward pass: (3,32,32) -> (32,32) probabilities."""
    return decode(theta, encode(enc, x))


def batch_images(samples) -> Tensor:
    """Stack SceneSample images into an (N,3,32,32) constant Tensor."""
    return Tensor(np.stack([s.image for s in samples]))


def batch_masks(samples) -> np.ndarray:
    return np.stack([s.mask for s in samples])
