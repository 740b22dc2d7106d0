"""Procedural 2-d scene simulator.

Renders 32x32 RGB scenes containing one target shape plus distractors and
returns the binary visibility mask of the target.  All randomness flows
through counter-based Philox streams keyed on (seed, sample index), so
generation is deterministic and order-independent.
"""

from __future__ import annotations

import dataclasses
import json
import zlib
from pathlib import Path

import numpy as np

from .errors import DatasetIntegrityError, DatasetParseError, RenderFailure

CANVAS = 32
VISIBILITY_FLOOR = 30
MAX_RENDER_ATTEMPTS = 20
BACKGROUND_NOISE_SIGMA = 0.02
HOLDOUT_FRACTION = 0.2

FAMILIES = ("disc", "square", "triangle", "ring", "cross", "bar", "crescent", "diamond")
TEXTURES = ("solid", "stripes", "checker", "speckle")

# footprint area per unit half-extent squared, per family (rasterized estimate);
# used to pick base sizes whose typical placement clears the visibility floor
_LOCAL_AREA = {"disc": 3.14, "square": 4.0, "triangle": 2.0, "ring": 2.82,
               "cross": 2.79, "bar": 1.8, "crescent": 2.38, "diamond": 2.0}


def _min_base_size(family):
    # at median scale jitter (~0.7) the full footprint must exceed the floor
    want = np.sqrt(VISIBILITY_FLOOR / _LOCAL_AREA[family]) / (0.5 * CANVAS * 0.7)
    return float(min(max(want, 0.38), 0.45))


@dataclasses.dataclass(frozen=True)
class ObjectSpec:
    """Parameterization of one library object."""

    object_id: str
    family: str
    color: tuple  # HSV, each in [0,1]
    texture: str
    texture_params: tuple  # stripes: (angle, frequency); checker: (cell,); speckle: (density,)
    base_size: float  # fraction of canvas, in (0.1, 0.45]

    def to_json(self):
        return {
            "object_id": self.object_id,
            "family": self.family,
            "color": list(self.color),
            "texture": self.texture,
            "texture_params": list(self.texture_params),
            "base_size": self.base_size,
        }

    @staticmethod
    def from_json(d):
        return ObjectSpec(
            object_id=d["object_id"],
            family=d["family"],
            color=tuple(d["color"]),
            texture=d["texture"],
            texture_params=tuple(d["texture_params"]),
            base_size=float(d["base_size"]),
        )


@dataclasses.dataclass(frozen=True)
class SceneSample:
    """One rendered scene: image (3,32,32) in [0,1] and target mask (32,32) in {0,1}."""

    image: np.ndarray
    mask: np.ndarray


@dataclasses.dataclass(frozen=True)
class MarginalDataset:
    """Per-object dataset sampled from the marginal p(x, y^t)."""

    object_id: str
    train: tuple
    holdout: tuple
    seed: int


# ---------------------------------------------------------------------------
# object library
# ---------------------------------------------------------------------------

def _stream(seed, index):
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF,
                                                     index & 0xFFFFFFFFFFFFFFFF]))


def _draw_spec(rng, object_id):
    family = FAMILIES[rng.integers(len(FAMILIES))]
    color = (float(rng.uniform()), float(rng.uniform(0.55, 1.0)), float(rng.uniform(0.65, 1.0)))
    texture = TEXTURES[rng.integers(len(TEXTURES))]
    if texture == "stripes":
        params = (float(rng.uniform(0, np.pi)), float(rng.uniform(1.5, 3.5)))
    elif texture == "checker":
        params = (float(rng.uniform(0.3, 0.7)),)
    elif texture == "speckle":
        params = (float(rng.uniform(0.15, 0.4)),)
    else:
        params = ()
    base_size = float(rng.uniform(_min_base_size(family), 0.45))
    return ObjectSpec(object_id, family, color, texture, params, base_size)


def _perturb_spec(rng, spec, new_id, strength=1.0):
    h, s, v = spec.color
    color = (float((h + rng.uniform(-0.04, 0.04) * strength) % 1.0),
             float(np.clip(s + rng.uniform(-0.05, 0.05) * strength, 0.55, 1.0)),
             float(np.clip(v + rng.uniform(-0.05, 0.05) * strength, 0.65, 1.0)))
    jitter = 1.0 + rng.uniform(-0.08, 0.08) * strength
    base_size = float(np.clip(spec.base_size * jitter,
                              _min_base_size(spec.family), 0.45))
    return dataclasses.replace(spec, object_id=new_id, color=color, base_size=base_size)


def make_object_library(seed, n_pretrain=8, n_pursuit=16, n_unseen=6, n_near_duplicates=3):
    """Draw pretrain / pursuit / unseen ObjectSpec lists deterministically.

    The last ``n_near_duplicates`` unseen objects are perturbations of
    pretrain objects (color/size jitter) of graded strength, the analog of
    visually similar novel objects.  Fresh (non-duplicate) unseen objects are
    rejection-sampled to be genuinely novel: their (family, texture kind)
    combination is unused by any pretrain or pursuit object, and their hue is
    well separated from every seen object of the same family.
    """
    if n_near_duplicates > n_unseen:
        raise ValueError("n_near_duplicates must not exceed n_unseen")
    rng = _stream(seed, 0)
    # Pretrain objects are the identity anchors of the whole run (they seed
    # the base registry), so they are rejection-sampled to be mutually
    # distinguishable: pairwise hue distance >= 0.09 (circular) and distinct
    # (family, texture kind) combinations.
    pretrain = []
    for i in range(n_pretrain):
        cand = _draw_spec(rng, f"pre_{i:02d}")
        for _ in range(500):
            combos = {(s.family, s.texture[0]) for s in pretrain}
            dh = [min(abs(s.color[0] - cand.color[0]),
                      1.0 - abs(s.color[0] - cand.color[0])) for s in pretrain]
            if (cand.family, cand.texture[0]) not in combos and (not dh or min(dh) >= 0.09):
                break
            cand = _draw_spec(rng, f"pre_{i:02d}")
        pretrain.append(cand)
    pursuit = [_draw_spec(rng, f"pur_{i:02d}") for i in range(n_pursuit)]
    seen = pretrain + pursuit
    seen_combos = {(s.family, s.texture[0]) for s in seen}

    def _novel(cand):
        if (cand.family, cand.texture[0]) in seen_combos:
            return False
        for s in seen:
            if s.family != cand.family:
                continue
            dh = abs(s.color[0] - cand.color[0])
            if min(dh, 1.0 - dh) < 0.12:
                return False
        return True

    n_fresh = n_unseen - n_near_duplicates
    unseen = []
    for i in range(n_fresh):
        cand = _draw_spec(rng, f"uns_{i:02d}")
        for _ in range(200):
            if _novel(cand):
                break
            cand = _draw_spec(rng, f"uns_{i:02d}")
        unseen.append(cand)
    strengths = (0.5, 1.0, 1.75)
    for j in range(n_near_duplicates):
        src = pretrain[j % len(pretrain)] if pretrain else _draw_spec(rng, "tmp")
        unseen.append(_perturb_spec(rng, src, f"dup_{j:02d}_of_{src.object_id}",
                                    strength=strengths[j % len(strengths)]))
    return pretrain, pursuit, unseen


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------

def _hsv_to_rgb(h, s, v):
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


def _footprint(family, cx, cy, half, theta):
    """Boolean (32,32) point-in-shape test on pixel centers."""
    yy, xx = np.mgrid[0:CANVAS, 0:CANVAS]
    px = (xx + 0.5 - cx) / half
    py = (yy + 0.5 - cy) / half
    c, s = np.cos(-theta), np.sin(-theta)
    u = c * px - s * py
    v = s * px + c * py
    if family == "disc":
        return u * u + v * v <= 1.0
    if family == "square":
        return np.maximum(np.abs(u), np.abs(v)) <= 1.0
    if family == "triangle":
        return (v >= -1.0) & (v <= 1.0 - 2.0 * np.abs(u))
    if family == "ring":
        r2 = u * u + v * v
        return (r2 <= 1.0) & (r2 >= 0.32 ** 2)
    if family == "cross":
        return ((np.abs(u) <= 0.45) & (np.abs(v) <= 1.0)) | \
               ((np.abs(v) <= 0.45) & (np.abs(u) <= 1.0))
    if family == "bar":
        return (np.abs(u) <= 1.0) & (np.abs(v) <= 0.45)
    if family == "crescent":
        inside = u * u + v * v <= 1.0
        bite = (u - 0.85) ** 2 + v ** 2 <= 0.65 ** 2
        return inside & ~bite
    if family == "diamond":
        return np.abs(u) + np.abs(v) <= 1.0
    raise ValueError(f"unknown shape family {family!r}")


def _texture_field(spec, cx, cy, half, theta):
    """Per-pixel brightness multiplier in [0.6, 1] from the texture."""
    yy, xx = np.mgrid[0:CANVAS, 0:CANVAS]
    px = (xx + 0.5 - cx) / half
    py = (yy + 0.5 - cy) / half
    c, s = np.cos(-theta), np.sin(-theta)
    u = c * px - s * py
    v = s * px + c * py
    if spec.texture == "solid":
        return np.ones((CANVAS, CANVAS))
    if spec.texture == "stripes":
        angle, freq = spec.texture_params
        phase = np.sin(np.pi * freq * (u * np.cos(angle) + v * np.sin(angle)))
        return np.where(phase >= 0, 1.0, 0.65)
    if spec.texture == "checker":
        cell = spec.texture_params[0]
        parity = (np.floor(u / cell) + np.floor(v / cell)) % 2
        return np.where(parity == 0, 1.0, 0.65)
    if spec.texture == "speckle":
        density = spec.texture_params[0]
        iu, iv = np.floor(u * 4.0), np.floor(v * 4.0)
        hsh = np.sin(iu * 12.9898 + iv * 78.233) * 43758.5453
        return np.where(hsh - np.floor(hsh) < density, 0.6, 1.0)
    raise ValueError(f"unknown texture {spec.texture!r}")


def _paint(image, spec, cx, cy, half, theta):
    fp = _footprint(spec.family, cx, cy, half, theta)
    rgb = np.array(_hsv_to_rgb(*spec.color))
    tex = _texture_field(spec, cx, cy, half, theta)
    for ch in range(3):
        image[ch][fp] = rgb[ch] * tex[fp]
    return fp


def _background(rng):
    c0 = rng.uniform(0.15, 0.55) + rng.uniform(-0.08, 0.08, size=3)
    c1 = rng.uniform(0.15, 0.55) + rng.uniform(-0.08, 0.08, size=3)
    angle = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:CANVAS, 0:CANVAS]
    t = ((xx * np.cos(angle) + yy * np.sin(angle)) / CANVAS + 1.0) / 2.0
    img = c0[:, None, None] * (1 - t) + c1[:, None, None] * t
    img += rng.normal(0.0, BACKGROUND_NOISE_SIGMA, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _place(rng, spec):
    half = 0.5 * CANVAS * spec.base_size * rng.uniform(0.5, 1.0)
    cx = rng.uniform(half * 0.3, CANVAS - half * 0.3)
    cy = rng.uniform(half * 0.3, CANVAS - half * 0.3)
    theta = rng.uniform(0, 2 * np.pi)
    return cx, cy, half, theta


def render_sample(target: ObjectSpec, library, rng) -> SceneSample:
    """Render one scene containing ``target`` plus 0-3 distractors.

    Resamples geometry up to MAX_RENDER_ATTEMPTS times until at least
    VISIBILITY_FLOOR target pixels are visible.
    """
    pool = [s for s in library if s.object_id != target.object_id]
    for _ in range(MAX_RENDER_ATTEMPTS):
        image = _background(rng)
        n_dis = int(rng.integers(0, 4)) if pool else 0
        distractors = [pool[int(rng.integers(len(pool)))] for _ in range(n_dis)]
        stack = distractors + [target]
        order = rng.permutation(len(stack))
        target_pos = int(np.where(order == len(stack) - 1)[0][0])
        footprints = []
        for idx in order:
            footprints.append(_paint(image, stack[idx], *_place(rng, stack[idx])))
        mask = footprints[target_pos].copy()
        for above in footprints[target_pos + 1:]:
            mask &= ~above
        if mask.sum() >= VISIBILITY_FLOOR:
            image = np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0
            return SceneSample(image=image, mask=mask.astype(np.float64))
    raise RenderFailure(
        f"object {target.object_id}: no visible placement in {MAX_RENDER_ATTEMPTS} attempts")


def _dataset_seed(seed, object_id):
    return (int(seed) ^ zlib.crc32(object_id.encode())) & 0xFFFFFFFFFFFFFFFF


def sample_marginal(target: ObjectSpec, library, n: int, seed: int) -> MarginalDataset:
    """Draw ``n`` samples for one object; 80/20 train/holdout split.

    Sample ``i`` uses Philox key (mixed seed, i), so any subset can be
    generated independently and results never depend on generation order.
    """
    if n < 5:
        raise ValueError(f"sample_marginal: need n >= 5, got n={n}")
    base = _dataset_seed(seed, target.object_id)
    samples = [render_sample(target, library, _stream(base, i + 1)) for i in range(n)]
    n_hold = max(1, round(n * HOLDOUT_FRACTION))
    return MarginalDataset(object_id=target.object_id,
                           train=tuple(samples[: n - n_hold]),
                           holdout=tuple(samples[n - n_hold:]),
                           seed=int(seed))


# ---------------------------------------------------------------------------
# persistence: manifest.json + PPM images + PGM masks
# ---------------------------------------------------------------------------

def _write_ppm(path, image):
    arr = np.round(image * 255.0).astype(np.uint8)  # (3,H,W)
    body = arr.transpose(1, 2, 0).tobytes()
    path.write_bytes(f"P6\n{CANVAS} {CANVAS}\n255\n".encode() + body)


def _write_pgm(path, mask):
    arr = (mask > 0.5).astype(np.uint8) * 255
    path.write_bytes(f"P5\n{CANVAS} {CANVAS}\n255\n".encode() + arr.tobytes())


def _read_netpbm(path, magic, channels):
    raw = path.read_bytes()
    header_fields, pos, fields_needed = [], 0, 4
    while len(header_fields) < fields_needed:
        if pos >= len(raw):
            raise DatasetParseError(f"{path}: truncated header at byte {pos}")
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        if end > pos:
            header_fields.append(raw[pos:end])
        pos = end + 1
    if header_fields[0] != magic.encode():
        raise DatasetParseError(f"{path}: bad magic {header_fields[0]!r} at byte 0")
    w, h, maxval = (int(f) for f in header_fields[1:4])
    if maxval != 255:
        raise DatasetParseError(f"{path}: unsupported maxval {maxval} at byte {pos}")
    need = w * h * channels
    body = raw[pos:pos + need]
    if len(body) != need:
        raise DatasetParseError(
            f"{path}: body truncated at byte {pos + len(body)} (need {need} bytes)")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, channels), w, h


def persist_dataset(ds: MarginalDataset, directory) -> None:
    """Write manifest.json, img_%04d.ppm and mask_%04d.pgm."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    samples = list(ds.train) + list(ds.holdout)
    manifest = {
        "format_version": 1,
        "object_id": ds.object_id,
        "seed": ds.seed,
        "count": len(samples),
        "train_indices": list(range(len(ds.train))),
        "holdout_indices": list(range(len(ds.train), len(samples))),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))
    for i, s in enumerate(samples):
        _write_ppm(directory / f"img_{i:04d}.ppm", s.image)
        _write_pgm(directory / f"mask_{i:04d}.pgm", s.mask)


def load_dataset(directory) -> MarginalDataset:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    count = manifest["count"]
    imgs = sorted(directory.glob("img_*.ppm"))
    masks = sorted(directory.glob("mask_*.pgm"))
    if len(imgs) != count or len(masks) != count:
        raise DatasetIntegrityError(
            f"{directory}: manifest count {count} but found "
            f"{len(imgs)} images / {len(masks)} masks")
    samples = []
    for i in range(count):
        rgb, _, _ = _read_netpbm(directory / f"img_{i:04d}.ppm", "P6", 3)
        m, _, _ = _read_netpbm(directory / f"mask_{i:04d}.pgm", "P5", 1)
        samples.append(SceneSample(image=rgb.transpose(2, 0, 1).astype(np.float64) / 255.0,
                                   mask=(m[:, :, 0] > 127).astype(np.float64)))
    train = tuple(samples[i] for i in manifest["train_indices"])
    holdout = tuple(samples[i] for i in manifest["holdout_indices"])
    return MarginalDataset(object_id=manifest["object_id"], train=train,
                           holdout=holdout, seed=int(manifest["seed"]))
