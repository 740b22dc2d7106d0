"""Checkpoint persistence: meta.json manifest + weights.bin 32-bit LE blobs.

Covers encoder, hypernetwork, base latents, and the registry.  Values are
float64 in memory and serialized as little-endian float32, so a saved and
reloaded state re-serializes byte-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nets import EncoderParams, HypernetParams
from .objectives import QualityConfig
from .pursuit import OptimConfig, PursuitState, RegistryEntry, StepBudgets

FORMAT_VERSION = 1


def _state_tensors(state: PursuitState):
    """Name -> numpy array, in manifest order."""
    out = {}
    for k, t in state.enc.tensors().items():
        out[k] = t.data
    for k, t in state.psi.tensors().items():
        out[k] = t.data
    for i, z in enumerate(state.bases):
        out[f"base.{i:03d}"] = z
    for i, e in enumerate(state.registry):
        out[f"mu.{i:03d}"] = e.mu
    return out


def save_state(state: PursuitState, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = _state_tensors(state)
    offsets, blobs, pos = {}, [], 0
    for name, arr in tensors.items():
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        offsets[name] = {"shape": list(arr.shape), "offset": pos, "bytes": len(blob)}
        blobs.append(blob)
        pos += len(blob)
    meta = {
        "format_version": FORMAT_VERSION,
        "latent_dim": 16,
        "seed": state.seed,
        "step": state.step,
        "n_bases": len(state.bases),
        "config": vars(state.config),
        "budgets": vars(state.budgets),
        "optim": vars(state.optim),
        "registry": [{"object_id": e.object_id, "provenance": e.provenance,
                      "quality": e.quality} for e in state.registry],
        "tensors": offsets,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=1))
    (directory / "weights.bin").write_bytes(b"".join(blobs))


def load_state(directory) -> PursuitState:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise CheckpointError(f"{directory}: missing meta.json")
    meta = json.loads(meta_path.read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{directory}: incompatible checkpoint version "
            f"{meta.get('format_version')} (expected {FORMAT_VERSION})")
    raw = (directory / "weights.bin").read_bytes()
    expected = sum(t["bytes"] for t in meta["tensors"].values())
    if len(raw) != expected:
        raise CheckpointError(
            f"{directory}: weights.bin has {len(raw)} bytes, manifest expects {expected}")

    def read(name):
        info = meta["tensors"][name]
        blob = raw[info["offset"]:info["offset"] + info["bytes"]]
        return np.frombuffer(blob, dtype="<f4").astype(np.float64).reshape(info["shape"])

    enc = EncoderParams()
    for k, t in enc.tensors().items():
        t.data = read(k)
    psi = HypernetParams()
    for k, t in psi.tensors().items():
        t.data = read(k)
    state = PursuitState(enc, psi, QualityConfig(**meta["config"]),
                         budgets=StepBudgets(**meta["budgets"]),
                         optim=OptimConfig(**meta["optim"]), seed=meta["seed"])
    state.step = meta["step"]
    for i in range(meta["n_bases"]):
        state.bases.append(read(f"base.{i:03d}"))
    for i, entry in enumerate(meta["registry"]):
        state.registry.append(RegistryEntry(object_id=entry["object_id"],
                                            mu=read(f"mu.{i:03d}"),
                                            provenance=entry["provenance"],
                                            quality=entry["quality"]))
    return state
