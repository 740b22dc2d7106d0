"""Checkpoint persistence: float32 round-trips, byte-identical re-saves,
and corruption diagnostics."""

import json

import numpy as np
import pytest

from objpursuit import checkpoint, nets, pursuit as pe
from objpursuit.errors import CheckpointError
from objpursuit.objectives import QualityConfig


def make_state(seed=0):
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    state = pe.PursuitState(nets.EncoderParams(rng), nets.HypernetParams(rng),
                            QualityConfig(tau=0.7, beta=0.02),
                            budgets=pe.StepBudgets(express=9),
                            optim=pe.OptimConfig(lr=2e-3), seed=seed)
    state.append_base(rng.normal(size=16))
    state.append_base(rng.normal(size=16))
    state.register("obj_a", np.array([1.0, 0.0]), "base", 0.81)
    state.register("obj_b", np.array([0.25, 0.5]), "expressed", 0.72)
    state.step = 5
    return state


class TestRoundTrip:
    def test_values_survive_float32_round_trip(self, tmp_path):
        state = make_state()
        checkpoint.save_state(state, tmp_path)
        back = checkpoint.load_state(tmp_path)
        for (ka, ta), (kb, tb) in zip(state.psi.tensors().items(),
                                      back.psi.tensors().items()):
            assert ka == kb
            np.testing.assert_array_equal(
                ta.data.astype(np.float32), tb.data.astype(np.float32))
        assert back.config == state.config
        assert back.budgets == state.budgets
        assert back.optim == state.optim
        assert back.seed == state.seed and back.step == state.step

    def test_registry_round_trip(self, tmp_path):
        state = make_state()
        checkpoint.save_state(state, tmp_path)
        back = checkpoint.load_state(tmp_path)
        assert [e.object_id for e in back.registry] == ["obj_a", "obj_b"]
        assert [e.provenance for e in back.registry] == ["base", "expressed"]
        assert [e.quality for e in back.registry] == [0.81, 0.72]
        np.testing.assert_array_equal(back.registry[1].mu,
                                      np.array([0.25, 0.5], dtype=np.float32))

    def test_resave_is_byte_identical(self, tmp_path):
        state = make_state()
        a, b = tmp_path / "a", tmp_path / "b"
        checkpoint.save_state(state, a)
        checkpoint.save_state(checkpoint.load_state(a), b)
        assert (a / "weights.bin").read_bytes() == (b / "weights.bin").read_bytes()
        assert (a / "meta.json").read_text() == (b / "meta.json").read_text()

    def test_loaded_encoder_is_frozen(self, tmp_path):
        checkpoint.save_state(make_state(), tmp_path)
        back = checkpoint.load_state(tmp_path)
        assert back.enc.frozen


class TestCorruption:
    def test_missing_meta(self, tmp_path):
        with pytest.raises(CheckpointError, match="meta.json"):
            checkpoint.load_state(tmp_path)

    def test_version_mismatch(self, tmp_path):
        checkpoint.save_state(make_state(), tmp_path)
        meta = json.loads((tmp_path / "meta.json").read_text())
        meta["format_version"] = 99
        (tmp_path / "meta.json").write_text(json.dumps(meta))
        with pytest.raises(CheckpointError, match="version"):
            checkpoint.load_state(tmp_path)

    def test_truncated_weights(self, tmp_path):
        checkpoint.save_state(make_state(), tmp_path)
        blob = (tmp_path / "weights.bin").read_bytes()
        (tmp_path / "weights.bin").write_bytes(blob[:-8])
        with pytest.raises(CheckpointError, match="bytes"):
            checkpoint.load_state(tmp_path)
