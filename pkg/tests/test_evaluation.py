"""Evaluation harness tests: metric formulas, base ranking, re-identification
bookkeeping, and few-shot argument validation.  Heavy quality-level behavior
lives in the acceptance suite."""

import numpy as np
import pytest

from objpursuit import evaluation as ev, nets, pursuit as pe, scenesim as sim
from objpursuit.objectives import QualityConfig

TINY = pe.StepBudgets(express=3, base=4, pretrain=5, fewshot=3, batch=4)


def make_event(object_id, outcome):
    return pe.PursuitEvent(object_id=object_id, outcome=outcome, scores={},
                           duration=0.0, step=0)


@pytest.fixture(scope="module")
def small_state():
    pre, pur, uns = sim.make_object_library(5, 2, 2, 2, 1)
    lib = pre + pur + uns
    datasets = {s.object_id: sim.sample_marginal(s, lib, 8, 3) for s in lib}
    rng = np.random.Generator(np.random.Philox(key=[2, 0]))
    state = pe.PursuitState(nets.EncoderParams(rng), nets.HypernetParams(rng),
                            QualityConfig(tau=0.5), budgets=TINY)
    state.append_base(np.ones(16) * 0.1)
    state.register("pre_00", np.array([1.0]), "base", 0.9)
    return state, lib, datasets, (pre, pur, uns)


class TestDynamicsMetrics:
    def test_fraction_formulas(self, small_state):
        state, _, datasets, _ = small_state
        events = [make_event("pre_00", o) for o in
                  ("new_base", "expressed", "seen", "redundant_after_training",
                   "unqualified")]
        rep = ev.dynamics_metrics(events, state, datasets)
        assert rep.n_presented == 5
        assert rep.base_fraction == pytest.approx(1 / 5)
        assert rep.learned_fraction == pytest.approx(3 / 5)
        assert rep.expressed_rate == pytest.approx(1 / 5)
        assert rep.failed_rate == pytest.approx(2 / 5)
        assert rep.base_fraction <= rep.learned_fraction <= 1.0

    def test_all_bases_means_no_expression(self, small_state):
        state, _, datasets, _ = small_state
        events = [make_event("pre_00", "new_base")] * 4
        rep = ev.dynamics_metrics(events, state, datasets)
        assert rep.base_fraction == rep.learned_fraction == 1.0
        assert rep.expressed_rate == 0.0

    def test_all_seen_stream(self, small_state):
        state, _, datasets, _ = small_state
        rep = ev.dynamics_metrics([make_event("pre_00", "seen")] * 3,
                                  state, datasets)
        assert (rep.base_fraction, rep.learned_fraction,
                rep.expressed_rate, rep.failed_rate) == (0, 0, 0, 0)
        assert rep.n_presented == 3

    def test_empty_events_rejected(self, small_state):
        state, _, datasets, _ = small_state
        with pytest.raises(ValueError):
            ev.dynamics_metrics([], state, datasets)

    def test_quality_evaluated_under_final_psi(self, small_state):
        state, _, datasets, _ = small_state
        events = [make_event("pre_00", "new_base")]
        before = ev.dynamics_metrics(events, state, datasets).mean_quality
        snap = state.psi.snapshot()
        for t in state.psi.parameters():
            t.data[...] = 0.0  # degenerate hypernetwork -> constant decoder
        # push the generated output-layer bias strongly negative: the decoder
        # now predicts all-background, which must move A_mu
        state.psi.layers["dec3"]["bias_b"].data[...] = -10.0
        after = ev.dynamics_metrics(events, state, datasets).mean_quality
        state.psi.restore(snap)
        assert before != after  # A_mu reflects the current hypernetwork


class TestForgettingRate:
    def test_empty_registry_rejected(self):
        rng = np.random.Generator(np.random.Philox(key=[4, 0]))
        state = pe.PursuitState(nets.EncoderParams(rng), nets.HypernetParams(rng),
                                QualityConfig(), budgets=TINY)
        with pytest.raises(ValueError):
            ev.forgetting_rate(state, {})

    def test_rate_is_fraction_below_tau(self, small_state):
        state, _, datasets, _ = small_state
        rate = ev.forgetting_rate(state, datasets)
        assert rate in (0.0, 1.0)  # one registry entry


class TestReidEval:
    def test_row_per_presented_object(self, small_state):
        state, lib, _, (pre, pur, uns) = small_state
        rep = ev.reid_eval(state, pre[:1], uns, lib, seed=9, samples_per_object=6)
        assert len(rep["rows"]) == 1 + len(uns)
        assert {r["object_id"] for r in rep["rows"]} == \
            {pre[0].object_id} | {u.object_id for u in uns}

    def test_empty_unseen_gives_null_unseen_precision(self, small_state):
        state, lib, _, (pre, _, _) = small_state
        rep = ev.reid_eval(state, pre[:1], [], lib, seed=9, samples_per_object=6)
        assert rep["unseen_precision"] is None
        assert rep["unseen_recall"] is None

    def test_claim_counts_are_consistent(self, small_state):
        state, lib, _, (pre, _, uns) = small_state
        rep = ev.reid_eval(state, pre[:1], uns, lib, seed=9, samples_per_object=6)
        claimed = sum(r["claimed_seen"] for r in rep["rows"])
        unseen_claims = rep["unseen_claimed_seen"]
        assert (rep["near_duplicate_claimed_seen"]
                + rep["fresh_unseen_claimed_seen"]) == unseen_claims
        assert unseen_claims <= claimed

    def test_threshold_monotonicity(self, small_state):
        # with a fixed registry, raising tau can only shrink the claimed set
        state, lib, _, (pre, _, uns) = small_state
        claims = []
        for tau in (0.3, 0.5, 0.7):
            rep = ev.reid_eval(state, pre[:1], uns, lib, seed=9,
                               samples_per_object=6, tau=tau)
            claims.append(sum(r["claimed_seen"] for r in rep["rows"]))
        assert claims[0] >= claims[1] >= claims[2]


class TestFewshot:
    def test_argument_validation(self, small_state):
        state, lib, _, (_, _, uns) = small_state
        with pytest.raises(ValueError):
            ev.fewshot_learn(state, uns[0], lib, 0, "manifold", 1)
        with pytest.raises(ValueError):
            ev.fewshot_learn(state, uns[0], lib, 1, "psychic", 1)

    def test_manifold_needs_bases(self):
        rng = np.random.Generator(np.random.Philox(key=[6, 0]))
        state = pe.PursuitState(nets.EncoderParams(rng), nets.HypernetParams(rng),
                                QualityConfig(), budgets=TINY)
        pre, _, uns = sim.make_object_library(5, 1, 1, 1, 0)
        with pytest.raises(ValueError):
            ev.fewshot_learn(state, uns[0], pre + uns, 1, "manifold", 1)

    def test_returns_quality_in_unit_interval(self, small_state):
        state, lib, _, (_, _, uns) = small_state
        for mode in ("manifold", "full"):
            q = ev.fewshot_learn(state, uns[0], lib, 1, mode, seed=4)
            assert 0.0 <= q <= 1.0

    def test_deterministic_in_seed(self, small_state):
        state, lib, _, (_, _, uns) = small_state
        a = ev.fewshot_learn(state, uns[0], lib, 2, "manifold", seed=8)
        b = ev.fewshot_learn(state, uns[0], lib, 2, "manifold", seed=8)
        assert a == b

    def test_fewshot_leaves_state_untouched(self, small_state):
        state, lib, _, (_, _, uns) = small_state
        before = state.psi.snapshot()
        ev.fewshot_learn(state, uns[0], lib, 1, "full", seed=2)
        for k, t in state.psi.tensors().items():
            np.testing.assert_array_equal(before[k], t.data)
        assert all(p.requires_grad for p in state.psi.parameters())


class TestRankBases:
    def test_one_hot(self):
        assert ev.rank_bases(np.array([0.0, 1.0, 0.0]), 1) == [(1, 1.0)]

    def test_descending_order_with_tie_break(self):
        got = ev.rank_bases(np.array([0.5, 0.9, 0.5]), 3)
        assert got == [(1, 0.9), (0, 0.5), (2, 0.5)]

    def test_k_too_large_rejected(self):
        with pytest.raises(ValueError):
            ev.rank_bases(np.zeros(2), 3)

    def test_selection_is_subsequence_of_mu(self):
        mu = np.array([0.3, -0.2, 0.8, 0.1])
        got = ev.rank_bases(mu, 2)
        assert all(mu[i] == c for i, c in got)
