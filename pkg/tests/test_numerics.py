"""Unit tests for the tensor/autodiff core.

Oracles: a direct 6-loop convolution reference, central differences, and the
closed-form first Adam step from zero moments.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from objpursuit import numerics as nm
from objpursuit.errors import NumericFault, ShapeError
from objpursuit.numerics import Tensor


def conv2d_reference(x, k, b, stride=1, pad=0):
    """Direct 6-loop cross-correlation; the frozen oracle for conv2d."""
    n, ci, h, w = x.shape
    co, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, co, ho, wo))
    for ni in range(n):
        for o in range(co):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[ni, :, i * stride:i * stride + kh,
                               j * stride:j * stride + kw]
                    out[ni, o, i, j] = (patch * k[o]).sum() + b[o]
    return out


class TestConv2d:
    def test_matches_loop_oracle_random(self):
        rng = np.random.default_rng(0)
        for stride, pad in [(1, 0), (1, 1), (2, 1), (3, 0)]:
            x = rng.normal(size=(2, 3, 9, 9))
            k = rng.normal(size=(4, 3, 3, 3))
            b = rng.normal(size=4)
            got = nm.conv2d(Tensor(x), Tensor(k), Tensor(b), stride, pad).data
            want = conv2d_reference(x, k, b, stride, pad)
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_identity_kernel(self):
        x = np.arange(25, dtype=float).reshape(1, 1, 5, 5)
        k = np.zeros((1, 1, 3, 3))
        k[0, 0, 1, 1] = 1.0
        got = nm.conv2d(Tensor(x), Tensor(k), Tensor(np.zeros(1)), 1, 1).data
        np.testing.assert_array_equal(got, x)

    def test_floor_division_output_size(self):
        # 32x32, k=3, pad=1, stride=2 -> 16 (the encoder's shape)
        x = Tensor(np.zeros((1, 1, 32, 32)))
        out = nm.conv2d(x, Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros(1)),
                        stride=2, pad=1)
        assert out.shape == (1, 1, 16, 16)

    def test_unbatched_input(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 8, 8))
        k = rng.normal(size=(2, 3, 3, 3))
        b = rng.normal(size=2)
        got = nm.conv2d(Tensor(x), Tensor(k), Tensor(b), 1, 1)
        want = conv2d_reference(x[None], k, b, 1, 1)[0]
        assert got.shape == want.shape
        np.testing.assert_allclose(got.data, want, rtol=1e-12)

    @pytest.mark.parametrize("bad", [
        dict(kshape=(2, 3, 2, 2)),            # even kernel
        dict(kshape=(2, 4, 3, 3)),            # channel mismatch
        dict(kshape=(2, 3, 3, 3), bshape=3),  # bias mismatch
        dict(kshape=(2, 3, 3, 3), stride=0),  # bad stride
    ])
    def test_shape_errors(self, bad):
        x = Tensor(np.zeros((1, 3, 8, 8)))
        k = Tensor(np.zeros(bad["kshape"]))
        b = Tensor(np.zeros(bad.get("bshape", bad["kshape"][0])))
        with pytest.raises(ShapeError):
            nm.conv2d(x, k, b, stride=bad.get("stride", 1))

    def test_too_small_input(self):
        with pytest.raises(ShapeError):
            nm.conv2d(Tensor(np.zeros((1, 1, 2, 2))),
                      Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros(1)))

    def test_gradients_finite_difference(self):
        rng = np.random.default_rng(2)
        x0 = rng.normal(size=(1, 2, 6, 6))
        k0 = rng.normal(size=(3, 2, 3, 3))
        b0 = rng.normal(size=3)

        def wrt_x(t):
            return nm.tsum(nm.conv2d(t, Tensor(k0), Tensor(b0), 2, 1))

        def wrt_k(t):
            return nm.tsum(nm.conv2d(Tensor(x0), t, Tensor(b0), 2, 1))

        def wrt_b(t):
            return nm.tsum(nm.conv2d(Tensor(x0), Tensor(k0), t, 2, 1))

        assert nm.grad_check(wrt_x, Tensor(x0)) < 1e-6
        assert nm.grad_check(wrt_k, Tensor(k0)) < 1e-6
        assert nm.grad_check(wrt_b, Tensor(b0)) < 1e-6


class TestElementwise:
    def test_add_shape_mismatch(self):
        with pytest.raises(ShapeError):
            nm.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))

    def test_leaky_relu_values(self):
        x = Tensor(np.array([-2.0, 0.5]))
        np.testing.assert_allclose(nm.leaky_relu(x).data, [-0.02, 0.5])

    def test_sigmoid_extremes_saturate_without_warning(self):
        x = Tensor(np.array([-1e6, 0.0, 1e6]))
        got = nm.sigmoid(x).data
        np.testing.assert_allclose(got, [0.0, 0.5, 1.0], atol=1e-200)
        assert np.all(np.isfinite(got))

    def test_upsample_values_and_grad(self):
        x0 = np.arange(4.0).reshape(2, 2)
        up = nm.upsample_nearest_2x(Tensor(x0)).data
        assert up.shape == (4, 4)
        assert up[0, 0] == up[0, 1] == up[1, 1] == 0.0
        assert up[2, 2] == 3.0 or up[2, 2] == 2.0  # block structure
        np.testing.assert_array_equal(up[:2, :2], np.full((2, 2), x0[0, 0]))
        assert nm.grad_check(lambda t: nm.tsum(nm.upsample_nearest_2x(t)),
                             Tensor(np.random.default_rng(3).normal(size=(3, 4)))) < 1e-7

    def test_flat_prefix(self):
        x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
        out = nm.flat_prefix(x, 5)
        np.testing.assert_array_equal(out.data, np.arange(5.0))
        nm.tsum(out).backward()
        want = np.zeros(12)
        want[:5] = 1.0
        np.testing.assert_array_equal(x.grad, want.reshape(3, 4))

    def test_weighted_sum_matches_matmul(self):
        rng = np.random.default_rng(4)
        mu, basis = rng.normal(size=5), rng.normal(size=(5, 7))
        got = nm.weighted_sum(Tensor(mu), Tensor(basis)).data
        np.testing.assert_allclose(got, mu @ basis, rtol=1e-14)

    def test_l1_distance_shape_error(self):
        with pytest.raises(ShapeError):
            nm.l1_distance(Tensor(np.zeros(3)), np.zeros(4))


class TestBackward:
    def test_backward_requires_scalar(self):
        t = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ShapeError):
            t.backward()

    def test_grad_accumulates_through_shared_node(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        y = nm.add(x, x)  # dy/dx = 2
        y.backward()
        assert x.grad == pytest.approx(2.0)

    def test_constant_tensors_record_no_graph(self):
        a, b = Tensor(np.zeros(3)), Tensor(np.ones(3))
        out = nm.add(a, b)
        assert out._parents == () and out._backward is None


class TestAdam:
    def test_first_step_closed_form(self):
        # from zero moments, one step moves by exactly lr * g/(|g| + eps')
        # with bias correction: m_hat = g, v_hat = g^2
        g = np.array([0.3, -1.7, 0.0])
        p = Tensor(np.zeros(3), requires_grad=True)
        p.grad = g.copy()
        st_ = nm.AdamState([p], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8)
        nm.adam_step(st_)
        want = -1e-3 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(p.data, want, rtol=1e-12)

    def test_skips_none_grad(self):
        p = Tensor(np.ones(2), requires_grad=True)
        st_ = nm.AdamState([p])
        nm.adam_step(st_)
        np.testing.assert_array_equal(p.data, np.ones(2))

    def test_nan_grad_raises(self):
        p = Tensor(np.zeros(1), requires_grad=True)
        p.grad = np.array([np.nan])
        with pytest.raises(NumericFault):
            nm.adam_step(nm.AdamState([p]))

    def test_determinism(self):
        def run():
            rng = np.random.default_rng(5)
            p = Tensor(rng.normal(size=4), requires_grad=True)
            st_ = nm.AdamState([p])
            for _ in range(10):
                p.grad = rng.normal(size=4)
                nm.adam_step(st_)
            return p.data.copy()

        np.testing.assert_array_equal(run(), run())


class TestGradCheckHarness:
    def test_clean_quadratic_passes(self):
        fn = lambda t: nm.tsum(nm.scale(t, 2.0))
        assert nm.grad_check(fn, Tensor(np.ones(3))) < 1e-9

    def test_detects_wrong_gradient(self):
        def bad(t):
            out = Tensor(t.data.sum() * 3.0, _parents=(t,))

            def bw(g):
                if t.requires_grad:
                    t._accumulate(np.full(t.data.shape, 1.0))  # should be 3

            out._backward = bw if out.requires_grad else None
            return out

        assert nm.grad_check(bad, Tensor(np.ones(3))) > 0.1

    def test_invalid_h(self):
        with pytest.raises(ValueError):
            nm.grad_check(lambda t: nm.tsum(t), Tensor(np.ones(2)), h=0.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(min_value=-10, max_value=10), min_size=1, max_size=8))
def test_l1_is_nonnegative_and_homogeneous(vals):
    v = np.array(vals)
    out = nm.l1(Tensor(v)).data
    assert out >= 0
    np.testing.assert_allclose(nm.l1(Tensor(2.0 * v)).data, 2.0 * out, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=1, max_value=6))
def test_upsample_doubles_shape(h, w):
    out = nm.upsample_nearest_2x(Tensor(np.zeros((h, w))))
    assert out.shape == (2 * h, 2 * w)
