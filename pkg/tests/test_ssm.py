import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dest3d.numerics import PrngStream
from dest3d.ssm import (
    ScanInputs,
    discretize_zoh,
    finite_diff_grad,
    lti_conv_form,
    scan_backward,
    scan_chunked,
    scan_sequential,
)


def random_inputs(seed, m, k, e):
    rng = PrngStream(seed)
    delta = rng.uniform((m, k, e), 0.0, 1.0)
    a = -rng.uniform((e,), 0.2, 1.5)
    a_bar, b_bar = discretize_zoh(delta, a, rng.normal((m, k)))
    return ScanInputs(a_bar=a_bar, b_bar=b_bar, c=rng.normal((m, k)),
                      x=rng.normal((m, e)), h0=rng.normal((k, e)))


class TestDiscretize:
    def test_zero_timestep_limit(self):
        for mode in ("euler", "exact"):
            a_bar, b_bar = discretize_zoh(np.zeros((2, 2, 2)), -np.ones(2),
                                          np.ones((2, 2)), mode=mode)
            np.testing.assert_array_equal(a_bar, 1.0)
            np.testing.assert_array_equal(b_bar, 0.0)

    def test_exact_closed_form(self):
        a_bar, b_bar = discretize_zoh(np.ones((1, 1, 1)), np.array([-1.0]),
                                      np.ones((1, 1)), mode="exact")
        np.testing.assert_allclose(a_bar.ravel()[0], np.exp(-1), rtol=1e-12)
        np.testing.assert_allclose(b_bar.ravel()[0], 1 - np.exp(-1), rtol=1e-12)

    def test_taylor_limit_agreement(self):
        delta = np.full((1, 1, 1), 1e-9)
        a = np.array([-1.0])
        b = np.full((1, 1), 2.0)
        _, euler = discretize_zoh(delta, a, b, mode="euler")
        _, exact = discretize_zoh(delta, a, b, mode="exact")
        np.testing.assert_allclose(exact, euler, rtol=1e-8)

    def test_a_bar_in_unit_interval(self):
        rng = PrngStream(4)
        a_bar, _ = discretize_zoh(rng.uniform((3, 2, 5), 0, 2),
                                  -rng.uniform((5,), 0.1, 2), rng.normal((3, 2)))
        assert (a_bar > 0).all() and (a_bar <= 1).all()

    def test_positive_a_warns_in_exact_mode(self):
        with pytest.warns(RuntimeWarning):
            discretize_zoh(np.ones((1, 1, 1)), np.array([0.5]), np.ones((1, 1)),
                           mode="exact")

    def test_negative_delta_rejected(self):
        with pytest.raises(ValueError):
            discretize_zoh(-np.ones((1, 1, 1)), np.array([-1.0]), np.ones((1, 1)))


class TestScanSequential:
    def test_frozen_states(self):
        rng = PrngStream(1)
        m, k, e = 5, 3, 2
        h0 = rng.normal((k, e))
        c = rng.normal((m, k))
        out = scan_sequential(ScanInputs(a_bar=np.ones((m, k, e)),
                                         b_bar=np.zeros((m, k, e)),
                                         c=c, x=rng.normal((m, e)), h0=h0))
        np.testing.assert_array_equal(out.h_final, h0)
        for t in range(m):
            np.testing.assert_allclose(out.y[t], c[t] @ h0, rtol=1e-14)

    def test_hand_recurrence(self):
        out = scan_sequential(ScanInputs(
            a_bar=np.full((2, 1, 1), 0.5), b_bar=np.ones((2, 1, 1)),
            c=np.ones((2, 1)), x=np.array([[1.0], [2.0]]), h0=np.zeros((1, 1))))
        np.testing.assert_allclose(out.y.ravel(), [1.0, 2.5])
        np.testing.assert_allclose(out.h_final.ravel(), [2.5])

    def test_zero_observation(self):
        inputs = random_inputs(2, 6, 2, 3)
        silenced = ScanInputs(a_bar=inputs.a_bar, b_bar=inputs.b_bar,
                              c=np.zeros_like(inputs.c), x=inputs.x, h0=inputs.h0)
        out = scan_sequential(silenced)
        np.testing.assert_array_equal(out.y, 0.0)
        ref = scan_sequential(inputs)
        np.testing.assert_array_equal(out.h_final, ref.h_final)

    def test_trace_last_equals_final(self):
        out = scan_sequential(random_inputs(3, 7, 2, 2), keep_trace=True)
        np.testing.assert_array_equal(out.h_trace[-1], out.h_final)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ScanInputs(a_bar=np.ones((2, 1, 1)), b_bar=np.ones((2, 1, 1)),
                       c=np.ones((3, 1)), x=np.ones((2, 1)), h0=np.ones((1, 1)))

    @given(seed=st.integers(0, 200))
    @settings(max_examples=20, deadline=None)
    def test_affine_superposition(self, seed):
        # the scan is affine in (x, h0) jointly
        base = random_inputs(seed, 8, 2, 3)
        rng = PrngStream(seed + 10_000)
        x2, h2 = rng.normal((8, 3)), rng.normal((2, 3))
        al, be = 0.6, -1.7

        def run(x, h0):
            return scan_sequential(ScanInputs(a_bar=base.a_bar, b_bar=base.b_bar,
                                              c=base.c, x=x, h0=h0))

        ra = run(base.x, base.h0)
        rb = run(x2, h2)
        rc = run(al * base.x + be * x2, al * base.h0 + be * h2)
        np.testing.assert_allclose(rc.y, al * ra.y + be * rb.y, atol=1e-12)
        np.testing.assert_allclose(rc.h_final, al * ra.h_final + be * rb.h_final,
                                   atol=1e-12)

    def test_stability_bound(self):
        inputs = random_inputs(5, 50, 3, 4)
        out = scan_sequential(inputs, keep_trace=True)
        bound = np.abs(inputs.h0).max() + np.abs(
            inputs.b_bar * inputs.x[:, None, :]).sum(axis=0).max()
        assert np.abs(out.h_trace).max() <= bound + 1e-12


class TestScanChunked:
    def test_single_chunk_bit_identical(self):
        inputs = random_inputs(6, 33, 2, 4)
        ref = scan_sequential(inputs)
        out = scan_chunked(inputs, 33)
        np.testing.assert_array_equal(out.y, ref.y)
        np.testing.assert_array_equal(out.h_final, ref.h_final)

    def test_chunk_one(self):
        inputs = random_inputs(7, 20, 2, 3)
        ref = scan_sequential(inputs)
        out = scan_chunked(inputs, 1)
        np.testing.assert_allclose(out.y, ref.y, atol=1e-13)
        np.testing.assert_allclose(out.h_final, ref.h_final, atol=1e-13)

    def test_spec_shape_equivalence(self):
        inputs = random_inputs(8, 257, 8, 16)
        ref = scan_sequential(inputs)
        out = scan_chunked(inputs, 64)
        assert np.abs(out.y - ref.y).max() < 1e-12
        assert np.abs(out.h_final - ref.h_final).max() < 1e-12

    @pytest.mark.parametrize("chunk", [1, 3, 7, 16, 64, 257])
    def test_many_chunk_sizes(self, chunk):
        inputs = random_inputs(9, 257, 4, 8)
        ref = scan_sequential(inputs)
        out = scan_chunked(inputs, chunk)
        assert np.abs(out.y - ref.y).max() < 1e-12

    def test_bad_chunk(self):
        with pytest.raises(ValueError):
            scan_chunked(random_inputs(1, 4, 1, 1), 0)


class TestLtiConvForm:
    def test_zero_input_matrix(self):
        rng = PrngStream(10)
        y = lti_conv_form(rng.uniform((2, 3), 0, 1), np.zeros((2, 3)),
                          rng.normal((2,)), rng.normal((6, 3)))
        np.testing.assert_array_equal(y, 0.0)

    def test_single_step(self):
        rng = PrngStream(11)
        a0, b0 = rng.uniform((3, 2), 0, 1), rng.normal((3, 2))
        c0, x = rng.normal((3,)), rng.normal((1, 2))
        y = lti_conv_form(a0, b0, c0, x)
        expected = np.einsum("k,ke,e->e", c0, b0, x[0])
        np.testing.assert_allclose(y[0], expected, rtol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_broadcast_scan(self, seed):
        rng = PrngStream(100 + seed)
        m, k, e = 32, 3, 4
        delta = rng.uniform((k, e), 0, 1)
        a_bar0 = np.exp(-delta * rng.uniform((e,), 0.2, 1.5))
        b_bar0 = delta * rng.normal((k,))[:, None]
        c0 = rng.normal((k,))
        x = rng.normal((m, e))
        y_conv = lti_conv_form(a_bar0, b_bar0, c0, x)
        scan = scan_sequential(ScanInputs(
            a_bar=np.broadcast_to(a_bar0, (m, k, e)).copy(),
            b_bar=np.broadcast_to(b_bar0, (m, k, e)).copy(),
            c=np.broadcast_to(c0, (m, k)).copy(), x=x, h0=np.zeros((k, e))))
        assert np.abs(y_conv - scan.y).max() < 1e-12


class TestScanBackward:
    def test_zero_cotangents(self):
        inputs = random_inputs(12, 5, 2, 3)
        g = scan_backward(inputs, np.zeros((5, 3)), np.zeros((2, 3)))
        for name in ("a_bar", "b_bar", "c", "x", "h0"):
            np.testing.assert_array_equal(getattr(g, name), 0.0)

    def test_single_step_closed_form(self):
        # M=K=E=1: dL/dx1 = c1*bbar1*dy1 + bbar1*dh
        a, b, c = 0.7, 1.3, -0.4
        dy, dh = 2.0, 0.5
        inputs = ScanInputs(a_bar=np.full((1, 1, 1), a), b_bar=np.full((1, 1, 1), b),
                            c=np.full((1, 1), c), x=np.full((1, 1), 0.9),
                            h0=np.full((1, 1), 0.2))
        g = scan_backward(inputs, np.full((1, 1), dy), np.full((1, 1), dh))
        np.testing.assert_allclose(g.x[0, 0], c * b * dy + b * dh, rtol=1e-14)

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        m, k, e = 6, 3, 4
        inputs = random_inputs(1000 + seed, m, k, e)
        rng = PrngStream(5000 + seed)
        wy, wh = rng.normal((m, e)), rng.normal((k, e))
        grads = scan_backward(inputs, dy=wy, dh_final=wh)
        for name in ("a_bar", "b_bar", "c", "x", "h0"):
            def f(arr, _name=name):
                kw = {n: getattr(inputs, n) for n in ("a_bar", "b_bar", "c", "x", "h0")}
                kw[_name] = arr
                out = scan_sequential(ScanInputs(**kw))
                return float((out.y * wy).sum() + (out.h_final * wh).sum())

            numeric = finite_diff_grad(f, getattr(inputs, name).copy(), step=1e-5)
            analytic = getattr(grads, name)
            diff = np.abs(analytic - numeric)
            ok = (diff <= 1e-8) | (diff <= 1e-5 * np.abs(numeric))
            assert ok.all(), f"{name}: worst diff {diff.max()}"

    def test_trace_reuse_matches_recompute(self):
        inputs = random_inputs(13, 9, 2, 3)
        rng = PrngStream(14)
        dy, dh = rng.normal((9, 3)), rng.normal((2, 3))
        trace = scan_sequential(inputs, keep_trace=True).h_trace
        g1 = scan_backward(inputs, dy, dh, h_trace=trace)
        g2 = scan_backward(inputs, dy, dh)
        np.testing.assert_array_equal(g1.a_bar, g2.a_bar)
        np.testing.assert_array_equal(g1.x, g2.x)


class TestFiniteDiff:
    def test_quadratic(self):
        grad = finite_diff_grad(lambda v: float((v**2).sum()), np.array([1.0, 2.0]))
        np.testing.assert_allclose(grad, [2.0, 4.0], atol=1e-8)

    def test_linear_exact(self):
        w = np.array([3.0, -1.0, 0.5])
        grad = finite_diff_grad(lambda v: float(v @ w), np.zeros(3))
        np.testing.assert_allclose(grad, w, atol=1e-10)

    def test_sine(self):
        grad = finite_diff_grad(lambda v: float(np.sin(v[0])), np.zeros(1))
        np.testing.assert_allclose(grad, [1.0], atol=1e-10)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            finite_diff_grad(lambda v: 0.0, np.zeros(1), step=0.0)
