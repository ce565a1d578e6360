import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline

from labnav import autodiff as ad
from labnav.spline import segment_trajectory, spline_interpolate

from conftest import numeric_grad, rel_err

START = np.array([0.0, 0.0, 0.3])


def test_counts_and_knots():
    K = np.array([[1.0, 0.5, 0.3], [2.0, -0.2, 0.9]])
    tau = spline_interpolate(K, 3, START).data
    assert tau.shape == (7, 3)
    np.testing.assert_array_equal(tau[0], START)
    np.testing.assert_allclose(tau[3], K[0], atol=1e-12)
    np.testing.assert_allclose(tau[6], K[1], atol=1e-12)


def test_single_segment_is_linear():
    tau = spline_interpolate(np.array([[1.0, 0.0, 0.3]]), 2, START).data
    np.testing.assert_allclose(tau[1], [0.5, 0.0, 0.3], atol=1e-15)


def test_matches_scipy_natural_spline():
    r = np.random.default_rng(3)
    K = r.normal(size=(5, 3))
    tau = spline_interpolate(K, 8, START).data
    knots = np.vstack([START, K])
    cs = CubicSpline(np.arange(6), knots, bc_type="natural")
    np.testing.assert_allclose(tau, cs(np.arange(41) / 8), atol=1e-12)


def test_collinear_stays_collinear():
    K = np.array([[1.0, 0, 0.3], [2.0, 0, 0.3], [3.0, 0, 0.3]])
    tau = spline_interpolate(K, 5, START).data
    np.testing.assert_allclose(tau[:, 1:], np.tile([0.0, 0.3], (16, 1)), atol=1e-12)
    np.testing.assert_allclose(np.diff(tau[:, 0]), 0.2, atol=1e-12)


def test_batched_matches_single():
    r = np.random.default_rng(0)
    K = r.normal(size=(4, 3, 3))
    batch = spline_interpolate(K, 4, START).data
    for b in range(4):
        np.testing.assert_allclose(batch[b], spline_interpolate(K[b], 4, START).data, atol=1e-15)


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        spline_interpolate(np.array([[1.0, np.inf, 0.3]]), 3, START)


def test_gradient_wrt_keypoints():
    r = np.random.default_rng(1)
    K = r.normal(size=(4, 3))
    w = r.normal(size=(4 * 6 + 1, 3))
    Kt = ad.Tensor(K, requires_grad=True)
    ad.backward(ad.sum(ad.mul(spline_interpolate(Kt, 6, START), w)))

    def f():
        return float(np.sum(spline_interpolate(K, 6, START).data * w))

    num = numeric_grad(f, K)
    assert rel_err(Kt.grad, num).max() <= 1e-6


def test_c2_continuity_under_refinement():
    K = np.array([[1.0, 1.0, 0.3], [2.0, -1.0, 0.5], [3.0, 0.5, 0.3]])
    jumps = []
    for m in (8, 16, 32):
        tau = spline_interpolate(K, m, START).data
        acc = (tau[2:] - 2 * tau[1:-1] + tau[:-2]) * m * m
        # second derivative just before and after the interior knots
        jumps.append(max(np.abs(acc[j * m] - acc[j * m - 2]).max() for j in (1, 2)))
    assert jumps[2] < jumps[1] < jumps[0]


def test_segments():
    r = np.random.default_rng(2)
    K = r.normal(size=(5, 3))
    tau = spline_interpolate(K, 8, START).data
    segs = segment_trajectory(tau, K)
    assert len(segs) == 5 and all(s.shape == (9, 3) for s in segs)
    for j, s in enumerate(segs):
        np.testing.assert_array_equal(s[-1], tau[8 * (j + 1)])
        np.testing.assert_allclose(s[-1], K[j], atol=1e-12)
    np.testing.assert_array_equal(np.concatenate([segs[0]] + [s[1:] for s in segs[1:]]), tau)
    with pytest.raises(ValueError):
        segment_trajectory(tau[:-1], K)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.integers(1, 16), st.integers(0, 2**31 - 1))
def test_spline_contract(n, m, seed):
    r = np.random.default_rng(seed)
    K = r.uniform(-5, 5, size=(n, 3))
    tau = spline_interpolate(K, m, START).data
    assert tau.shape == (m * n + 1, 3)
    knots = np.vstack([START, K])
    assert np.abs(tau[::m] - knots).max() <= 1e-12
    # collinear input: points along a random direction
    d = r.normal(size=3)
    s = np.sort(r.uniform(0.1, 5, size=n))
    tau = spline_interpolate(START + s[:, None] * d, m, START).data
    off = tau - START
    resid = off - np.outer(off @ d / (d @ d), d)
    assert np.abs(resid).max() <= 1e-12
