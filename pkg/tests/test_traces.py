import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from volterra_lrd.errors import ArgumentError
from volterra_lrd.kernels import PowerSum, RatioForm, eval_kernel
from volterra_lrd.traces import QuadratureConfig, eval_h_t, l2_norm_h_t, trace_kernel

ALPHA = -2.75


def _scipy_trace(g, r, x):
    """Plain scipy oracle for g_r, nested over the r paired variables."""
    def inner(fixed):
        if len(fixed) == r:
            pt = [v for y in fixed for v in (y, y)] + list(x)
            return g(np.array(pt))
        return integrate.quad(lambda y: inner(fixed + [y]), 0, np.inf,
                              epsabs=0, epsrel=1e-11, limit=400)[0]
    return inner([])


def test_first_trace_of_powersum():
    g1 = trace_kernel(PowerSum(5, ALPHA), 1)
    x = np.array([0.4, 1.2, 2.5])
    s = x.sum()
    # the integral of a positive function is positive: the closed form carries -1/(2(alpha+1))
    want = -(s ** (ALPHA + 1)) / (2 * (ALPHA + 1))
    assert g1.k == 3 and g1.alpha == pytest.approx(ALPHA + 1)
    assert eval_kernel(g1, x) == pytest.approx(want, rel=1e-13)
    assert eval_kernel(g1, x) == pytest.approx(_scipy_trace(PowerSum(5, ALPHA), 1, x), rel=1e-8)


def test_second_trace_of_powersum():
    g2 = trace_kernel(PowerSum(5, ALPHA), 2)
    x = np.array([1.7])
    want = x[0] ** (ALPHA + 2) / (4 * (ALPHA + 1) * (ALPHA + 2))
    assert eval_kernel(g2, x) == pytest.approx(want, rel=1e-13)
    assert eval_kernel(g2, x) == pytest.approx(_scipy_trace(PowerSum(5, ALPHA), 2, x), rel=1e-7)


def test_no_free_variables():
    with pytest.raises(ArgumentError):
        trace_kernel(PowerSum(4, -2.2), 2)
    with pytest.raises(ArgumentError):
        trace_kernel(PowerSum(5, ALPHA), 3)


def test_ratio_form_trace_riemann_oracle():
    g = RatioForm((0.2, 0.2, 0.2), 2.3)
    g1 = trace_kernel(g, 1)
    assert not g1.analytic
    # integrand y^0.4 / (2 y^2.3 + 1) at x = 1; midpoint rule on (0, C] plus the exact leading tail
    h, C = 1e-4, 1e3
    total = 0.0
    for lo in np.arange(0.0, C, 100.0):
        y = lo + h * (np.arange(int(round(100.0 / h))) + 0.5)
        total += np.sum(y ** 0.4 / (2 * y ** 2.3 + 1)) * h
    total += C ** -0.9 / (2 * 0.9)
    assert eval_kernel(g1, [1.0]) == pytest.approx(total, rel=1e-5)


@settings(max_examples=8, deadline=None)
@given(lam=st.floats(0.05, 20.0), seed=st.integers(0, 2**31))
def test_trace_homogeneity(lam, seed):
    g = RatioForm((0.2, 0.2, 0.2, 0.2), 3.0)
    g1 = trace_kernel(g, 1, QuadratureConfig(rel_tol=1e-11))
    x = np.random.default_rng(seed).uniform(0.2, 3.0, 2)
    lhs = eval_kernel(g1, lam * x)
    rhs = lam ** (g.alpha + 1) * eval_kernel(g1, x)
    assert lhs == pytest.approx(rhs, rel=1e-7)


def test_hurst_invariance():
    for k, alpha in [(3, -1.7), (4, -2.3), (5, ALPHA)]:
        g = PowerSum(k, alpha)
        for r in range(0, (k + 1) // 2):
            assert trace_kernel(g, r).hurst == pytest.approx(g.hurst, abs=1e-14)


def test_analytic_and_numeric_traces_agree():
    base = PowerSum(5, ALPHA)
    g1 = trace_kernel(base, 1)
    rng = np.random.default_rng(3)
    pts = rng.uniform(0.1, 5.0, (10, 3))
    for x in pts:
        assert g1.numeric(x) == pytest.approx(eval_kernel(g1, x), rel=1e-6)


def test_h_t_closed_form_for_one_dimensional_trace():
    g2 = trace_kernel(PowerSum(5, ALPHA), 2)
    c = 1 / (4 * (ALPHA + 1) * (ALPHA + 2))
    e = ALPHA + 3
    for t in (0.5, 1.0):
        for y in (-2.0, -0.3, 0.2, 0.49):
            want = c * (max(t - y, 0) ** e - max(-y, 0) ** e) / e
            assert eval_h_t(g2, t, [y]) == pytest.approx(want, rel=1e-10)


def test_h_t_vanishes_past_t():
    for g in (PowerSum(2, -1.2), RatioForm((0.3, 0.3), 1.9)):
        assert eval_h_t(g, 1.0, [1.0, 1.5]) == 0.0
        assert eval_h_t(g, 1.0, [2.0, 1.0]) == 0.0
    assert eval_h_t(PowerSum(2, -1.2), 0.0, [-1.0, -1.0]) == 0.0


def test_h_t_riemann_oracle():
    h = 1e-5
    s = h * (np.arange(round(1 / h)) + 0.5)
    want = np.sum((2 * s + 2) ** -1.2) * h
    got = eval_h_t(PowerSum(2, -1.2), 1.0, [-1.0, -1.0])
    assert got == pytest.approx(want, abs=1e-6)
    assert eval_h_t(PowerSum(2, -1.2), 1.0, [-1.0, -1.0], closed_form=False) == pytest.approx(got, rel=1e-8)


def test_h_t_monotone_in_t():
    g = RatioForm((0.3, 0.3), 1.9)
    y = [-0.4, 0.1]
    vals = [eval_h_t(g, t, y) for t in (0.2, 0.5, 1.0, 2.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def _h_powersum2(m, d, t=1.0, a=-1.2):
    """h_t for g = (x1 + x2)^a at y = (m, m - d), d >= 0, by hand."""
    lo = np.maximum(m, 0.0)
    e = a + 1
    return ((2 * t - 2 * m + d) ** e - (2 * lo - 2 * m + d) ** e) / (2 * e)


def test_l2_norm_lattice_oracle():
    # lattice in (v, w) with max(y) = 1 - exp(v) and gap |y1 - y2| = exp(w);
    # the log gap removes the diagonal singularity and both tails carry no mass past exp(+-30)
    dv = dw = 0.02
    v = np.arange(-30.0, 30.0, dv) + dv / 2
    w = np.arange(-30.0, 30.0, dw) + dw / 2
    m, d = 1 - np.exp(v), np.exp(w)
    total = 0.0
    for i in range(0, len(v), 500):
        h = _h_powersum2(m[i:i + 500, None], d[None, :])
        jac = np.exp(v[i:i + 500, None] + w[None, :])
        total += 2 * np.sum(h * h * jac) * dv * dw
    got = l2_norm_h_t(PowerSum(2, -1.2), 1.0)
    assert got.value == pytest.approx(total, rel=0.01)


def test_l2_norm_self_similarity_and_zero():
    g2 = trace_kernel(PowerSum(5, ALPHA), 2)
    H = g2.hurst
    n1 = l2_norm_h_t(g2, 1.0).value
    for t in (0.25, 0.5):
        assert l2_norm_h_t(g2, t).value == pytest.approx(t ** (2 * H) * n1, rel=1e-6)
    assert l2_norm_h_t(g2, 0.0).value == 0.0
