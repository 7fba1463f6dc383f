import itertools
import math

import numpy as np
import pytest

from volterra_lrd.combinatorics import Partition, TermIndex
from volterra_lrd.errors import ArgumentError
from volterra_lrd.kernels import PowerSum, RatioForm
from volterra_lrd.limits import (
    acf_to_csv,
    build_limit_spec,
    captured_mass,
    classify_memory,
    clt_compare,
    discretized_variance,
    empirical_acf,
    hermite_grid,
    hermite_increments,
    hypercontractivity_ratio,
    partial_sum_variance,
    semi_analytic_acf,
    simulate_hermite,
    varscale_to_csv,
)
from volterra_lrd.mixture import exp_mixture, mixture_acf
from volterra_lrd.simulate import (
    NoiseSpec,
    PowerBound,
    TruncatedKernel,
    decompose_path,
    simulate_path,
    simulate_paths,
)
from volterra_lrd.traces import l2_norm_h_t, trace_kernel


def _shift_kernel(M=3):
    a = np.zeros(M)
    a[0] = 1.0
    return TruncatedKernel(a)


def test_acf_iid_is_flat():
    X = simulate_paths(_shift_kernel(), NoiseSpec(), 2000, 50, seed=1)
    acf = empirical_acf(X, 10)
    assert acf.gamma_hat[0] == pytest.approx(1.0, abs=0.02)
    assert np.all(np.abs(acf.gamma_hat[1:]) <= 3 * acf.se[1:])


def test_acf_moving_average():
    a = np.array([1.0, 0.5])
    X = simulate_paths(TruncatedKernel(a), NoiseSpec(), 4000, 40, seed=2)
    acf = empirical_acf(X, 5, mean=0.0)
    assert acf.gamma_hat[:3] == pytest.approx([1.25, 0.5, 0.0], abs=4 * acf.se.max())


def test_acf_guard():
    with pytest.raises(ArgumentError):
        empirical_acf(np.zeros((2, 50)), 10)


def _brute_offdiag_acf(a, n):
    k, M = a.ndim, a.shape[0]
    tot = 0.0
    for idx in itertools.product(range(M), repeat=k):
        if len(set(idx)) < k:
            continue
        j = tuple(i + n for i in idx)
        if max(j) < M:
            tot += a[idx] * a[j]
    return math.factorial(k) * tot


def test_semi_analytic_acf_brute_force():
    rng = np.random.default_rng(3)
    b = rng.normal(size=(6, 6, 6))
    a = sum(np.transpose(b, p) for p in itertools.permutations(range(3))) / 6
    got = semi_analytic_acf(TruncatedKernel(a), range(7))
    want = [_brute_offdiag_acf(a, n) for n in range(7)]
    assert got == pytest.approx(want, rel=1e-12, abs=1e-14)


def test_semi_analytic_acf_examples():
    ones = TruncatedKernel(np.ones((2, 2)))
    assert semi_analytic_acf(ones, [0, 1]) == pytest.approx([4.0, 0.0])
    with pytest.raises(ArgumentError):
        semi_analytic_acf(TruncatedKernel(np.arange(4.0).reshape(2, 2)), [0])


def test_acf_constant_stabilizes():
    # untruncated ACF of the mixture simulator: gamma(n) n^0.4 settles to a constant
    n = np.array([64, 128, 256, 512, 1024])
    ratio = mixture_acf(exp_mixture(PowerSum(2, -1.2)), n) / n ** -0.4
    assert np.all(np.abs(ratio / ratio[-1] - 1) <= 0.03)


def test_truncated_acf_approaches_untruncated():
    g = PowerSum(2, -1.2)
    full = mixture_acf(exp_mixture(g), [8])[0]
    vals = [semi_analytic_acf(TruncatedKernel.from_kernel(g, M), [8])[0] for M in (128, 512, 2048)]
    assert vals[0] < vals[1] < vals[2] < full
    # the truncation gap decays like M^-0.4, about 0.57 per quadrupling
    gap = full - np.array(vals)
    assert np.all(gap[1:] / gap[:-1] <= 0.7)


def test_short_memory_acf_sum_stabilizes():
    tk = TruncatedKernel.power_bound((-1.1, -1.1), 64)
    X = simulate_paths(tk, NoiseSpec(), 4096, 200, seed=4)
    g = empirical_acf(X, 256).gamma_hat
    s = [np.abs(g[: L + 1]).sum() for L in (64, 128, 256)]
    assert s[1] / s[0] < 1.1 and s[2] / s[1] < 1.1


def test_partial_sum_variance_iid_and_zero():
    X = simulate_paths(_shift_kernel(), NoiseSpec(), 1024, 400, seed=5)
    vs = partial_sum_variance(X, [64, 128, 256, 512, 1024], mean=0.0)
    assert vs.var == pytest.approx(vs.N, rel=0.2)
    assert vs.fit.slope == pytest.approx(1.0, abs=0.1)
    zero = partial_sum_variance(np.zeros((5, 64)), [8, 16, 32, 64])
    assert np.all(zero.var == 0)
    assert any("zero variance" in f for f in zero.flags)
    assert any("paths" in f for f in zero.flags)


def test_classification():
    r = classify_memory((5, -2.75))
    assert r.regime == "LongMemory" and r.H == pytest.approx(0.75)
    assert classify_memory(PowerSum(2, -1.2)).H == pytest.approx(0.8)
    assert classify_memory(PowerBound((-1.1, -1.1))).regime == "ShortMemory"
    assert classify_memory(PowerBound((-0.6, -0.95)), off_diagonal=True).regime == "ShortMemory"
    assert classify_memory(PowerBound((-0.6, -0.95))).regime == "Inconclusive"
    assert classify_memory((2, -0.4)).regime == "Inconclusive"


def test_long_memory_hurst_in_range():
    for k in range(1, 6):
        lo, hi = -(k + 1) / 2, -k / 2
        for alpha in np.linspace(lo, hi, 7)[1:-1]:
            r = classify_memory((k, alpha))
            assert r.regime == "LongMemory"
            assert 0.5 < r.H < 1 and r.H == pytest.approx(alpha + k / 2 + 1)


def test_limit_spec_structure():
    five = build_limit_spec(PowerSum(5, -2.75))
    assert five.describe() == "Z_5 + 10*Z_3 + 15*Z_1"
    assert [t.order for t in five.terms] == [5, 3, 1]
    two = build_limit_spec(PowerSum(2, -1.2))
    assert [(t.r, t.d) for t in two.terms] == [(0, 1)]
    four = build_limit_spec(PowerSum(4, -2.3))
    assert [(t.r, t.d) for t in four.terms] == [(0, 1), (1, 6)]
    for k, alpha in [(1, -0.7), (3, -1.7), (6, -3.2)]:
        spec = build_limit_spec(PowerSum(k, alpha))
        assert len(spec.terms) == math.ceil(k / 2)
        assert all(t.order >= 1 for t in spec.terms)
    with pytest.raises(ArgumentError):
        build_limit_spec(PowerSum(2, -0.4))


def test_limit_variance_for_order_two():
    spec = build_limit_spec(PowerSum(2, -1.2))
    assert spec.variance(1.0) == pytest.approx(2 * l2_norm_h_t(PowerSum(2, -1.2), 1.0).value, rel=1e-12)


def test_hermite_increments_reproducible():
    grid = hermite_grid(G=64, diag_levels=2)
    a = hermite_increments(grid, 5, seed=3)
    b = hermite_increments(grid, 2, seed=3, first=3)
    assert np.array_equal(a[3:], b)
    assert a.shape == (5, grid.G)


def test_hermite_zero_time():
    grid = hermite_grid(G=64, diag_levels=1)
    Z = simulate_hermite(PowerSum(2, -1.2), [0.0, 1.0], grid, 20, seed=1)
    assert np.all(Z[:, 0] == 0.0)


@pytest.mark.parametrize("levels", [0, 3])
def test_discretized_isometry_order_two(levels):
    g = PowerSum(2, -1.2)
    grid = hermite_grid(G=128, diag_levels=levels)
    Z = simulate_hermite(g, [1.0], grid, 40000, seed=6)[:, 0]
    se = np.std(Z ** 2) / math.sqrt(len(Z))
    assert abs(np.mean(Z ** 2) - discretized_variance(g, 1.0, grid)) <= 3 * se


def test_discretized_isometry_order_one():
    g1 = trace_kernel(PowerSum(3, -1.7), 1)
    grid = hermite_grid(G=256)
    Z = simulate_hermite(g1, [1.0], grid, 20000, seed=7)[:, 0]
    se = np.std(Z ** 2) / math.sqrt(len(Z))
    assert abs(np.mean(Z ** 2) - discretized_variance(g1, 1.0, grid)) <= 3 * se


def test_fbm_self_similarity():
    g2 = trace_kernel(PowerSum(5, -2.75), 2)
    H = g2.hurst
    grid = hermite_grid(G=4096)
    ts = [0.25, 0.5, 1.0]
    Z = simulate_hermite(g2, ts, grid, 10_000, seed=8)
    v = Z.var(axis=0)
    for t, vt in zip(ts, v):
        assert v[-1] / vt == pytest.approx(t ** (-2 * H), rel=0.05)


def test_same_hurst_for_every_order():
    # exact grid variances of the order-2 and order-1 pieces of a k=4 limit scale with one H
    base = PowerSum(4, -2.3)
    grid = hermite_grid(G=1024)
    H = base.hurst
    for r in (1,):
        g = trace_kernel(base, r)
        v1 = discretized_variance(g, 1.0, grid)
        for t in (0.25, 0.5):
            assert discretized_variance(g, t, grid) / v1 == pytest.approx(t ** (2 * H), rel=0.10)
    g1 = trace_kernel(PowerSum(3, -1.5 - 0.2), 1)
    assert g1.hurst == pytest.approx(PowerSum(3, -1.7).hurst)


def test_captured_mass_default_grid():
    assert captured_mass(PowerSum(2, -1.2), 1.0, hermite_grid()) >= 0.995


@pytest.mark.slow
def test_order_two_variance_against_quadrature():
    g = PowerSum(2, -1.2)
    Z = simulate_hermite(g, [1.0], hermite_grid(), 10_000, seed=9)[:, 0]
    assert Z.var() == pytest.approx(2 * l2_norm_h_t(g, 1.0).value, rel=0.05)


def test_short_memory_diagonal_term_vanishes_under_lrd_scaling():
    tk = TruncatedKernel.from_kernel(PowerSum(2, -1.2), 64)
    H = 0.8
    term = TermIndex(Partition.parse("{{1,2}}"), (2,))
    Ns = [256, 1024, 4096, 16384]
    sums = np.zeros((200, len(Ns)))
    for p in range(200):
        X = simulate_path(tk, NoiseSpec(), Ns[-1], seed=10, path_index=p)
        D = decompose_path(tk, X.eps, [term], NoiseSpec())[term]
        c = np.cumsum(D)
        sums[p] = [c[N - 1] * N ** -H for N in Ns]
    v = sums.var(axis=0)
    assert np.all(v[1:] / v[:-1] <= 0.7)
    # exact oracle: D is linear in eps^2 - 1 (variance 2) with weights a(i, i)
    b = np.diag(tk.values)
    for N, vn in zip(Ns, v):
        w = np.convolve(np.ones(N), b)
        assert vn == pytest.approx(2 * np.sum(w ** 2) * N ** (-2 * H), rel=0.25)


def test_clt_iid_anchor():
    rep = clt_compare(_shift_kernel(), NoiseSpec(), 1024, 500, seed=11)
    assert not rep["normality_rejected_1pct"]
    assert rep["var"] == pytest.approx(1.0, abs=4 * rep["var_se"])
    assert rep["sigma2"] == pytest.approx(1.0, abs=0.1)


def test_clt_requires_short_memory_bound():
    with pytest.raises(ArgumentError):
        clt_compare(_shift_kernel(), NoiseSpec(), 64, 10, seed=0, bound=PowerBound((-0.6, -0.6)))


def test_hyper_scale_invariance_bitwise():
    rng = np.random.default_rng(12)
    h = rng.normal(size=(6, 6))
    a = hypercontractivity_ratio(h, NoiseSpec(), 3.0, 20_000, seed=1)
    b = hypercontractivity_ratio(4.0 * h, NoiseSpec(), 3.0, 20_000, seed=1)
    assert a.ratio == b.ratio
    assert a.ci == b.ci
    c = hypercontractivity_ratio(3.0 * h, NoiseSpec(), 3.0, 20_000, seed=1)
    assert c.ratio == pytest.approx(a.ratio, rel=1e-12)


def test_hyper_gaussian_linear():
    r = hypercontractivity_ratio(np.array([0.6, 0.8]), NoiseSpec(), 4.0, 1_000_000, seed=2)
    assert r.ratio == pytest.approx(3 ** 0.25, rel=0.02)
    assert r.ci[0] < 3 ** 0.25 < r.ci[1]


def test_hyper_rejects_degenerate():
    with pytest.raises(ArgumentError):
        hypercontractivity_ratio(np.eye(3), NoiseSpec(), 3.0, 100, seed=0)
    with pytest.raises(ArgumentError):
        hypercontractivity_ratio(np.ones(3), NoiseSpec(), 2.0, 100, seed=0)


def test_csv_headers():
    X = simulate_paths(_shift_kernel(), NoiseSpec(), 200, 4, seed=0)
    assert acf_to_csv(empirical_acf(X, 10)).splitlines()[0] == "lag,gamma_hat,se,gamma_theory"
    assert varscale_to_csv(partial_sum_variance(X, [25, 50, 100, 200])).splitlines()[0] == "N,var,se"


def test_ratio_form_limit_spec_uses_numeric_trace():
    spec = build_limit_spec(RatioForm((0.3, 0.3), 1.9))
    assert len(spec.terms) == 1 and spec.terms[0].order == 2
