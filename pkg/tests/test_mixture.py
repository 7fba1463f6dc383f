import math

import numpy as np
import pytest

from volterra_lrd.errors import ArgumentError
from volterra_lrd.kernels import PowerSum, ProductPower, Scale, Sum
from volterra_lrd.mc import derive_stream, sample_noise
from volterra_lrd.mixture import (
    ExpMixture,
    exp_mixture,
    mixture_acf,
    mixture_mean,
    mixture_partial_sum_variance,
    simulate_mixture_paths,
)
from volterra_lrd.simulate import NoiseSpec, TruncatedKernel, simulate_path

TWO = ExpMixture(2, np.array([0.3, 1.1]), np.array([0.7, -0.2]))


def _cross_cov(m, n):
    """Cov(Y_q(n), Y_r(0)) for AR(1) filters driven by unit-variance noise."""
    rq, rr = np.meshgrid(m.rho, m.rho, indexing="ij")
    return rq ** n * rq * rr / (1 - rq * rr)


def test_mixture_reproduces_power():
    for g in (PowerSum(2, -1.2), Sum((PowerSum(2, -1.2), Scale(0.5, PowerSum(2, -1.2))))):
        mix = exp_mixture(g)
        s = np.geomspace(2, 1e6, 300)
        want = g.evaluate(np.stack([s / 2, s / 2], axis=-1))
        assert mix.profile_value(s) == pytest.approx(want, rel=1e-6)


def test_non_profile_kernel_rejected():
    with pytest.raises(ArgumentError):
        exp_mixture(ProductPower((-0.6, -0.6)))


@pytest.mark.parametrize("law", ["gaussian", "exponential"])
def test_pathwise_against_finite_table(law):
    N = 12
    X = simulate_mixture_paths(TWO, NoiseSpec(law), N, 1, seed=4, zero_start=True,
                               centered=False, burn_in=0)[0]
    st = derive_stream(4, (0,))
    st.generator.standard_normal(TWO.Q)
    e = sample_noise(law, st, N)
    i = np.arange(1, N + 1)
    tab = sum(w * np.exp(-u * np.add.outer(i, i)) for u, w in zip(TWO.u, TWO.w))
    eps = np.concatenate([np.zeros(N - 1), e, [0.0]])
    ref = simulate_path(TruncatedKernel(tab), NoiseSpec(law), N, 0, eps=eps).X
    assert X == pytest.approx(ref, rel=1e-12, abs=1e-14)


def test_gaussian_acf_by_wick():
    lags = np.arange(0, 30)
    want = [2 * TWO.w @ (_cross_cov(TWO, n) ** 2) @ TWO.w for n in lags]
    assert mixture_acf(TWO, lags) == pytest.approx(want, rel=1e-12)


def test_mean():
    s = np.diag(_cross_cov(TWO, 0))
    assert mixture_mean(TWO, NoiseSpec()) == pytest.approx(TWO.w @ s, rel=1e-13)
    m3 = ExpMixture(3, np.array([0.5]), np.array([1.0]))
    rho = math.exp(-0.5)
    # third cumulant of Y = sum rho^i eps is kappa_3 rho^3 / (1 - rho^3), kappa_3 = 2 for the exponential law
    assert mixture_mean(m3, NoiseSpec("exponential")) == pytest.approx(2 * rho ** 3 / (1 - rho ** 3), rel=1e-12)


def test_partial_sum_variance_from_acf():
    N_list = [1, 5, 40, 200]
    g = mixture_acf(TWO, np.arange(0, 200))
    want = [N * g[0] + 2 * sum((N - n) * g[n] for n in range(1, N)) for N in N_list]
    assert mixture_partial_sum_variance(TWO, N_list) == pytest.approx(want, rel=1e-10)


def test_stationary_start_matches_acf():
    X = simulate_mixture_paths(TWO, NoiseSpec(), 4, 20000, seed=3)
    v0 = mixture_acf(TWO, [0])[0]
    var = X[:, 0].var()
    se = v0 * math.sqrt(2 / len(X)) * 2
    assert abs(var - v0) <= 3 * se
    assert abs(X[:, 0].mean()) <= 4 * math.sqrt(v0 / len(X))


def test_reproducible_and_chunk_independent():
    a = simulate_mixture_paths(TWO, NoiseSpec("rademacher"), 50, 10, seed=8, chunk=3)
    b = simulate_mixture_paths(TWO, NoiseSpec("rademacher"), 50, 10, seed=8, chunk=64)
    assert np.array_equal(a, b)
    c = simulate_mixture_paths(TWO, NoiseSpec("rademacher"), 50, 4, seed=8, first_path=6)
    assert np.array_equal(a[6:], c)
