"""Untruncated simulation of l1-profile kernels through exponential mixtures.

For ``e < 0``, ``s**e = int_0^inf u**(-e-1) exp(-u s) du / Gamma(-e)``.  A
trapezoid rule in ``log u`` turns any kernel of the form
``sum c (x_1 + ... + x_k)**e`` into ``a(i) ~ sum_q w_q exp(-u_q |i|_1)``.
Such a kernel factorises along the lattice, so with
``Y_q(n) = sum_{i>=1} rho_q**i eps_{n-i}`` (``rho_q = exp(-u_q)``),

    X(n) = sum_q w_q Y_q(n)**k,

and each ``Y_q`` obeys ``Y_q(n) = rho_q (eps_{n-1} + Y_q(n-1))``.  The whole
infinite past enters through ``Y(0)``, whose stationary law is Gaussian
with covariance ``C_qr = rho_q rho_r / (1 - rho_q rho_r)`` when the
innovations are Gaussian.  For other laws an explicit burn-in of ``B``
innovations precedes a Gaussian start at time ``-B``.

This is the only route to long-memory statistics at ``N = 2**14``; tables
truncated at a desk-scale ``M`` are short-memory beyond lag ``M``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.special import gamma as gamma_fn

from .combinatorics import MomentVector
from .errors import ArgumentError
from .kernels import Kernel
from .mc import derive_stream, sample_noise
from .simulate import NoiseSpec

__all__ = [
    "ExpMixture",
    "exp_mixture",
    "simulate_mixture_paths",
    "mixture_mean",
    "mixture_acf",
    "mixture_partial_sum_variance",
]


@dataclass(frozen=True, eq=False)
class ExpMixture:
    k: int
    u: np.ndarray
    w: np.ndarray
    source: Kernel | None = None

    @property
    def Q(self) -> int:
        return len(self.u)

    @property
    def rho(self) -> np.ndarray:
        return np.exp(-self.u)

    @property
    def cov(self) -> np.ndarray:
        """Stationary covariance of ``(Y_q(n))_q`` for unit-variance noise."""
        s = np.add.outer(self.u, self.u)
        return np.exp(-s) / -np.expm1(-s)

    def profile_value(self, s) -> np.ndarray:
        """Mixture value at l1 norm ``s``."""
        s = np.asarray(s, dtype=float)
        return np.exp(-np.multiply.outer(s, self.u)) @ self.w

    def max_rel_error(self, s) -> float:
        if self.source is None:
            raise ArgumentError("mixture has no source kernel")
        s = np.asarray(s, dtype=float)
        exact = _profile_eval(self.source.sum_profile(), s)
        return float(np.max(np.abs(self.profile_value(s) / exact - 1.0)))


def _profile_eval(profile, s):
    return sum(c * np.power(s, e) for c, e in profile)


def exp_mixture(
    kernel: Kernel, step: float = 0.5, u_min: float = 1e-16, u_max: float = 60.0
) -> ExpMixture:
    """Nodes ``u_q = exp(v_q)`` on a uniform ``v`` grid with trapezoid weights."""
    profile = kernel.sum_profile()
    if profile is None:
        raise ArgumentError(f"{kernel.kind} kernel does not depend on the l1 norm only")
    if any(e >= 0 for _, e in profile):
        raise ArgumentError("exponential mixtures need negative exponents")
    v = np.arange(math.log(u_min), math.log(u_max) + step / 2, step)
    u = np.exp(v)
    w = np.zeros_like(u)
    for c, e in profile:
        w += c * step * np.exp(-e * v) / gamma_fn(-e)
    return ExpMixture(kernel.k, u, w, kernel)


def _cumulants(mu: MomentVector, order: int) -> list[float]:
    kappa = [0.0] * (order + 1)
    for n in range(1, order + 1):
        kappa[n] = float(mu[n]) - sum(
            math.comb(n - 1, j - 1) * kappa[j] * float(mu[n - j]) for j in range(1, n)
        )
    return kappa


def mixture_mean(mix: ExpMixture, noise: NoiseSpec) -> float:
    """``E X`` under the stationary law of ``Y_q``.

    Cumulants of ``Y_q`` are ``kappa_p(eps) rho^p / (1 - rho^p)``; moments
    follow from the cumulant recursion.
    """
    k = mix.k
    kap = _cumulants(noise.for_order(k).moments, k)
    total = 0.0
    for uq, wq in zip(mix.u, mix.w):
        ky = [0.0] + [kap[p] * math.exp(-p * uq) / -math.expm1(-p * uq) for p in range(1, k + 1)]
        m = [1.0] + [0.0] * k
        for n in range(1, k + 1):
            m[n] = sum(math.comb(n - 1, j - 1) * ky[j] * m[n - j] for j in range(1, n + 1))
        total += wq * m[k]
    return total


def _start_factor(mix: ExpMixture) -> np.ndarray:
    """``F`` with ``F F^T = C`` via the scaled eigendecomposition."""
    C = mix.cov
    d = np.sqrt(np.diag(C))
    R = C / np.outer(d, d)
    lam, V = np.linalg.eigh(R)
    lam = np.clip(lam, 0.0, None)
    return d[:, None] * (V * np.sqrt(lam))


def simulate_mixture_paths(
    mix: ExpMixture,
    noise: NoiseSpec,
    N: int,
    paths: int,
    seed: int,
    burn_in: int | None = None,
    first_path: int = 0,
    chunk: int = 64,
    centered: bool = True,
    zero_start: bool = False,
) -> np.ndarray:
    """``(paths, N)`` array of ``X(n)`` (minus ``E X`` when ``centered``).

    Path ``p`` draws, from substream ``(seed, p)``, first ``Q`` standard
    normals for the start vector, then ``B + N`` innovations.
    ``zero_start`` discards the start vector (empty far past), which makes
    the output comparable with a finite-table simulation.
    """
    if N < 1 or paths < 0:
        raise ArgumentError("need N >= 1 and paths >= 0")
    B = (0 if noise.law == "gaussian" else N) if burn_in is None else int(burn_in)
    F = _start_factor(mix)
    rho = mix.rho
    mean = mixture_mean(mix, noise) if centered else 0.0
    out = np.empty((paths, N))
    for lo in range(0, paths, chunk):
        idx = range(first_path + lo, first_path + min(paths, lo + chunk))
        z = np.empty((len(idx), mix.Q))
        eps = np.empty((len(idx), B + N))
        for row, p in enumerate(idx):
            st = derive_stream(seed, (p,))
            z[row] = st.generator.standard_normal(mix.Q)
            eps[row] = sample_noise(noise.sampler, st, B + N)
        y0 = np.zeros_like(z) if zero_start else z @ F.T
        X = np.zeros((len(idx), N))
        for q in range(mix.Q):
            r = rho[q]
            Y = signal.lfilter([r], [1.0, -r], eps, axis=1, zi=(r * y0[:, q])[:, None])[0]
            X += mix.w[q] * Y[:, B:] ** mix.k
        out[lo : lo + len(idx)] = X - mean
    return out


# --------------------------------------------------------------------------
# Gaussian-noise second-order structure
# --------------------------------------------------------------------------


def _wick_terms(k):
    """``(j, coef)`` with ``Cov(Y1^k, Y2^k) = sum coef c^j (s1 s2)^((k-j)/2)``."""

    def dfact(n):
        return math.prod(range(n, 0, -2)) if n > 0 else 1

    return [
        (j, math.comb(k, j) ** 2 * math.factorial(j) * dfact(k - j - 1) ** 2)
        for j in range(1, k + 1)
        if (k - j) % 2 == 0
    ]


def mixture_acf(mix: ExpMixture, lags) -> np.ndarray:
    """Exact ``gamma(n)`` of the mixture process for Gaussian noise."""
    lags = np.asarray(lags, dtype=int)
    C = mix.cov
    s = np.diag(C)
    ww = np.outer(mix.w, mix.w)
    out = np.zeros(len(lags))
    for j, coef in _wick_terms(mix.k):
        base = ww * coef * C**j * np.outer(s, s) ** ((mix.k - j) / 2)
        decay = np.exp(-j * np.multiply.outer(lags, mix.u))  # rho_q^{j n}
        out += decay @ base.sum(axis=1)
    return out


def mixture_partial_sum_variance(mix: ExpMixture, N_list) -> np.ndarray:
    """Exact ``Var sum_{n<=N} X(n)`` for Gaussian noise at each ``N``."""
    N_list = [int(n) for n in N_list]
    Nmax = max(N_list)
    C = mix.cov
    s = np.diag(C)
    ww = np.outer(mix.w, mix.w)
    n = np.arange(1, Nmax, dtype=float)
    out = np.zeros(len(N_list))
    for j, coef in _wick_terms(mix.k):
        base = (ww * coef * C**j * np.outer(s, s) ** ((mix.k - j) / 2)).sum(axis=1)
        g0 = base.sum()
        x = np.exp(-j * np.multiply.outer(mix.u, n))  # (Q, Nmax-1)
        A = np.cumsum(x, axis=1)
        Bn = np.cumsum(x * n, axis=1)
        for idx, N in enumerate(N_list):
            if N == 1:
                out[idx] += g0
                continue
            FN = N * A[:, N - 2] - Bn[:, N - 2]
            out[idx] += N * g0 + 2.0 * float(base @ FN)
    return out
