"""Random streams, innovation laws and the statistics used by the experiments.

Streams are derived, not advanced: ``derive_stream(root, path)`` hashes the
root seed together with an index path through ``numpy.random.SeedSequence``
and feeds a Philox counter generator.  Path ``(seed, p)`` always yields the
same draws no matter which worker asks or in what order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .combinatorics import MomentVector
from .errors import ArgumentError

__all__ = [
    "RngStream",
    "NoiseSampler",
    "NOISE_LAWS",
    "derive_stream",
    "noise_law",
    "sample_noise",
    "noise_moments",
    "SlopeFit",
    "fit_loglog_slope",
    "stable_sum",
    "stable_mean",
    "bootstrap_ci",
    "ks_two_sample",
    "anderson_normal",
]


@dataclass(frozen=True)
class RngStream:
    root: int
    path: tuple[int, ...]
    generator: np.random.Generator = field(compare=False, repr=False)

    def child(self, *index: int) -> "RngStream":
        return derive_stream(self.root, self.path + tuple(index))

    def normal(self, size):
        return self.generator.standard_normal(size)

    def uniform(self, size):
        return self.generator.random(size)


def derive_stream(root: int, path: Sequence[int] = ()) -> RngStream:
    """Counter-based substream for ``(root, path)``."""
    root = int(root)
    if root < 0:
        raise ArgumentError("root seed must be non-negative")
    path = tuple(int(p) for p in path)
    if any(p < 0 for p in path):
        raise ArgumentError("stream path indices must be non-negative")
    ss = np.random.SeedSequence(root, spawn_key=path)
    return RngStream(root, path, np.random.Generator(np.random.Philox(ss)))


# --------------------------------------------------------------------------
# innovation laws
# --------------------------------------------------------------------------


def _gaussian_moment(p: int) -> Fraction:
    if p % 2:
        return Fraction(0)
    return Fraction(math.prod(range(p - 1, 0, -2)))


def _rademacher_moment(p: int) -> Fraction:
    return Fraction(0 if p % 2 else 1)


def _uniform_moment(p: int):
    # eps uniform on [-sqrt3, sqrt3]: E eps^p = 3^(p/2) / (p + 1) for even p
    if p % 2:
        return Fraction(0)
    return Fraction(3 ** (p // 2), p + 1)


def _exponential_moment(p: int) -> Fraction:
    # E(E - 1)^p for E ~ Exp(1) is the derangement number D_p
    d_prev, d = 1, 0
    if p == 0:
        return Fraction(1)
    for n in range(2, p + 1):
        d_prev, d = d, (n - 1) * (d + d_prev)
    return Fraction(d)


def _draw_gaussian(gen, n):
    return gen.standard_normal(n)


def _draw_rademacher(gen, n):
    return np.where(gen.random(n) < 0.5, -1.0, 1.0)


def _draw_uniform(gen, n):
    return gen.uniform(-math.sqrt(3.0), math.sqrt(3.0), n)


def _draw_exponential(gen, n):
    return gen.standard_exponential(n) - 1.0


@dataclass(frozen=True)
class NoiseSampler:
    law: str
    draw: Callable[[np.random.Generator, int], np.ndarray] = field(repr=False)
    moment: Callable[[int], Fraction] = field(repr=False)
    symmetric: bool = True

    def moments(self, order: int) -> MomentVector:
        return MomentVector([self.moment(p) for p in range(order + 1)])


NOISE_LAWS = {
    "gaussian": NoiseSampler("gaussian", _draw_gaussian, _gaussian_moment),
    "rademacher": NoiseSampler("rademacher", _draw_rademacher, _rademacher_moment),
    "uniform": NoiseSampler("uniform", _draw_uniform, _uniform_moment),
    "exponential": NoiseSampler(
        "exponential", _draw_exponential, _exponential_moment, symmetric=False
    ),
}


def noise_law(name: str) -> NoiseSampler:
    try:
        return NOISE_LAWS[name.lower()]
    except KeyError:
        raise ArgumentError(
            f"unknown noise law {name!r}; choose from {sorted(NOISE_LAWS)}"
        ) from None


def noise_moments(name: str, order: int) -> MomentVector:
    return noise_law(name).moments(order)


def sample_noise(law: str | NoiseSampler, stream: RngStream, n: int) -> np.ndarray:
    """``n`` i.i.d. standardized innovations from ``stream``."""
    sampler = law if isinstance(law, NoiseSampler) else noise_law(law)
    if n < 0:
        raise ArgumentError("n must be >= 0")
    return sampler.draw(stream.generator, int(n))


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------


def stable_sum(x, axis=None):
    """Compensated sum (``math.fsum`` for 1-d input, pairwise otherwise)."""
    arr = np.asarray(x, dtype=float)
    if axis is None and arr.ndim <= 1:
        return math.fsum(arr.ravel())
    # numpy's add.reduce uses pairwise summation along contiguous axes
    return np.add.reduce(arr, axis=axis)


def stable_mean(x, axis=None):
    arr = np.asarray(x, dtype=float)
    n = arr.size if axis is None else arr.shape[axis]
    return stable_sum(arr, axis) / n


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    ci: tuple[float, float]
    stderr: float
    n: int
    residual_sd: float

    @property
    def ci_width(self) -> float:
        return self.ci[1] - self.ci[0]

    def contains(self, value: float) -> bool:
        return self.ci[0] <= value <= self.ci[1]

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "ci_low": self.ci[0],
            "ci_high": self.ci[1],
            "stderr": self.stderr,
            "n": self.n,
        }


def fit_loglog_slope(x, y, level: float = 0.95) -> SlopeFit:
    """OLS of ``log y`` on ``log x`` with a t-based confidence interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ArgumentError("x and y must be 1-d arrays of equal length")
    if len(x) < 4:
        raise ArgumentError("need at least 4 points for a slope fit")
    if np.any(y <= 0) or np.any(x <= 0):
        raise ArgumentError("log-log fit needs strictly positive x and y")
    lx, ly = np.log(x), np.log(y)
    res = stats.linregress(lx, ly)
    n = len(x)
    resid = ly - (res.intercept + res.slope * lx)
    resid_sd = float(np.sqrt(np.sum(resid**2) / (n - 2)))
    q = stats.t.ppf(0.5 + level / 2, n - 2)
    half = q * res.stderr
    return SlopeFit(
        float(res.slope),
        float(res.intercept),
        (float(res.slope - half), float(res.slope + half)),
        float(res.stderr),
        n,
        resid_sd,
    )


def bootstrap_ci(
    sample,
    statistic: Callable[[np.ndarray], float],
    stream: RngStream,
    n_boot: int = 1000,
    level: float = 0.95,
) -> tuple[float, float]:
    """Percentile bootstrap interval for ``statistic(sample)``."""
    sample = np.asarray(sample)
    n = len(sample)
    gen = stream.generator
    reps = np.empty(n_boot)
    for b in range(n_boot):
        reps[b] = statistic(sample[gen.integers(0, n, n)])
    lo, hi = np.quantile(reps, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def ks_two_sample(a, b) -> tuple[float, float]:
    res = stats.ks_2samp(np.asarray(a), np.asarray(b))
    return float(res.statistic), float(res.pvalue)


@dataclass
class AndersonResult:
    statistic: float
    critical_1pct: float
    rejected_1pct: bool


def anderson_normal(sample) -> AndersonResult:
    """Anderson-Darling test for normality (mean and variance estimated)."""
    res = stats.anderson(np.asarray(sample, dtype=float), dist="norm")
    levels = list(res.significance_level)
    crit = float(res.critical_values[levels.index(1.0)])
    return AndersonResult(float(res.statistic), crit, bool(res.statistic >= crit))
