"""Autocovariance asymptotics, memory classification and limit experiments.

The long-memory limit of the normalized partial sums is a sum of
generalized Hermite processes sharing one Brownian measure.  Those are
approximated on a finite grid of cells: Gaussian increments with variance
equal to the cell length, integrand evaluated at cell centres, diagonal
cells left out.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .combinatorics import d_coeff
from .errors import ArgumentError, ResourceError
from .kernels import Kernel, ghk_alpha_range, hurst, simplex_grid, symmetrize, validate_ghkb
from .mc import (
    SlopeFit,
    anderson_normal,
    derive_stream,
    fit_loglog_slope,
    ks_two_sample,
    stable_mean,
)
from .simulate import (
    MAX_TABLE_ENTRIES,
    NoiseSpec,
    PowerBound,
    TruncatedKernel,
    contract_table,
    discrete_chaos,
    exact_mean,
    offdiag_part,
    simulate_paths,
)
from .traces import DEFAULT_QUAD, QuadratureConfig, TraceKernel, h_t_grid, l2_norm_h_t

__all__ = [
    "AcfSeries",
    "empirical_acf",
    "semi_analytic_acf",
    "VarianceScaling",
    "partial_sum_variance",
    "ClassificationResult",
    "classify_memory",
    "DiscretizedChaosGrid",
    "hermite_grid",
    "hermite_increments",
    "simulate_hermite",
    "captured_mass",
    "discretized_variance",
    "LimitTerm",
    "LimitSpec",
    "build_limit_spec",
    "nclt_compare",
    "clt_compare",
    "HyperResult",
    "hypercontractivity_ratio",
    "acf_to_csv",
    "varscale_to_csv",
    "report_json",
]


# --------------------------------------------------------------------------
# autocovariances
# --------------------------------------------------------------------------


@dataclass
class AcfSeries:
    lags: np.ndarray
    gamma_hat: np.ndarray
    se: np.ndarray
    gamma_theory: np.ndarray | None = None
    fit: SlopeFit | None = None
    fit_window: tuple[int, int] | None = None
    paths: int = 0
    flags: list[str] = field(default_factory=list)


def _as_matrix(paths) -> np.ndarray:
    if isinstance(paths, np.ndarray):
        P = paths
    else:
        P = np.vstack([getattr(p, "X", p) for p in paths])
    if P.ndim == 1:
        P = P[None, :]
    return np.asarray(P, dtype=float)


def _per_path_acov(Z: np.ndarray, L: int) -> np.ndarray:
    """``(P, L+1)`` autocovariances of already-centred rows (FFT)."""
    P, N = Z.shape
    nfft = 1 << (2 * N - 1).bit_length()
    F = np.fft.rfft(Z, nfft, axis=1)
    raw = np.fft.irfft(F * np.conj(F), nfft, axis=1)[:, : L + 1]
    return raw / (N - np.arange(L + 1))


def empirical_acf(
    paths,
    L: int,
    mean: float | None = None,
    window: tuple[int, int] | None = None,
    theory: Callable[[np.ndarray], np.ndarray] | None = None,
) -> AcfSeries:
    """Sample autocovariance averaged over independent paths.

    Centering uses ``mean`` when given (e.g. the exact mean), otherwise the
    grand mean over every path and time.  A per-path mean would bias a
    long-memory autocovariance downward by roughly ``Var(path mean)``.
    ``window`` (default ``(4, L // 2)``) selects the lags of the log-log fit.
    """
    X = _as_matrix(paths)
    P, N = X.shape
    if L < 1:
        raise ArgumentError("L must be >= 1")
    if N < 10 * L:
        raise ArgumentError(f"need N >= 10 L (N={N}, L={L})")
    m = float(stable_mean(X)) if mean is None else float(mean)
    per = _per_path_acov(X - m, L)
    gh = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(P) if P > 1 else np.full(L + 1, np.nan)
    lags = np.arange(L + 1)
    out = AcfSeries(lags, gh, se, paths=P)
    if theory is not None:
        out.gamma_theory = np.asarray(theory(lags), dtype=float)
    lo, hi = window if window is not None else (4, L // 2)
    sel = (lags >= lo) & (lags <= hi)
    out.fit_window = (lo, hi)
    if np.any(gh[sel] <= 0):
        out.flags.append("non-positive autocovariance inside the fit window")
    elif sel.sum() >= 4:
        out.fit = fit_loglog_slope(lags[sel], gh[sel])
    if np.any(np.abs(gh[1:]) > gh[0]):
        out.flags.append("|gamma(n)| exceeds gamma(0) at some lag")
    return out


def semi_analytic_acf(kernel: TruncatedKernel, lags) -> np.ndarray:
    """``k! sum'_i a(i) a(i + n 1)`` on the truncated lattice."""
    if not kernel.symmetric:
        raise ArgumentError("semi-analytic autocovariance needs a symmetric table")
    a = kernel.values
    A = offdiag_part(a)
    k, M = kernel.k, kernel.M
    out = []
    for n in np.atleast_1d(lags):
        n = int(n)
        if n < 0:
            raise ArgumentError("lag must be >= 0")
        if n >= M:
            out.append(0.0)
            continue
        lo = (slice(0, M - n),) * k
        hi = (slice(n, M),) * k
        out.append(math.factorial(k) * float(np.sum(A[lo] * a[hi])))
    return np.asarray(out)


# --------------------------------------------------------------------------
# variance of partial sums
# --------------------------------------------------------------------------


@dataclass
class VarianceScaling:
    N: np.ndarray
    var: np.ndarray
    se: np.ndarray
    fit: SlopeFit | None
    paths: int
    flags: list[str] = field(default_factory=list)


def partial_sum_variance(
    paths, N_list: Sequence[int], mean: float | None = None
) -> VarianceScaling:
    """Across-path variance of ``sum_{n<=N} (X(n) - mean)`` at each ``N``."""
    X = _as_matrix(paths)
    P, Nmax = X.shape
    N_list = np.asarray(sorted(int(n) for n in N_list))
    if N_list[-1] > Nmax or N_list[0] < 1:
        raise ArgumentError(f"partial-sum sizes must lie in 1..{Nmax}")
    m = float(stable_mean(X)) if mean is None else float(mean)
    cums = np.cumsum(X - m, axis=1)
    var, se = [], []
    for N in N_list:
        S = cums[:, N - 1]
        c = S - S.mean() if mean is None else S
        v = float(np.sum(c**2) / (P - 1 if mean is None else P))
        var.append(v)
        se.append(float(np.std(c**2, ddof=1) / math.sqrt(P)) if P > 1 else math.nan)
    var, se = np.asarray(var), np.asarray(se)
    flags = []
    if P < 100:
        flags.append(f"only {P} paths: CI quality is poor")
    fit = None
    if len(N_list) >= 4 and np.all(var > 0):
        fit = fit_loglog_slope(N_list, var)
    elif np.all(var == 0):
        flags.append("zero variance at every N")
    return VarianceScaling(N_list, var, se, fit, P, flags)


# --------------------------------------------------------------------------
# classification
# --------------------------------------------------------------------------


@dataclass
class ClassificationResult:
    regime: str  # "LongMemory" | "ShortMemory" | "Inconclusive"
    basis: str
    H: float | None = None
    sigma2_estimate: float | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def classify_memory(spec, off_diagonal: bool = False) -> ClassificationResult:
    """Decide the memory regime from a kernel or an exponent bound.

    ``spec`` is a :class:`Kernel`, a ``(k, alpha)`` pair, or a
    :class:`PowerBound`.  For bounds, each exponent below ``-1`` gives short
    memory with diagonals included; for off-diagonal forms the weaker test
    (each below ``-1/2`` and their sum below ``-(k+1)/2``) applies.
    """
    if isinstance(spec, PowerBound):
        g = spec.gammas
        k = len(g)
        if all(x < -1 for x in g):
            return ClassificationResult("ShortMemory", "each exponent < -1 (diagonals included)")
        if off_diagonal and all(x < -0.5 for x in g) and sum(g) < -k / 2 - 0.5:
            return ClassificationResult(
                "ShortMemory", "off-diagonal: each exponent < -1/2 and sum < -k/2 - 1/2"
            )
        return ClassificationResult("Inconclusive", "power bound outside both sufficient tests")
    if isinstance(spec, Kernel):
        k, alpha = spec.k, spec.alpha
    else:
        k, alpha = spec
    lo, hi = ghk_alpha_range(k)
    if lo < alpha < hi:
        return ClassificationResult(
            "LongMemory", "GHK(B) exponent inside the long-memory range", H=hurst(alpha, k)
        )
    return ClassificationResult("Inconclusive", f"alpha={alpha:g} outside ({lo:g}, {hi:g})")


# --------------------------------------------------------------------------
# discretized Hermite processes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscretizedChaosGrid:
    """Cells ``[edges[i], edges[i+1])`` covering ``[-W, t_max]``.

    The last ``n_uniform`` cells are uniform.  For order-2 integrals each of
    them is bisected ``diag_levels`` times: at every level the two halves of
    a sub-cell form an extra off-diagonal pair, so only the finest diagonal
    squares are left out.  The integrand of a long-memory limit is singular
    along the diagonal inside ``(0, t)``, which is where this matters.
    """

    edges: np.ndarray
    t_max: float
    n_uniform: int
    diag_levels: int = 6

    @property
    def G(self) -> int:
        return len(self.edges) - 1

    @property
    def n_geometric(self) -> int:
        return self.G - self.n_uniform

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def window(self) -> float:
        return -float(self.edges[0])

    @property
    def fine_per_cell(self) -> int:
        return 1 << self.diag_levels

    def aligned(self, t: float) -> bool:
        return bool(np.any(np.isclose(self.edges, t, rtol=0, atol=1e-12)))


def hermite_grid(
    G: int = 4096,
    t_max: float = 1.0,
    W: float = 1e12,
    uniform_fraction: float = 0.5,
    diag_levels: int = 6,
) -> DiscretizedChaosGrid:
    """Uniform cells on ``[-t_max, t_max]``, geometric cells out to ``-W``.

    The kernel of a long-memory limit decays like ``|y|^(H - 3/2)`` in each
    direction, so the square-integrable tail reaches far: a uniform grid
    cannot hold 99.5% of the mass at any affordable ``G``.
    """
    if G < 8 or not 0 < uniform_fraction < 1:
        raise ArgumentError("need G >= 8 and 0 < uniform_fraction < 1")
    if W <= t_max:
        raise ArgumentError("window must extend beyond t_max")
    if diag_levels < 0:
        raise ArgumentError("diag_levels must be >= 0")
    nu = max(2, int(round(G * uniform_fraction)))
    ng = G - nu
    uni = np.linspace(-t_max, t_max, nu + 1)
    geo = -np.geomspace(W, t_max, ng + 1)
    edges = np.concatenate([geo[:-1], uni])
    return DiscretizedChaosGrid(edges, float(t_max), nu, int(diag_levels))


def _draw_fine(grid: DiscretizedChaosGrid, seed: int, rows: range):
    """Geometric-cell increments and bisected uniform-cell increments."""
    w = grid.widths
    ng, nu, f = grid.n_geometric, grid.n_uniform, grid.fine_per_cell
    sd_geo = np.sqrt(w[:ng])
    sd_fine = math.sqrt(w[-1] / f)
    geo = np.empty((len(rows), ng))
    fine = np.empty((len(rows), nu, f))
    for i, r in enumerate(rows):
        z = derive_stream(seed, (r,)).normal(ng + nu * f)
        geo[i] = z[:ng] * sd_geo
        fine[i] = z[ng:].reshape(nu, f) * sd_fine
    return geo, fine


def _coarse(geo, fine):
    return np.concatenate([geo, fine.sum(axis=2)], axis=1)


def hermite_increments(grid: DiscretizedChaosGrid, reps: int, seed: int, first: int = 0):
    """``(reps, G)`` cell increments; replication ``r`` uses substream ``(seed, r)``."""
    geo, fine = _draw_fine(grid, seed, range(first, first + reps))
    return _coarse(geo, fine)


def _h_table(kernel: Kernel, t: float, grid: DiscretizedChaosGrid, quad) -> np.ndarray:
    d = kernel.k
    if grid.G**d > MAX_TABLE_ENTRIES:
        raise ResourceError(f"grid table G^d = {grid.G**d:.3g} exceeds the memory guard")
    c = grid.centers
    pts = np.stack(np.meshgrid(*([c] * d), indexing="ij"), axis=-1)
    return offdiag_part(h_t_grid(kernel, t, pts, quad))


def _pair_values(kernel: Kernel, t: float, grid: DiscretizedChaosGrid, quad) -> list:
    """``h_t`` at the (left, right) half centres of each level's sub-cells."""
    lo = grid.edges[grid.n_geometric : -1]
    width = grid.widths[-1]
    out = []
    for level in range(1, grid.diag_levels + 1):
        n = 1 << (level - 1)
        sw = width / n
        starts = lo[:, None] + np.arange(n)[None, :] * sw
        pts = np.stack([starts + sw / 4, starts + 3 * sw / 4], axis=-1)
        out.append(h_t_grid(kernel, t, pts, quad))  # (n_uniform, n)
    return out


def discretized_variance(
    kernel: Kernel, t: float, grid: DiscretizedChaosGrid, quad=DEFAULT_QUAD
) -> float:
    """Exact variance of the grid approximation (Gaussian isometry)."""
    g = symmetrize(kernel.unperturbed())
    d = g.k
    w = grid.widths
    vol = w
    for _ in range(d - 1):
        vol = np.multiply.outer(vol, w)
    total = math.factorial(d) * float(np.sum(_h_table(g, t, grid, quad) ** 2 * vol))
    if d == 2:
        width = grid.widths[-1]
        for level, hv in enumerate(_pair_values(g, t, grid, quad), start=1):
            half = width / (1 << level)
            # 2 h dB_left dB_right already holds both orderings of the pair
            total += 4.0 * float(np.sum(hv**2)) * half**2
    return total


def captured_mass(
    kernel: Kernel, t: float, grid: DiscretizedChaosGrid, quad=DEFAULT_QUAD
) -> float:
    """Estimated fraction of ``||h_t||^2`` inside the grid window.

    Uses the discretized mass and a tail bound from ``|g| <= C ||x||^a``
    with ``C`` maximised on the simplex: beyond l1 radius ``W`` the tail is
    at most ``C^2 t^2 W^(2a + d) / ((d-1)! |2a + d|)``.
    """
    g = kernel.unperturbed()
    d, a = g.k, g.alpha
    inside = discretized_variance(g, t, grid, quad) / math.factorial(d)
    C = float(np.max(np.abs(g.evaluate(simplex_grid(d, max(d, 64))))))
    expo = 2 * a + d
    tail = C**2 * t**2 * grid.window**expo / (math.factorial(d - 1) * abs(expo))
    return inside / (inside + tail) if inside + tail > 0 else 1.0


def _hermite_terms(
    terms: Sequence[tuple[float, Kernel]],
    t_list: Sequence[float],
    grid: DiscretizedChaosGrid,
    reps: int,
    seed: int,
    quad: QuadratureConfig,
    chunk: int = 64,
) -> np.ndarray:
    """``sum_terms coef * I_d(h_t)`` on one shared Brownian record."""
    for t in t_list:
        if t < 0 or t > grid.t_max + 1e-12:
            raise ArgumentError(f"t={t} outside [0, {grid.t_max}]")
        if t > 0 and not grid.aligned(t):
            warnings.warn(f"t={t} is not a grid edge; boundary cell is approximated")
    prepared = []
    for coef, kern in terms:
        g = symmetrize(kern.unperturbed())
        per_t = []
        for t in t_list:
            if t == 0:
                per_t.append(None)
                continue
            pairs = _pair_values(g, t, grid, quad) if g.k == 2 else []
            per_t.append((_h_table(g, t, grid, quad), pairs))
        prepared.append((coef, g.k, per_t))
    out = np.zeros((reps, len(t_list)))
    L = grid.diag_levels
    for lo in range(0, reps, chunk):
        rows = range(lo, min(reps, lo + chunk))
        geo, fine = _draw_fine(grid, seed, rows)
        inc = _coarse(geo, fine)
        halves = []
        for level in range(1, L + 1):
            sub = fine.reshape(len(rows), grid.n_uniform, 1 << (level - 1), 2, -1).sum(axis=4)
            halves.append(sub[..., 0] * sub[..., 1])
        for coef, d, per_t in prepared:
            for col, item in enumerate(per_t):
                if item is None:
                    continue
                table, pairs = item
                val = contract_table(table, [inc] * d)
                for hv, prod in zip(pairs, halves):
                    val = val + 2.0 * np.einsum("rij,ij->r", prod, hv)
                out[lo : lo + len(rows), col] += coef * val
    return out


def simulate_hermite(
    kernel: Kernel,
    t_list: Sequence[float],
    grid: DiscretizedChaosGrid,
    reps: int,
    seed: int = 0,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> np.ndarray:
    """``(reps, len(t_list))`` samples of the discretized ``I_d(h_t)``.

    ``kernel`` is the (trace) kernel of arity ``d``; ``t = 0`` gives 0.
    """
    return _hermite_terms([(1.0, kernel)], t_list, grid, reps, seed, quad)


# --------------------------------------------------------------------------
# the limit of the normalized partial sums
# --------------------------------------------------------------------------


@dataclass
class LimitTerm:
    r: int
    d: Fraction
    trace: TraceKernel

    @property
    def order(self) -> int:
        return self.trace.k


@dataclass
class LimitSpec:
    k: int
    alpha: float
    H: float
    terms: list[LimitTerm]
    centered_stratonovich: bool = True

    def describe(self) -> str:
        parts = [("" if t.d == 1 else f"{t.d}*") + f"Z_{t.order}" for t in self.terms]
        return " + ".join(parts)

    def variance(self, t: float = 1.0, quad: QuadratureConfig = DEFAULT_QUAD) -> float:
        """``sum_r d_r^2 (k-2r)! ||h_t of g_r||^2``; distinct orders are orthogonal."""
        tot = 0.0
        for term in self.terms:
            nrm = l2_norm_h_t(term.trace, t, quad).value
            tot += float(term.d) ** 2 * math.factorial(term.order) * nrm
        return tot

    def simulate(
        self,
        t_list: Sequence[float],
        grid: DiscretizedChaosGrid,
        reps: int,
        seed: int,
        quad: QuadratureConfig = DEFAULT_QUAD,
    ) -> np.ndarray:
        pairs = [(float(term.d), term.trace) for term in self.terms]
        return _hermite_terms(pairs, t_list, grid, reps, seed, quad)

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "alpha": self.alpha,
            "H": self.H,
            "expansion": self.describe(),
            "terms": [
                {
                    "r": t.r,
                    "d": str(t.d),
                    "order": t.order,
                    "trace_alpha": t.trace.alpha,
                    "trace_profile": t.trace.sum_profile(),
                }
                for t in self.terms
            ],
        }


def build_limit_spec(kernel: Kernel, quad: QuadratureConfig = DEFAULT_QUAD) -> LimitSpec:
    """Terms ``(r, d_{k,r}, g_r)`` for ``0 <= r < k/2``; the constant term is dropped."""
    rep = validate_ghkb(kernel.unperturbed())
    if not rep.valid:
        raise ArgumentError("kernel is not GHK(B): " + "; ".join(rep.failures))
    g = symmetrize(kernel.unperturbed())
    k = g.k
    terms = [LimitTerm(r, d_coeff(k, r), TraceKernel(g, r, quad)) for r in range((k + 1) // 2)]
    return LimitSpec(k, g.alpha, hurst(g.alpha, k), terms)


def _simulate_sums(
    kernel: Kernel,
    noise: NoiseSpec,
    N: int,
    paths: int,
    seed: int,
    method: str,
    M: int | None,
    workers: int = 1,
) -> np.ndarray:
    """Centered paths ``X(n) - E X`` by the requested simulator."""
    if method == "auto":
        method = "mixture" if kernel.sum_profile() is not None else "direct"
    if method == "mixture":
        from .mixture import exp_mixture, simulate_mixture_paths

        return simulate_mixture_paths(exp_mixture(kernel), noise, N, paths, seed)
    if method == "direct":
        if M is None:
            raise ArgumentError("direct simulation needs a truncation M")
        tk = TruncatedKernel.from_kernel(kernel, M)
        return simulate_paths(tk, noise, N, paths, seed, workers) - exact_mean(tk, noise)
    raise ArgumentError(f"unknown simulation method {method!r}")


def _var_se(x: np.ndarray) -> tuple[float, float]:
    c = x - x.mean()
    return float(np.mean(c**2) * len(x) / (len(x) - 1)), float(np.std(c**2, ddof=1) / math.sqrt(len(x)))


def nclt_compare(
    kernel: Kernel,
    noise: NoiseSpec,
    N: int,
    paths: int,
    seed: int,
    grid: DiscretizedChaosGrid | None = None,
    limit_reps: int = 4000,
    method: str = "auto",
    M: int | None = None,
    t_list: Sequence[float] = (0.5, 1.0),
    quad: QuadratureConfig = DEFAULT_QUAD,
    workers: int = 1,
) -> dict:
    """Marginals of ``N^-H sum_{n <= Nt} (X(n) - E X)`` against the limit.

    Returns estimates only; pass/fail lives with the caller's manifest.
    """
    cls = classify_memory(kernel)
    if cls.regime != "LongMemory":
        raise ArgumentError("kernel is not in the non-central (long-memory) regime")
    H = cls.H
    spec = build_limit_spec(kernel, quad)
    X = _simulate_sums(kernel, noise, N, paths, seed, method, M, workers)
    cums = np.cumsum(X, axis=1)
    out = {
        "experiment": "nclt",
        "params": {"k": kernel.k, "alpha": kernel.alpha, "H": H, "N": N, "paths": paths,
                   "seed": seed, "noise": noise.law, "method": method, "M": M},
        "limit": spec.describe(),
        "per_t": {},
    }
    samples = {}
    for t in t_list:
        n = int(math.floor(N * t))
        S = cums[:, n - 1] / N**H
        samples[t] = S
        v, se = _var_se(S)
        m4 = float(np.mean((S - S.mean()) ** 4))
        out["per_t"][str(t)] = {
            "var": v,
            "var_se": se,
            "m4": m4,
            "kurtosis": m4 / v**2 if v > 0 else math.nan,
            "var_limit_quadrature": spec.variance(t, quad),
        }
    if 0.5 in samples and 1.0 in samples:
        out["self_similarity_ratio"] = out["per_t"]["0.5"]["var"] / out["per_t"]["1.0"]["var"]
        out["self_similarity_target"] = 0.5 ** (2 * H)
    if grid is not None and limit_reps > 0:
        Z = spec.simulate(list(t_list), grid, limit_reps, seed + 1, quad)
        for col, t in enumerate(t_list):
            D, p = ks_two_sample(samples[t], Z[:, col])
            zv, zse = _var_se(Z[:, col])
            out["per_t"][str(t)].update({"ks_D": D, "ks_p": p, "var_limit_sim": zv,
                                          "var_limit_sim_se": zse})
        out["captured_mass"] = captured_mass(spec.terms[0].trace, 1.0, grid, quad)
    return out


def _sigma2_per_path(X: np.ndarray, L: int) -> np.ndarray:
    per = _per_path_acov(X, L)
    return per[:, 0] + 2.0 * per[:, 1:].sum(axis=1)


def clt_compare(
    kernel: TruncatedKernel,
    noise: NoiseSpec,
    N: int,
    paths: int,
    seed: int,
    bound: PowerBound | None = None,
    L: int | None = None,
    N_list: Sequence[int] | None = None,
    workers: int = 1,
) -> dict:
    """Normality and long-run variance of ``N^-1/2 sum (X - E X)``.

    The long-run variance ``sigma^2 = sum_{|n| <= L} gamma(n)`` is estimated
    on two disjoint batches of path substreams (first and second half).
    """
    if bound is not None:
        cls = classify_memory(bound)
        if cls.regime != "ShortMemory":
            raise ArgumentError(f"bound does not imply short memory ({cls.basis})")
    L = L if L is not None else min(N // 10, 2 * kernel.M)
    X = simulate_paths(kernel, noise, N, paths, seed, workers) - exact_mean(kernel, noise)
    S = X.sum(axis=1) / math.sqrt(N)
    ad = anderson_normal(S)
    v, vse = _var_se(S)
    half = paths // 2
    sig = _sigma2_per_path(X, L)
    batches = []
    for part in (sig[:half], sig[half:]):
        batches.append((float(part.mean()), float(part.std(ddof=1) / math.sqrt(len(part)))))
    (s1, e1), (s2, e2) = batches
    joint = math.hypot(e1, e2)
    out = {
        "experiment": "clt",
        "params": {"k": kernel.k, "M": kernel.M, "N": N, "paths": paths, "seed": seed,
                   "noise": noise.law, "L": L},
        "anderson_statistic": ad.statistic,
        "anderson_critical_1pct": ad.critical_1pct,
        "normality_rejected_1pct": ad.rejected_1pct,
        "skewness": float(stats.skew(S)),
        "excess_kurtosis": float(stats.kurtosis(S)),
        "var": v,
        "var_se": vse,
        "sigma2_batches": [s1, s2],
        "sigma2_batch_se": [e1, e2],
        "sigma2_z": abs(s1 - s2) / joint if joint > 0 else math.inf,
        "sigma2": float(sig.mean()),
        "flags": [],
    }
    if out["sigma2"] <= 0:
        out["flags"].append("estimated sigma^2 <= 0")
    if N_list is not None:
        vs = partial_sum_variance(X, N_list, mean=0.0)
        out["variance_slope"] = vs.fit.as_dict() if vs.fit else None
    return out


# --------------------------------------------------------------------------
# hypercontractivity
# --------------------------------------------------------------------------


@dataclass
class HyperResult:
    ratio: float
    ci: tuple[float, float]
    p: float
    samples: int

    @property
    def ci_rel_width(self) -> float:
        return (self.ci[1] - self.ci[0]) / self.ratio


def hypercontractivity_ratio(
    h: np.ndarray,
    noise: NoiseSpec,
    p: float,
    samples: int,
    seed: int,
    batch: int = 10_000,
    n_boot: int = 400,
    blocks: int = 100,
) -> HyperResult:
    """``(E|Q|^p)^(1/p) / (E Q^2)^(1/2)`` for ``Q = Q_k(h)``, with bootstrap CI.

    Draw batch ``b`` comes from substream ``(seed, b)``.  The interval
    resamples ``blocks`` contiguous block totals of ``|Q|^p`` and ``Q^2``.
    """
    h = np.asarray(h, dtype=float)
    if p <= 2:
        raise ArgumentError("p must exceed 2")
    if not np.any(offdiag_part(h)):
        raise ArgumentError("the off-diagonal part of h vanishes")
    M = h.shape[0]
    Q = np.empty(samples)
    for b, lo in enumerate(range(0, samples, batch)):
        n = min(batch, samples - lo)
        eps = noise.sampler.draw(derive_stream(seed, (b,)).generator, n * M).reshape(n, M)
        Q[lo : lo + n] = discrete_chaos(h, eps)
    # dividing by the root mean square first keeps the estimate bitwise
    # unchanged under h -> 2^j h (power-of-two scaling and sqrt are exact)
    Z = Q / math.sqrt(np.mean(Q * Q))
    absp = np.abs(Z) ** p
    sq = Z * Z
    ratio = float(np.mean(absp) ** (1 / p) / np.mean(sq) ** 0.5)
    nb = min(blocks, samples)
    edges = np.linspace(0, samples, nb + 1).astype(int)
    tp = np.add.reduceat(absp, edges[:-1])
    t2 = np.add.reduceat(sq, edges[:-1])
    gen = derive_stream(seed, (1 << 30,)).generator
    idx = gen.integers(0, nb, size=(n_boot, nb))
    rb = (tp[idx].sum(1) / samples) ** (1 / p) / (t2[idx].sum(1) / samples) ** 0.5
    lo, hi = np.quantile(rb, [0.025, 0.975])
    return HyperResult(ratio, (float(lo), float(hi)), float(p), samples)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------


def acf_to_csv(acf: AcfSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lag", "gamma_hat", "se", "gamma_theory"])
    for i, lag in enumerate(acf.lags):
        th = "" if acf.gamma_theory is None else repr(float(acf.gamma_theory[i]))
        w.writerow([int(lag), repr(float(acf.gamma_hat[i])), repr(float(acf.se[i])), th])
    return buf.getvalue()


def varscale_to_csv(vs: VarianceScaling) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N", "var", "se"])
    for N, v, s in zip(vs.N, vs.var, vs.se):
        w.writerow([int(N), repr(float(v)), repr(float(s))])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def report_json(experiment: str, params: dict, estimates: dict, cis: dict | None = None,
                verdicts: dict | None = None) -> str:
    doc = {
        "experiment": experiment,
        "params": params,
        "estimates": estimates,
        "cis": cis or {},
        "pass_fail": verdicts or {},
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True)
