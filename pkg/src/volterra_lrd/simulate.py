"""Truncated Volterra processes: direct simulation, exact mean, decomposition.

Index conventions.  Kernel tables are 0-based arrays with ``values[i-1]``
holding ``a(i)`` for ``i`` in ``{1..M}^k``.  The innovation record of a path
of length ``N`` has length ``N + M`` and ``eps[j] = eps_{j + 1 - M}``, so
``X(n)`` for ``n = 1..N`` reads ``eps[n - 1 : n - 1 + M]`` reversed.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .combinatorics import (
    MomentVector,
    TermIndex,
    a_pi_table,
    appell_family,
    enumerate_partitions,
    offdiag_mask,
)
from .errors import ArgumentError, ResourceError
from .kernels import Kernel
from .mc import NoiseSampler, derive_stream, fit_loglog_slope, noise_law, sample_noise

__all__ = [
    "MAX_TABLE_ENTRIES",
    "NoiseSpec",
    "TruncatedKernel",
    "VolterraPath",
    "PowerBound",
    "simulate_path",
    "simulate_paths",
    "exact_mean",
    "decompose_path",
    "L2Report",
    "check_l2_conditions",
    "discrete_chaos",
    "counterexample_table",
    "path_to_csv",
    "contract_table",
    "offdiag_part",
]

MAX_TABLE_ENTRIES = 10**8
_CHUNK_ENTRIES = 1 << 22


@dataclass(frozen=True)
class NoiseSpec:
    """Innovation law plus the order up to which its moments are exposed."""

    law: str = "gaussian"
    order: int = 12

    def __post_init__(self):
        noise_law(self.law)
        if self.order < 2:
            raise ArgumentError("moment order must be >= 2")

    @property
    def sampler(self) -> NoiseSampler:
        return noise_law(self.law)

    @property
    def moments(self) -> MomentVector:
        return self.sampler.moments(self.order)

    def for_order(self, k: int) -> "NoiseSpec":
        """Same law with moments available to ``2k + 2``."""
        return NoiseSpec(self.law, max(self.order, 2 * k + 2))


def _check_budget(M: int, k: int):
    if M**k > MAX_TABLE_ENTRIES:
        raise ResourceError(
            f"table with M={M}, k={k} has {M**k:.3g} entries (limit "
            f"{MAX_TABLE_ENTRIES:.0e}); reduce M or k"
        )


class TruncatedKernel:
    """Dense coefficient table ``a(i)`` on ``{1..M}^k``."""

    def __init__(self, values, source: Kernel | None = None, symmetric: bool | None = None):
        values = np.ascontiguousarray(values, dtype=float)
        if values.ndim < 1 or len(set(values.shape)) != 1:
            raise ArgumentError(f"table must be a cube, got shape {values.shape}")
        _check_budget(values.shape[0], values.ndim)
        self.values = values
        self.values.setflags(write=False)
        self.source = source
        is_sym = _is_symmetric(values)
        if symmetric and not is_sym:
            raise ArgumentError("table flagged symmetric but is not permutation invariant")
        self.symmetric = is_sym if symmetric is None else bool(symmetric)

    @property
    def k(self) -> int:
        return self.values.ndim

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_kernel(cls, kernel: Kernel, M: int) -> "TruncatedKernel":
        if M < 1:
            raise ArgumentError("M must be >= 1")
        _check_budget(M, kernel.k)
        grid = np.stack(
            np.meshgrid(*([np.arange(1, M + 1, dtype=float)] * kernel.k), indexing="ij"),
            axis=-1,
        )
        return cls(kernel.evaluate(grid), source=kernel)

    @classmethod
    def power_bound(cls, gammas: Sequence[float], M: int, c: float = 1.0):
        """``c * prod_j i_j ** gamma_j`` (a product kernel)."""
        k = len(gammas)
        _check_budget(M, k)
        i = np.arange(1, M + 1, dtype=float)
        table = np.asarray(c, dtype=float)
        for g in gammas:
            table = np.multiply.outer(table, i**g)
        return cls(table)

    def symmetrized(self) -> "TruncatedKernel":
        if self.symmetric:
            return self
        perms = list(itertools.permutations(range(self.k)))
        acc = sum(np.transpose(self.values, p) for p in perms) / len(perms)
        return TruncatedKernel(acc, source=None, symmetric=True)

    def permuted(self, perm: Sequence[int]) -> "TruncatedKernel":
        return TruncatedKernel(np.transpose(self.values, perm), source=None)

    def __repr__(self):
        return f"TruncatedKernel(k={self.k}, M={self.M}, symmetric={self.symmetric})"


def _is_symmetric(values: np.ndarray) -> bool:
    k = values.ndim
    scale = max(float(np.max(np.abs(values))) if values.size else 0.0, 1e-300)
    for p in range(k - 1):
        perm = list(range(k))
        perm[p], perm[p + 1] = perm[p + 1], perm[p]
        if np.max(np.abs(values - np.transpose(values, perm))) > 1e-14 * scale:
            return False
    return True


@dataclass
class VolterraPath:
    X: np.ndarray
    eps: np.ndarray
    seed: int
    path_index: int = 0
    config: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.X)


# --------------------------------------------------------------------------
# direct simulation
# --------------------------------------------------------------------------


def _windows(eps: np.ndarray, M: int, N: int) -> np.ndarray:
    """Row ``n-1`` holds ``(eps_{n-1}, ..., eps_{n-M})``."""
    return sliding_window_view(eps[: N + M - 1], M)[:, ::-1]


def contract_table(table: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    """``out[n] = sum_i table[i] prod_t factors[t][n, i_t]``.

    ``factors[t]`` has shape ``(N, M)``.  The leading table axis is
    contracted by a BLAS product, the rest elementwise, in row chunks.
    """
    d = table.ndim
    N, M = factors[0].shape
    if d == 0:
        return np.full(N, float(table))
    flat = table.reshape(M, -1)
    rest = flat.shape[1]
    chunk = max(1, _CHUNK_ENTRIES // max(rest, 1))
    out = np.empty(N)
    for lo in range(0, N, chunk):
        hi = min(N, lo + chunk)
        acc = factors[0][lo:hi] @ flat
        for t in range(1, d):
            acc = acc.reshape(hi - lo, M, -1)
            acc = np.einsum("nia,ni->na", acc, factors[t][lo:hi])
        out[lo:hi] = acc.reshape(hi - lo)
    return out


def _draw_eps(noise: NoiseSpec, seed: int, path_index: int, n: int) -> np.ndarray:
    return sample_noise(noise.sampler, derive_stream(seed, (path_index,)), n)


def simulate_path(
    kernel: TruncatedKernel,
    noise: NoiseSpec,
    N: int,
    seed: int,
    path_index: int = 0,
    eps: np.ndarray | None = None,
) -> VolterraPath:
    """``X(n) = sum_i a(i) eps_{n-i_1} ... eps_{n-i_k}`` for ``n = 1..N``."""
    if N < 1:
        raise ArgumentError("N must be >= 1")
    M = kernel.M
    if eps is None:
        eps = _draw_eps(noise, seed, path_index, N + M)
    else:
        eps = np.asarray(eps, dtype=float)
        if eps.shape != (N + M,):
            raise ArgumentError(f"innovation record must have length N+M={N + M}")
    W = _windows(eps, M, N)
    X = contract_table(kernel.values, [W] * kernel.k)
    config = {"N": N, "M": M, "k": kernel.k, "noise": noise.law, "seed": seed}
    return VolterraPath(X, eps, seed, path_index, config)


def simulate_paths(
    kernel: TruncatedKernel,
    noise: NoiseSpec,
    N: int,
    paths: int,
    seed: int,
    workers: int = 1,
    first_path: int = 0,
) -> np.ndarray:
    """``(paths, N)`` array; path ``p`` always uses substream ``(seed, p)``."""

    def one(p):
        return simulate_path(kernel, noise, N, seed, p).X

    idx = range(first_path, first_path + paths)
    if workers <= 1:
        rows = [one(p) for p in idx]
    else:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(one, idx))
    return np.vstack(rows) if rows else np.empty((0, N))


# --------------------------------------------------------------------------
# mean and decomposition
# --------------------------------------------------------------------------


def offdiag_part(table: np.ndarray) -> np.ndarray:
    if table.ndim <= 1:
        return table
    return np.where(offdiag_mask(table.ndim, table.shape[0]), table, 0.0)


def exact_mean(kernel: TruncatedKernel, noise: NoiseSpec) -> float:
    """``E X = sum_pi mu_{p_1}...mu_{p_m} sum'_i a_pi(i)``."""
    mu = noise.for_order(kernel.k).moments
    total = 0.0
    for part in enumerate_partitions(kernel.k):
        w = 1
        for p in part.sizes:
            w *= mu[p]
        if w == 0:
            continue
        total += float(w) * float(offdiag_part(a_pi_table(kernel.values, part)).sum())
    return total


def _reduced_table(kernel: TruncatedKernel, term: TermIndex) -> np.ndarray:
    """``(S'_T a_pi)`` on the free blocks, zero off the distinct set."""
    table = offdiag_part(a_pi_table(kernel.values, term.partition))
    if term.T:
        table = table.sum(axis=term.T)
    return table


def decompose_path(
    kernel: TruncatedKernel,
    eps: np.ndarray,
    terms: Iterable[TermIndex],
    noise: NoiseSpec,
) -> dict[TermIndex, np.ndarray]:
    """Pathwise off-diagonal terms ``X_pi^j(n)``, ``n = 1..len(eps) - M``.

    The sum over all terms of :func:`combinatorics.enumerate_terms` equals
    ``X(n) - E X``.  The identity does not need a symmetric table, although
    the long/short memory reading of individual terms does.
    """
    eps = np.asarray(eps, dtype=float)
    M = kernel.M
    N = len(eps) - M
    if N < 1:
        raise ArgumentError("innovation record shorter than M + 1")
    mom = noise.for_order(kernel.k).moments
    fam = appell_family(mom, kernel.k)
    W = _windows(eps, M, N)
    cache: dict[int, np.ndarray] = {}

    def appell_window(j):
        if j not in cache:
            cache[j] = fam(j, W)
        return cache[j]

    out = {}
    for term in terms:
        if term.k != kernel.k:
            raise ArgumentError(f"term of order {term.k} for kernel of order {kernel.k}")
        if not term.admissible:
            raise ArgumentError(f"non-admissible term {term.partition} j={term.j}")
        c = float(term.c)
        if c == 0.0:
            out[term] = np.zeros(N)
            continue
        red = _reduced_table(kernel, term)
        factors = [appell_window(term.j[t]) for t in term.free]
        out[term] = c * contract_table(red, factors)
    return out


# --------------------------------------------------------------------------
# L2 well-definedness diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerBound:
    """Bound ``|a(i)| <= c prod_j i_j ** gamma_j``."""

    gammas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if not self.gammas:
            raise ArgumentError("need at least one exponent")

    @property
    def k(self) -> int:
        return len(self.gammas)


@dataclass
class ConditionSeries:
    """Partial sums of one condition at lattice sizes ``M_list``."""

    name: str
    partition: str
    T: tuple[int, ...]
    M_list: list[int]
    partial_sums: list[float]
    slope: float | None
    divergent: bool | None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class L2Report:
    well_defined: bool | None
    basis: str
    advisory: bool
    conditions: list[ConditionSeries] = field(default_factory=list)
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "well_defined": self.well_defined,
            "basis": self.basis,
            "advisory": self.advisory,
            "note": self.note,
            "conditions": [c.as_dict() for c in self.conditions],
        }


def divergence_slope(M_list, partial_sums) -> tuple[float | None, bool | None]:
    """Growth diagnostic on dyadic partial sums ``S(2^j)``.

    With block increments ``I_j = S(2^{j+1}) - S(2^j)``, a convergent series
    whose tail decays at least like ``1/(j log^2 j)`` in ``log M`` gives a
    negative OLS slope of ``log(j I_j)`` on ``log j``; a divergent one such as
    ``sum 1/(i log i)`` gives a slope ``>= 0``.  A vanishing last increment
    means the sum has already stopped changing.
    """
    M_list = np.asarray(M_list, dtype=float)
    S = np.asarray(partial_sums, dtype=float)
    if len(S) < 2:
        return None, None
    inc = np.diff(S)
    j = np.log2(M_list[:-1])
    if inc[-1] <= 1e-15 * max(abs(S[-1]), 1e-300):
        return -math.inf, False
    keep = inc > 0
    if keep.sum() < 4:
        return None, None
    fit = fit_loglog_slope(j[keep], j[keep] * inc[keep])
    return fit.slope, bool(fit.slope >= 0)


def _dyadic_sizes(M: int, M_min: int = 4) -> list[int]:
    out = []
    m = M_min
    while m <= M:
        out.append(m)
        m *= 2
    if not out or out[-1] != M:
        out.append(M)
    return out


def check_l2_conditions(
    kernel: TruncatedKernel | PowerBound, M_list: Sequence[int] | None = None
) -> L2Report:
    """Finite analogues of the two square-summability conditions.

    A :class:`PowerBound` is decided analytically (every exponent below
    ``-1/2`` suffices).  A table is only probed: partial sums over
    ``{1..M'}`` for growing ``M'`` are reported with a divergence flag, and
    the verdict is advisory because truncated sums are always finite.
    """
    if isinstance(kernel, PowerBound):
        ok = all(g < -0.5 for g in kernel.gammas)
        return L2Report(
            ok if ok else None,
            "power bound: all exponents < -1/2" if ok else "power bound inconclusive",
            advisory=False,
        )
    vals = np.abs(kernel.values)
    M = kernel.M
    sizes = list(M_list) if M_list is not None else _dyadic_sizes(M)
    if any(s > M or s < 1 for s in sizes):
        raise ArgumentError(f"lattice sizes must lie in 1..{M}")
    series = []
    for part in enumerate_partitions(kernel.k):
        m = part.m
        base = a_pi_table(vals, part)
        # condition on sum' a_pi^2
        sums = [float((offdiag_part(base[(slice(0, s),) * m]) ** 2).sum()) for s in sizes]
        slope, div = divergence_slope(sizes, sums)
        series.append(ConditionSeries("square", str(part), (), sizes, sums, slope, div))
        doubles = [t for t, p in enumerate(part.sizes) if p >= 2]
        for r in range(1, len(doubles) + 1):
            for T in itertools.combinations(doubles, r):
                sums = []
                for s in sizes:
                    red = offdiag_part(base[(slice(0, s),) * m]).sum(axis=T)
                    sums.append(float((red**2).sum()) if len(T) < m else float(red))
                slope, div = divergence_slope(sizes, sums)
                name = "trace-square" if len(T) < m else "trace-sum"
                series.append(ConditionSeries(name, str(part), T, sizes, sums, slope, div))
    flags = [c.divergent for c in series]
    if any(f is True for f in flags):
        verdict = False
    elif all(f is False for f in flags):
        verdict = True
    else:
        verdict = None
    return L2Report(
        verdict,
        "tabulated partial-sum growth",
        advisory=True,
        conditions=series,
        note="truncated sums are finite; divergence flags are growth diagnostics only",
    )


def counterexample_table(M: int) -> TruncatedKernel:
    """``a(i1, i2) = (i1 + i2)^-1 (log i2)^-1`` with the ``i2 = 1`` column set to 0."""
    i = np.arange(1, M + 1, dtype=float)
    with np.errstate(divide="ignore"):
        inv_log = np.where(i > 1, 1.0 / np.log(i), 0.0)
    table = inv_log[None, :] / (i[:, None] + i[None, :])
    return TruncatedKernel(table, symmetric=False)


# --------------------------------------------------------------------------
# off-diagonal forms Q_k(h)
# --------------------------------------------------------------------------


def discrete_chaos(h: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """``Q_k(h) = sum'_i h(i) eps_{i_1} ... eps_{i_k}`` with diagonals excluded.

    ``eps`` has shape ``(M,)`` or ``(B, M)`` for a batch of independent
    records; returns a scalar array or shape ``(B,)``.
    """
    h = np.asarray(h, dtype=float)
    eps = np.asarray(eps, dtype=float)
    single = eps.ndim == 1
    E = eps[None, :] if single else eps
    if E.shape[1] != h.shape[0]:
        raise ArgumentError("noise record length must match the table side")
    out = contract_table(offdiag_part(h), [E] * h.ndim)
    return out[0] if single else out


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------


def path_to_csv(path: VolterraPath, include_eps: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    M = len(path.eps) - path.N
    w.writerow(["n", "X", "eps"] if include_eps else ["n", "X"])
    for n in range(1, path.N + 1):
        row = [n, repr(float(path.X[n - 1]))]
        if include_eps:
            row.append(repr(float(path.eps[n - 1 + M])))
        w.writerow(row)
    return buf.getvalue()


def config_to_json(kernel_doc: dict, noise: str, N: int, M: int, paths: int, seed: int) -> str:
    doc = {"kernel": kernel_doc, "noise": noise, "N": N, "M": M, "paths": paths, "seed": seed}
    return json.dumps(doc, sort_keys=True, indent=2)
