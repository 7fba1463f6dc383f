"""Set partitions, Appell polynomials and the off-diagonal term bookkeeping.

Exact rational arithmetic (``fractions.Fraction``) is used for every
coefficient; conversion to float happens only where a value meets an array.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, MomentUnavailable

__all__ = [
    "MomentVector",
    "Partition",
    "AppellFamily",
    "TermIndex",
    "enumerate_partitions",
    "appell_family",
    "power_expansion",
    "c_coeff",
    "d_coeff",
    "enumerate_terms",
    "s_prime_sum",
    "a_pi_table",
    "offdiag_mask",
    "offdiag_sum_mobius",
    "mobius_weight",
]

MAX_PARTITION_K = 10


def _exact(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    return Fraction(v).limit_denominator(10**12) if float(v).is_integer() else v


class MomentVector:
    """Raw moments ``mu_0 .. mu_K`` of an innovation law.

    Moments past the supplied order are *unavailable*: asking for one raises
    :class:`MomentUnavailable` rather than extrapolating.
    """

    def __init__(self, values: Sequence, standardized: bool = True):
        vals = tuple(_exact(v) for v in values)
        if not vals or vals[0] != 1:
            raise ArgumentError("mu_0 must equal 1")
        if standardized:
            if len(vals) < 3:
                raise ArgumentError("standardized moments need mu_0..mu_2")
            if vals[1] != 0 or vals[2] != 1:
                raise ArgumentError("standardized noise requires mu_1 = 0 and mu_2 = 1")
        self.values = vals
        self.standardized = standardized

    @property
    def order(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, p: int):
        if p < 0:
            raise ArgumentError("moment order must be >= 0")
        if p >= len(self.values):
            raise MomentUnavailable(
                f"moment mu_{p} not available (supplied up to mu_{self.order})"
            )
        return self.values[p]

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __eq__(self, other):
        return isinstance(other, MomentVector) and self.values == other.values

    def __hash__(self):
        return hash(self.values)

    def __repr__(self):
        return f"MomentVector({[str(v) for v in self.values]})"

    def hankel_positive(self) -> bool:
        """Positive semidefiniteness of the moment Hankel matrix."""
        n = self.order // 2 + 1
        H = np.array([[float(self.values[i + j]) for j in range(n)] for i in range(n)])
        return bool(np.linalg.eigvalsh(H).min() >= -1e-9 * max(1.0, abs(H).max()))


# --------------------------------------------------------------------------
# partitions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    """Partition of ``{1..k}``; blocks sorted internally and by leader."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted(tuple(sorted(b)) for b in self.blocks if len(b)))
        elems = [e for b in blocks for e in b]
        k = len(elems)
        if sorted(elems) != list(range(1, k + 1)):
            raise ArgumentError(f"blocks {self.blocks} do not partition {{1..{k}}}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]]) -> "Partition":
        return cls(tuple(tuple(b) for b in blocks))

    @classmethod
    def parse(cls, text: str) -> "Partition":
        inner = re.findall(r"\{([^{}]*)\}", text.strip())
        if not inner:
            raise ArgumentError(f"cannot parse partition {text!r}")
        blocks = [tuple(int(v) for v in part.split(",") if v.strip()) for part in inner]
        return cls.from_blocks(blocks)

    @property
    def k(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    @cached_property
    def labels(self) -> tuple[int, ...]:
        """Block index (0-based) of each position ``1..k``.

        ``i_pi = (i[labels[0]], ..., i[labels[k-1]])``.
        """
        lab = [0] * self.k
        for t, b in enumerate(self.blocks):
            for e in b:
                lab[e - 1] = t
        return tuple(lab)

    def lift(self, i: Sequence[int]) -> tuple[int, ...]:
        """Map an ``m``-vector to the ``k``-vector ``i_pi``."""
        if len(i) != self.m:
            raise ArgumentError(f"expected {self.m} indices, got {len(i)}")
        return tuple(i[t] for t in self.labels)

    def __str__(self):
        return "{" + ",".join("{" + ",".join(map(str, b)) + "}" for b in self.blocks) + "}"


def _restricted_growth(k):
    def rec(prefix, mx):
        if len(prefix) == k:
            yield prefix
            return
        for v in range(mx + 2):
            yield from rec(prefix + [v], max(mx, v))

    yield from rec([0], 0)


def enumerate_partitions(k: int) -> list[Partition]:
    """All set partitions of ``{1..k}``, sorted lexicographically by blocks."""
    if not 1 <= k <= MAX_PARTITION_K:
        raise ArgumentError(f"k must be in 1..{MAX_PARTITION_K}, got {k}")
    out = []
    for rgs in _restricted_growth(k):
        blocks: dict[int, list[int]] = {}
        for pos, lab in enumerate(rgs, start=1):
            blocks.setdefault(lab, []).append(pos)
        out.append(Partition.from_blocks(blocks.values()))
    out.sort(key=lambda p: p.blocks)
    return out


# --------------------------------------------------------------------------
# Appell polynomials
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AppellFamily:
    """``A_p(x) = sum_j coeffs[p][j] x**j`` for ``p = 0..K``."""

    moments: MomentVector
    coeffs: tuple[tuple, ...]

    @property
    def K(self) -> int:
        return len(self.coeffs) - 1

    def poly(self, p: int) -> tuple:
        return self.coeffs[p]

    def __call__(self, p: int, x):
        """Evaluate ``A_p`` (Horner, float) on a scalar or array."""
        x = np.asarray(x, dtype=float)
        acc = np.zeros_like(x)
        for c in reversed(self.coeffs[p]):
            acc = acc * x + float(c)
        return acc

    def table(self, x, orders: Iterable[int] | None = None) -> np.ndarray:
        """Stack ``A_0(x) .. A_K(x)`` (or the requested orders)."""
        orders = range(self.K + 1) if orders is None else orders
        return np.stack([self(p, x) for p in orders])


def appell_family(moments: MomentVector | Sequence, K: int) -> AppellFamily:
    """Solve ``A_p' = p A_{p-1}``, ``E A_p(eps) = 0``, ``A_0 = 1`` up to order ``K``.

    The moments need not be standardized here (general ``mu_1`` allowed).
    """
    if not isinstance(moments, MomentVector):
        moments = MomentVector(moments, standardized=False)
    if K < 0:
        raise ArgumentError("K must be >= 0")
    if K > moments.order:
        raise MomentUnavailable(f"A_{K} needs mu_1..mu_{K}; have up to mu_{moments.order}")
    coeffs = [(Fraction(1),)]
    for p in range(1, K + 1):
        prev = coeffs[-1]
        c = [Fraction(0)] + [Fraction(p) * _exact(a) / (j + 1) for j, a in enumerate(prev)]
        c[0] = -sum(c[j] * moments[j] for j in range(1, p + 1))
        coeffs.append(tuple(c))
    return AppellFamily(moments, tuple(coeffs))


def power_expansion(p: int, family: AppellFamily) -> list:
    """Weights ``w_j = C(p, j) mu_{p-j}`` with ``x**p = sum_j w_j A_j(x)``."""
    if p > family.K:
        raise ArgumentError(f"p={p} exceeds family order {family.K}")
    mu = family.moments
    return [math.comb(p, j) * mu[p - j] for j in range(p + 1)]


def c_coeff(p: Sequence[int], j: Sequence[int], moments: MomentVector):
    """``prod_t C(p_t, j_t) mu_{p_t - j_t}`` (exact)."""
    if len(p) != len(j):
        raise ArgumentError("size and order vectors differ in length")
    out = Fraction(1)
    for pt, jt in zip(p, j):
        if not 0 <= jt <= pt:
            raise ArgumentError(f"order {jt} outside 0..{pt}")
        out *= math.comb(pt, jt) * moments[pt - jt]
    return out


def d_coeff(k: int, r: int) -> Fraction:
    """Number of ways to pick ``r`` unordered disjoint pairs among ``k`` items."""
    if r < 0 or 2 * r > k:
        raise ArgumentError(f"need 0 <= 2r <= k, got k={k}, r={r}")
    return Fraction(math.factorial(k), 2**r * math.factorial(k - 2 * r) * math.factorial(r))


# --------------------------------------------------------------------------
# off-diagonal terms X_pi^j
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TermIndex:
    partition: Partition
    j: tuple[int, ...]
    c: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "j", tuple(int(v) for v in self.j))
        sizes = self.partition.sizes
        if len(self.j) != len(sizes):
            raise ArgumentError("order vector length must equal number of blocks")
        if any(not 0 <= jt <= pt for jt, pt in zip(self.j, sizes)):
            raise ArgumentError(f"orders {self.j} exceed block sizes {sizes}")

    @property
    def k(self):
        return self.partition.k

    @property
    def m(self):
        return self.partition.m

    @property
    def sizes(self):
        return self.partition.sizes

    @property
    def T(self) -> tuple[int, ...]:
        """0-based block indices summed out (Appell order zero)."""
        return tuple(t for t, jt in enumerate(self.j) if jt == 0)

    @property
    def free(self) -> tuple[int, ...]:
        return tuple(t for t, jt in enumerate(self.j) if jt > 0)

    @property
    def r(self) -> int:
        return len(self.T)

    @property
    def m_minus_r(self) -> int:
        return self.m - self.r

    @property
    def long_memory(self) -> bool:
        return self.m + self.r == self.k

    @property
    def regime(self) -> str:
        return "LRD" if self.long_memory else "SRD"

    @property
    def admissible(self) -> bool:
        if not any(self.j):
            return False
        return all(pt >= 2 for pt, jt in zip(self.sizes, self.j) if jt == 0)

    def as_row(self) -> dict:
        return {
            "partition": str(self.partition),
            "j": list(self.j),
            "r": self.r,
            "m": self.m,
            "regime": self.regime,
            "c_coeff": str(self.c),
        }


def enumerate_terms(k: int, moments: MomentVector) -> list[TermIndex]:
    """All ``(pi, j)`` with ``j != 0`` and nonzero ``c(p, j)``."""
    if moments[1] != 0:
        raise ArgumentError("term enumeration requires mu_1 = 0")
    out = []
    for part in enumerate_partitions(k):
        sizes = part.sizes
        for j in itertools.product(*(range(p + 1) for p in sizes)):
            if not any(j):
                continue
            c = c_coeff(sizes, j, moments)
            if c == 0:
                continue
            out.append(TermIndex(part, j, c))
    return out


# --------------------------------------------------------------------------
# tables on the truncated lattice {1..M}^k (stored 0-based)
# --------------------------------------------------------------------------

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def a_pi_table(values: np.ndarray, partition: Partition) -> np.ndarray:
    """``a_pi(i_1..i_m) = a(i_pi)`` as an ``m``-dimensional table."""
    values = np.asarray(values)
    if values.ndim != partition.k:
        raise ArgumentError(f"table has {values.ndim} axes, partition has k={partition.k}")
    src = "".join(_LETTERS[t] for t in partition.labels)
    dst = _LETTERS[: partition.m]
    return np.einsum(f"{src}->{dst}", values).copy()


def offdiag_mask(m: int, M: int) -> np.ndarray:
    """Boolean table on ``{1..M}^m``: True where all indices are distinct."""
    mask = np.ones((M,) * m, dtype=bool)
    idx = np.indices((M,) * m) if m > 1 else None
    for p in range(m):
        for q in range(p + 1, m):
            mask &= idx[p] != idx[q]
    return mask


def mobius_weight(partition: Partition) -> int:
    """``mu(0, sigma)`` in the partition lattice: ``prod (-1)^(b-1) (b-1)!``."""
    w = 1
    for b in partition.sizes:
        w *= (-1) ** (b - 1) * math.factorial(b - 1)
    return w


def offdiag_sum_mobius(table: np.ndarray) -> float:
    """``sum over pairwise-distinct indices`` by Mobius inversion.

    Independent of any distinctness predicate: combines full sums of the
    diagonal restrictions of ``table`` over every partition of its axes.
    """
    m = table.ndim
    if m == 0:
        return float(table)
    total = 0.0
    for sigma in enumerate_partitions(m):
        total += mobius_weight(sigma) * float(a_pi_table(table, sigma).sum())
    return total


def s_prime_sum(
    a,
    partition: Partition,
    T: Iterable[int],
    free: Sequence[int] = (),
) -> float:
    """``(S'_T a_pi)(free)``: off-diagonal sum of ``a_pi`` over the blocks in ``T``.

    ``a`` is a dense table on ``{1..M}^k`` (or an object with ``.values``);
    ``T`` holds 0-based block indices; ``free`` gives the 1-based lattice
    values of the remaining blocks in increasing block order.  Summed
    indices are pairwise distinct and distinct from every free value.
    """
    values = np.asarray(getattr(a, "values", a))
    M = values.shape[0]
    T = tuple(sorted(set(T)))
    m = partition.m
    if any(not 0 <= t < m for t in T):
        raise ArgumentError(f"T={T} not a subset of block indices 0..{m - 1}")
    rest = [t for t in range(m) if t not in T]
    if len(free) != len(rest):
        raise ArgumentError(f"need {len(rest)} free values, got {len(free)}")
    if any(not 1 <= v <= M for v in free):
        raise ArgumentError("free values must lie in 1..M")
    labels = partition.labels
    if not T:
        full = [0] * m
        for t, v in zip(rest, free):
            full[t] = v
        return float(values[tuple(full[lab] - 1 for lab in labels)])
    cand = np.array(list(itertools.product(range(1, M + 1), repeat=len(T))), dtype=np.int64)
    keep = np.ones(len(cand), dtype=bool)
    for p in range(len(T)):
        for v in free:
            keep &= cand[:, p] != v
        for q in range(p + 1, len(T)):
            keep &= cand[:, p] != cand[:, q]
    cand = cand[keep]
    if len(cand) == 0:
        return 0.0
    full = np.empty((len(cand), m), dtype=np.int64)
    for col, t in enumerate(T):
        full[:, t] = cand[:, col]
    for t, v in zip(rest, free):
        full[:, t] = v
    lifted = full[:, list(labels)] - 1
    return float(values[tuple(lifted.T)].sum())
