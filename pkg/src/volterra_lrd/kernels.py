"""Homogeneous kernels on the positive orthant.

A kernel ``g`` of arity ``k`` is a function on ``(0, inf)^k`` with
``g(lam * x) = lam**alpha * g(x)``.  The concrete classes below cover the
power-sum and ratio families, the product (Hermite-type) form, and closure
under scaling, sums, pointwise max/min and a lattice perturbation factor.

Every kernel evaluates vectorised over the last axis: ``kernel(x)`` with
``x.shape == (..., k)`` returns an array of shape ``x.shape[:-1]``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DomainError

__all__ = [
    "Kernel",
    "PowerSum",
    "ProductPower",
    "RatioForm",
    "Scale",
    "Sum",
    "Max",
    "Min",
    "Perturbed",
    "Symmetrized",
    "ValidationReport",
    "eval_kernel",
    "validate_ghkb",
    "ghk_alpha_range",
    "hurst",
    "symmetrize",
    "kernel_to_dict",
    "kernel_from_dict",
    "dumps_kernel",
    "loads_kernel",
]

_ALPHA_RTOL = 1e-12
MAX_SYMMETRIZE_ARITY = 6


def ghk_alpha_range(k: int) -> tuple[float, float]:
    """Open interval of admissible homogeneity exponents for arity ``k``."""
    return (-(k + 1) / 2.0, -k / 2.0)


def hurst(alpha: float, k: int) -> float:
    return alpha + k / 2.0 + 1.0


def _same_alpha(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=_ALPHA_RTOL, abs_tol=_ALPHA_RTOL)


class Kernel:
    """Base class.  Subclasses are frozen dataclasses."""

    kind: str = "Kernel"

    @property
    def k(self) -> int:
        raise NotImplementedError

    @property
    def alpha(self) -> float:
        raise NotImplementedError

    @property
    def symmetric(self) -> bool:
        return False

    @property
    def hurst(self) -> float:
        return hurst(self.alpha, self.k)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))

    def unperturbed(self) -> "Kernel":
        """The homogeneous part (identity except for :class:`Perturbed`)."""
        return self

    def sum_profile(self):
        """Terms ``((c, e), ...)`` with ``g(x) = sum c * (x_1+...+x_k)**e``.

        ``None`` when the kernel does not depend on ``x`` only through its
        l1 norm.  Used for closed-form traces and the exponential-mixture
        simulator.
        """
        return None

    def params(self) -> dict:
        return {}

    def children(self) -> tuple["Kernel", ...]:
        return ()


@dataclass(frozen=True)
class PowerSum(Kernel):
    """``(x_1 + ... + x_k) ** alpha``."""

    arity: int
    exponent: float
    kind = "PowerSum"

    def __post_init__(self):
        if self.arity < 1:
            raise ArgumentError("arity must be >= 1")

    @property
    def k(self):
        return self.arity

    @property
    def alpha(self):
        return float(self.exponent)

    @property
    def symmetric(self):
        return True

    def evaluate(self, x):
        return np.power(x.sum(axis=-1), self.exponent)

    def sum_profile(self):
        return ((1.0, float(self.exponent)),)


@dataclass(frozen=True)
class ProductPower(Kernel):
    """``prod_j x_j ** gamma_j``; homogeneous with ``alpha = sum(gamma)``.

    Not of Class (B): it is unbounded near the coordinate hyperplanes, which
    :func:`validate_ghkb` detects.  Kept for power-bound (short-memory) specs.
    """

    gammas: tuple[float, ...]
    kind = "ProductPower"

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if not self.gammas:
            raise ArgumentError("ProductPower needs at least one exponent")

    @property
    def k(self):
        return len(self.gammas)

    @property
    def alpha(self):
        return float(sum(self.gammas))

    @property
    def symmetric(self):
        return len(set(self.gammas)) == 1

    def evaluate(self, x):
        return np.prod(np.power(x, np.asarray(self.gammas)), axis=-1)

    def params(self):
        return {"gammas": list(self.gammas)}


@dataclass(frozen=True)
class RatioForm(Kernel):
    """``prod_j x_j ** a_j / sum_j x_j ** b`` with ``alpha = sum(a) - b``."""

    a: tuple[float, ...]
    b: float
    kind = "RatioForm"

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        if not self.a:
            raise ArgumentError("RatioForm needs at least one numerator exponent")
        if min(self.a) <= 0 or self.b <= 0:
            raise ArgumentError("RatioForm requires a_j > 0 and b > 0")

    @property
    def k(self):
        return len(self.a)

    @property
    def alpha(self):
        return float(sum(self.a) - self.b)

    @property
    def symmetric(self):
        return len(set(self.a)) == 1

    def evaluate(self, x):
        num = np.prod(np.power(x, np.asarray(self.a)), axis=-1)
        return num / np.power(x, self.b).sum(axis=-1)

    def params(self):
        return {"a": list(self.a), "b": float(self.b)}


@dataclass(frozen=True)
class Scale(Kernel):
    c: float
    inner: Kernel
    kind = "Scale"

    @property
    def k(self):
        return self.inner.k

    @property
    def alpha(self):
        return self.inner.alpha

    @property
    def symmetric(self):
        return self.inner.symmetric

    def evaluate(self, x):
        return self.c * self.inner.evaluate(x)

    def unperturbed(self):
        return Scale(self.c, self.inner.unperturbed())

    def sum_profile(self):
        p = self.inner.sum_profile()
        if p is None:
            return None
        return tuple((self.c * c, e) for c, e in p)

    def params(self):
        return {"c": float(self.c)}

    def children(self):
        return (self.inner,)


@dataclass(frozen=True)
class _Combinator(Kernel):
    inner: tuple[Kernel, ...]

    def __post_init__(self):
        object.__setattr__(self, "inner", tuple(self.inner))
        if not self.inner:
            raise ArgumentError(f"{self.kind} needs at least one child")
        k0, a0 = self.inner[0].k, self.inner[0].alpha
        for ch in self.inner[1:]:
            if ch.k != k0 or not _same_alpha(ch.alpha, a0):
                raise ArgumentError(
                    f"{self.kind} children must share (k, alpha); got "
                    f"({k0}, {a0}) and ({ch.k}, {ch.alpha})"
                )

    @property
    def k(self):
        return self.inner[0].k

    @property
    def alpha(self):
        return self.inner[0].alpha

    @property
    def symmetric(self):
        return all(ch.symmetric for ch in self.inner)

    def children(self):
        return self.inner


@dataclass(frozen=True)
class Sum(_Combinator):
    kind = "Sum"

    def evaluate(self, x):
        return reduce(np.add, (ch.evaluate(x) for ch in self.inner))

    def unperturbed(self):
        return Sum(tuple(ch.unperturbed() for ch in self.inner))

    def sum_profile(self):
        parts = [ch.sum_profile() for ch in self.inner]
        if any(p is None for p in parts):
            return None
        return tuple(t for p in parts for t in p)


def _single_term_profiles(kernels):
    parts = [ch.sum_profile() for ch in kernels]
    if any(p is None or len(p) != 1 for p in parts):
        return None
    if len({p[0][1] for p in parts}) != 1 or min(p[0][0] for p in parts) <= 0:
        return None
    return [p[0] for p in parts]


@dataclass(frozen=True)
class Max(_Combinator):
    kind = "Max"

    def evaluate(self, x):
        return reduce(np.maximum, (ch.evaluate(x) for ch in self.inner))

    def unperturbed(self):
        return Max(tuple(ch.unperturbed() for ch in self.inner))

    def sum_profile(self):
        terms = _single_term_profiles(self.inner)
        if terms is None:
            return None
        return ((max(c for c, _ in terms), terms[0][1]),)


@dataclass(frozen=True)
class Min(_Combinator):
    kind = "Min"

    def evaluate(self, x):
        return reduce(np.minimum, (ch.evaluate(x) for ch in self.inner))

    def unperturbed(self):
        return Min(tuple(ch.unperturbed() for ch in self.inner))

    def sum_profile(self):
        terms = _single_term_profiles(self.inner)
        if terms is None:
            return None
        return ((min(c for c, _ in terms), terms[0][1]),)


@dataclass(frozen=True)
class Perturbed(Kernel):
    """``g(i) * L(i)`` with ``L(i) = 1 + c * ||i||_1 ** (-delta)``.

    ``L`` is bounded on the lattice and tends to one along rays, so the
    coefficient stays asymptotically homogeneous.  ``c = 0`` gives ``L = 1``.
    """

    inner: Kernel
    c: float = 0.0
    delta: float = 1.0
    kind = "Perturbed"

    def __post_init__(self):
        if self.delta <= 0:
            raise ArgumentError("perturbation exponent delta must be > 0")
        if isinstance(self.inner, Perturbed):
            raise ArgumentError("nested perturbations are not supported")

    @property
    def k(self):
        return self.inner.k

    @property
    def alpha(self):
        return self.inner.alpha

    @property
    def symmetric(self):
        return self.inner.symmetric

    def factor(self, x):
        return 1.0 + self.c * np.power(x.sum(axis=-1), -self.delta)

    def evaluate(self, x):
        return self.inner.evaluate(x) * self.factor(x)

    def unperturbed(self):
        return self.inner

    def sum_profile(self):
        p = self.inner.sum_profile()
        if p is None:
            return None
        return tuple(p) + tuple((self.c * c, e - self.delta) for c, e in p if self.c != 0)

    def params(self):
        return {"c": float(self.c), "delta": float(self.delta)}

    def children(self):
        return (self.inner,)


@dataclass(frozen=True)
class Symmetrized(Kernel):
    """Average of ``inner`` over all permutations of its arguments."""

    inner: Kernel
    kind = "Symmetrized"
    _perms: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.inner.k > MAX_SYMMETRIZE_ARITY:
            raise ArgumentError(
                f"explicit symmetrization limited to k <= {MAX_SYMMETRIZE_ARITY}"
            )
        object.__setattr__(
            self, "_perms", tuple(itertools.permutations(range(self.inner.k)))
        )

    @property
    def k(self):
        return self.inner.k

    @property
    def alpha(self):
        return self.inner.alpha

    @property
    def symmetric(self):
        return True

    def evaluate(self, x):
        acc = sum(self.inner.evaluate(x[..., list(p)]) for p in self._perms)
        return acc / len(self._perms)

    def unperturbed(self):
        return Symmetrized(self.inner.unperturbed())

    def sum_profile(self):
        return self.inner.sum_profile()

    def children(self):
        return (self.inner,)


def symmetrize(kernel: Kernel) -> Kernel:
    """Return ``kernel`` itself when already symmetric, else a lazy average."""
    if kernel.symmetric:
        return kernel
    return Symmetrized(kernel)


# --------------------------------------------------------------------------
# evaluation and validation
# --------------------------------------------------------------------------


def eval_kernel(kernel: Kernel, x) -> float | np.ndarray:
    """Evaluate ``kernel`` at one point ``(k,)`` or a batch ``(n, k)``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != kernel.k:
        raise ArgumentError(
            f"expected points of dimension {kernel.k}, got shape {arr.shape}"
        )
    if not np.all(arr > 0):
        raise DomainError("kernel arguments must be strictly positive")
    if _contains_perturbation(kernel) and not np.all(arr == np.round(arr)):
        raise DomainError("perturbed kernels are defined on lattice points only")
    out = kernel.evaluate(arr)
    return float(out) if arr.ndim == 1 else out


def _contains_perturbation(kernel: Kernel) -> bool:
    if isinstance(kernel, Perturbed):
        return kernel.c != 0
    return any(_contains_perturbation(ch) for ch in kernel.children())


@dataclass
class ValidationReport:
    valid: bool
    k: int
    alpha: float
    alpha_in_range: bool
    bound_constant: float
    bound_stable: bool
    homogeneity_max_rel_err: float
    homogeneous: bool
    nonzero: bool
    perturbation_ok: bool = True
    failures: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def simplex_grid(k: int, n: int) -> np.ndarray:
    """Interior lattice points of the unit simplex ``{x > 0, sum x = 1}``.

    All compositions of ``n`` into ``k`` positive parts, divided by ``n``.
    """
    if k == 1:
        return np.ones((1, 1))
    cuts = np.array(list(itertools.combinations(range(1, n), k - 1)), dtype=float)
    edges = np.hstack([np.zeros((len(cuts), 1)), cuts, np.full((len(cuts), 1), n)])
    return np.diff(edges, axis=1) / n


def _simplex_resolution(k: int, points_per_pair: int) -> int:
    if k == 1:
        return 1
    target = points_per_pair * max(1, math.comb(k, 2))
    n = k
    while math.comb(n - 1, k - 1) < target:
        n += 1
    return n


def validate_ghkb(
    kernel: Kernel,
    points_per_pair: int = 10_000,
    n_homogeneity: int = 200,
    seed: int = 0,
    homogeneity_rtol: float = 1e-10,
    stability_ratio: float = 1.05,
) -> ValidationReport:
    """Check the Class (B) conditions numerically.

    Never raises on a mathematically invalid kernel; the report lists which
    condition failed.  The bound constant is the maximum of ``|g|`` over an
    interior simplex lattice (where ``||x||_1 = 1``); it is declared stable
    when quadrupling the lattice spacing changes it by less than
    ``stability_ratio``.
    """
    k, alpha = kernel.k, kernel.alpha
    failures: list[str] = []
    lo, hi = ghk_alpha_range(k)
    in_range = lo < alpha < hi
    if not in_range:
        failures.append(f"alpha={alpha:g} not in ({lo:g}, {hi:g})")

    g = kernel.unperturbed()
    n_fine = _simplex_resolution(k, points_per_pair)
    fine = simplex_grid(k, n_fine)
    with np.errstate(all="ignore"):
        vals = np.abs(g.evaluate(fine))
        coarse_n = max(k, n_fine // 4)
        coarse_vals = np.abs(g.evaluate(simplex_grid(k, coarse_n)))
    finite = bool(np.all(np.isfinite(vals)))
    C = float(np.max(vals)) if finite else math.inf
    C_coarse = float(np.max(coarse_vals)) if np.all(np.isfinite(coarse_vals)) else math.inf
    nonzero = C > 0
    if not nonzero:
        failures.append("kernel vanishes on the simplex grid")
    if k == 1:
        stable = finite
    else:
        stable = finite and C_coarse > 0 and C <= stability_ratio * C_coarse
    if not stable:
        failures.append(
            f"bound |g| <= C||x||^alpha not stable on the simplex (C={C:g} vs "
            f"coarse {C_coarse:g})"
        )

    rng = np.random.default_rng(seed)
    x = rng.uniform(0.01, 10.0, size=(n_homogeneity, k))
    lam = np.exp(rng.uniform(math.log(0.01), math.log(100.0), size=n_homogeneity))
    with np.errstate(all="ignore"):
        lhs = g.evaluate(lam[:, None] * x)
        rhs = lam**alpha * g.evaluate(x)
        rel = np.abs(lhs - rhs) / np.maximum(np.abs(rhs), np.finfo(float).tiny)
    max_rel = float(np.max(rel)) if np.all(np.isfinite(rel)) else math.inf
    homogeneous = max_rel <= homogeneity_rtol
    if not homogeneous:
        failures.append(f"homogeneity violated (max rel err {max_rel:.3g})")

    pert_ok = True
    if isinstance(kernel, Perturbed):
        pert_ok = kernel.delta > 0 and math.isfinite(kernel.c)
        if not pert_ok:
            failures.append("perturbation factor outside the supported family")

    return ValidationReport(
        valid=not failures,
        k=k,
        alpha=alpha,
        alpha_in_range=in_range,
        bound_constant=C,
        bound_stable=stable,
        homogeneity_max_rel_err=max_rel,
        homogeneous=homogeneous,
        nonzero=nonzero,
        perturbation_ok=pert_ok,
        failures=failures,
    )


# --------------------------------------------------------------------------
# JSON form: {kind, k, alpha, params, children}
# --------------------------------------------------------------------------

_COMBINATORS = {"Sum": Sum, "Max": Max, "Min": Min}


def kernel_to_dict(kernel: Kernel) -> dict:
    return {
        "kind": kernel.kind,
        "k": kernel.k,
        "alpha": kernel.alpha,
        "params": kernel.params(),
        "children": [kernel_to_dict(ch) for ch in kernel.children()],
    }


def kernel_from_dict(doc: dict) -> Kernel:
    try:
        kind = doc["kind"]
        params = doc.get("params", {}) or {}
        children = [kernel_from_dict(ch) for ch in doc.get("children", [])]
        if kind == "PowerSum":
            kern = PowerSum(int(doc["k"]), float(doc["alpha"]))
        elif kind == "ProductPower":
            kern = ProductPower(tuple(params["gammas"]))
        elif kind == "RatioForm":
            kern = RatioForm(tuple(params["a"]), float(params["b"]))
        elif kind == "Scale":
            (child,) = children
            kern = Scale(float(params["c"]), child)
        elif kind in _COMBINATORS:
            kern = _COMBINATORS[kind](tuple(children))
        elif kind == "Perturbed":
            (child,) = children
            kern = Perturbed(child, float(params.get("c", 0.0)), float(params.get("delta", 1.0)))
        elif kind == "Symmetrized":
            (child,) = children
            kern = Symmetrized(child)
        else:
            raise ArgumentError(f"unknown kernel kind {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ArgumentError):
            raise
        raise ArgumentError(f"malformed kernel document: {exc}") from exc
    if "k" in doc and int(doc["k"]) != kern.k:
        raise ArgumentError(f"declared k={doc['k']} but structure has k={kern.k}")
    if "alpha" in doc and not _same_alpha(float(doc["alpha"]), kern.alpha):
        raise ArgumentError(
            f"declared alpha={doc['alpha']} but structure gives {kern.alpha}"
        )
    return kern


def dumps_kernel(kernel: Kernel) -> str:
    """Canonical JSON text (sorted keys, compact separators)."""
    return json.dumps(kernel_to_dict(kernel), sort_keys=True, separators=(",", ":"))


def loads_kernel(text: str, validate_schema: bool = True) -> Kernel:
    doc = json.loads(text)
    if validate_schema:
        from .schemas import validate_kernel_document

        validate_kernel_document(doc)
    return kernel_from_dict(doc)


def as_points(x: Sequence[float] | np.ndarray, k: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != k:
        raise ArgumentError(f"expected dimension {k}, got {arr.shape}")
    return arr
