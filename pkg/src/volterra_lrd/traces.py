"""Pairing traces of kernels, the time-integrated kernel h_t, and its L2 norm.

Improper integrals over ``(0, inf)`` use the map ``u = y / (1 + y)`` onto
``(0, 1)``; the integrable power singularities sit at interval endpoints,
where QUADPACK's extrapolation handles them.  Kernels whose value depends
only on ``x_1 + ... + x_k`` (power sums and their closures) get closed
forms for both the trace and ``h_t``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from .errors import ArgumentError, DomainError, NumericError
from .kernels import Kernel, symmetrize, validate_ghkb

__all__ = [
    "QuadratureConfig",
    "TraceKernel",
    "trace_kernel",
    "eval_h_t",
    "h_t_grid",
    "l2_norm_h_t",
    "L2Norm",
]


@dataclass(frozen=True)
class QuadratureConfig:
    """Nested adaptive (QAGS) quadrature settings.

    ``domain_cutoff=None`` integrates the half-line exactly through the
    ``u = y/(1+y)`` map; a finite value truncates at ``y = domain_cutoff``.
    """

    scheme: str = "nested-qags"
    abs_tol: float = 1e-13
    rel_tol: float = 1e-9
    max_subdivisions: int = 200
    domain_cutoff: float | None = None
    qmc_points: int = 2**14
    qmc_replicates: int = 8
    seed: int = 20140

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ArgumentError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ArgumentError("max_subdivisions must be >= 1")

    @property
    def u_upper(self) -> float:
        if self.domain_cutoff is None:
            return 1.0
        return self.domain_cutoff / (1.0 + self.domain_cutoff)


DEFAULT_QUAD = QuadratureConfig()


def _quad(f, a, b, quad: QuadratureConfig, what: str):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info = integrate.quad(
            f,
            a,
            b,
            epsabs=quad.abs_tol,
            epsrel=quad.rel_tol,
            limit=quad.max_subdivisions,
            full_output=1,
        )[:3]
    if not math.isfinite(val):
        raise NumericError(f"{what}: non-finite quadrature value", val, err)
    # accept the QUADPACK result unless the error estimate is far off target
    target = max(quad.abs_tol, quad.rel_tol * abs(val))
    if err > 1e3 * target and err > 1e-6 * max(abs(val), 1e-300):
        raise NumericError(
            f"{what}: quadrature did not converge (estimate {val:.6g}, error {err:.3g})",
            val,
            err,
        )
    return val, err


def _half_line(
    f, quad: QuadratureConfig, what: str, split: float | None = None, scale: float = 1.0
):
    """Integrate ``f`` over ``(0, inf)`` (or ``(0, cutoff)``).

    ``y = scale * u / (1 - u)``; ``scale`` should match the length over
    which ``f`` changes, else the mass collapses into a sliver near ``u = 1``.
    """

    def g(u):
        y = scale * u / (1.0 - u)
        return scale * f(y) / (1.0 - u) ** 2

    top = quad.u_upper
    if quad.domain_cutoff is not None:
        c = quad.domain_cutoff / scale
        top = c / (1.0 + c)
    if split is not None and split > 0:
        us = (split / scale) / (1.0 + split / scale)
        if us < top:
            a, ea = _quad(g, 0.0, us, quad, what)
            b, eb = _quad(g, us, top, quad, what)
            return a + b, ea + eb
    return _quad(g, 0.0, top, quad, what)


def _profile_trace(profile, r):
    """Iterate ``int_0^inf (S + 2y)^e dy = -S^(e+1) / (2(e+1))`` ``r`` times."""
    out = []
    for c, e in profile:
        coef = c
        for q in range(1, r + 1):
            if e + q >= 0:
                return None
            coef *= -1.0 / (2.0 * (e + q))
        out.append((coef, e + r))
    return tuple(out)


class TraceKernel(Kernel):
    """``g_r(x) = int_{R_+^r} g(y1, y1, ..., yr, yr, x) dy`` of arity ``k - 2r``.

    A GHK with exponent ``alpha + r`` and the same Hurst index as ``g``.
    """

    kind = "Trace"

    def __init__(self, base: Kernel, r: int, quad: QuadratureConfig = DEFAULT_QUAD):
        if r < 0:
            raise ArgumentError("pairing count r must be >= 0")
        if 2 * r >= base.k:
            raise ArgumentError(
                f"2r={2 * r} >= k={base.k}: no free variables left after pairing"
            )
        self.base = base
        self.r = int(r)
        self.quad = quad
        g = base.unperturbed()
        self._g = g
        prof = g.sum_profile()
        self._profile = None if prof is None else _profile_trace(prof, self.r)

    def __repr__(self):
        return f"TraceKernel({self.base!r}, r={self.r})"

    @property
    def k(self):
        return self.base.k - 2 * self.r

    @property
    def alpha(self):
        return self.base.alpha + self.r

    @property
    def symmetric(self):
        return self.base.symmetric

    @property
    def analytic(self) -> bool:
        return self._profile is not None

    def sum_profile(self):
        return self._profile

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if self.r == 0:
            return self._g.evaluate(x)
        if self._profile is not None:
            s = x.sum(axis=-1)
            return sum(c * np.power(s, e) for c, e in self._profile)
        flat = x.reshape(-1, self.k)
        out = np.array([self._numeric(row) for row in flat])
        return out.reshape(x.shape[:-1])

    def numeric(self, x) -> float:
        """Quadrature value at a single point, ignoring any closed form."""
        return self._numeric(np.asarray(x, dtype=float))

    def _numeric(self, x):
        g, r, quad = self._g, self.r, self.quad

        def point(ys):
            z = np.empty(2 * r + len(x))
            z[0 : 2 * r : 2] = ys
            z[1 : 2 * r : 2] = ys
            z[2 * r :] = x
            return float(g.evaluate(z))

        base = float(np.sum(np.abs(x)))

        def nested(fixed):
            if len(fixed) == r:
                return point(fixed)
            # the integrand varies on the scale of the l1 mass accumulated so far
            scale = max(base + 2.0 * sum(fixed), 1e-300)
            return _half_line(lambda y: nested(fixed + [y]), quad, "trace", scale=scale)[0]

        return nested([])


def trace_kernel(
    kernel: Kernel, r: int, quad: QuadratureConfig = DEFAULT_QUAD, check: bool = True
) -> TraceKernel:
    if 2 * r >= kernel.k:
        raise ArgumentError(
            f"2r={2 * r} >= k={kernel.k}: no free variables left after pairing"
        )
    if check:
        rep = validate_ghkb(kernel.unperturbed())
        if not rep.valid:
            raise ArgumentError("kernel is not GHK(B): " + "; ".join(rep.failures))
    return TraceKernel(kernel, r, quad)


# --------------------------------------------------------------------------
# h_t(y) = int_0^t g(s1 - y) 1{s1 > y} ds
# --------------------------------------------------------------------------


def _offsets(t, y):
    """``(w, o)`` with ``w = t - s0``, ``o_j = s0 - y_j``, ``s0 = max(0, max y)``.

    ``h_t(y) = int_0^w g(sigma + o) d sigma`` whenever ``w > 0``.
    """
    y = np.asarray(y, dtype=float)
    s0 = np.maximum(0.0, y.max(axis=-1))
    return t - s0, s0[..., None] - y


def _h_profile_offsets(profile, d, w, o):
    """Closed form ``sum c [(d w + B)^p - B^p] / (d p)``, ``B = sum o``, ``p = e + 1``.

    The difference is formed as ``B^p expm1(p log1p(d w / B))`` so that it
    keeps full relative accuracy when ``d w`` is small against ``B``.
    """
    w = np.asarray(w, dtype=float)
    B = np.asarray(o, dtype=float).sum(axis=-1)
    live = w > 0
    gap = d * np.where(live, w, 0.0)
    out = np.zeros(np.shape(B))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.log1p(gap / B)
        for c, e in profile:
            p = e + 1.0
            if p == 0:
                term = c * ratio / d
            else:
                stable = np.power(B, p) * np.expm1(p * ratio)
                naive = np.power(B + gap, p) - np.power(B, p)
                term = c * np.where(B > 0, stable, naive) / (d * p)
            out = out + np.where(live, term, 0.0)
    return out


def _h_offsets(g: Kernel, w: float, o, quad: QuadratureConfig) -> float:
    """``int_0^w g(sigma + o) d sigma`` for one point."""
    if w <= 0:
        return 0.0
    prof = g.sum_profile()
    if prof is not None:
        return float(_h_profile_offsets(prof, g.k, w, o))
    o = np.asarray(o, dtype=float)

    def f(sig):
        return float(g.evaluate(sig + o))

    val, _ = _quad(f, 0.0, w, quad, "h_t")
    return val


def _h_profile(profile, d, t, y):
    w, o = _offsets(t, y)
    return _h_profile_offsets(profile, d, w, o)


def eval_h_t(
    kernel: Kernel,
    t: float,
    y,
    quad: QuadratureConfig = DEFAULT_QUAD,
    closed_form: bool = True,
) -> float:
    """Time-integrated kernel at one point ``y`` of dimension ``kernel.k``."""
    if t <= 0:
        if t == 0:
            return 0.0
        raise DomainError("t must be >= 0")
    y = np.asarray(y, dtype=float)
    if y.shape != (kernel.k,):
        raise ArgumentError(f"y must have shape ({kernel.k},), got {y.shape}")
    w, o = _offsets(t, y)
    if w <= 0:
        return 0.0
    g = kernel.unperturbed()
    if closed_form:
        return _h_offsets(g, float(w), o, quad)

    def f(sig):
        return float(g.evaluate(sig + o))

    val, _ = _quad(f, 0.0, float(w), quad, "h_t")
    return val


def h_t_grid(kernel: Kernel, t: float, points, quad: QuadratureConfig = DEFAULT_QUAD):
    """Vectorised ``h_t`` over ``points`` of shape ``(..., d)``."""
    pts = np.asarray(points, dtype=float)
    if t <= 0:
        return np.zeros(pts.shape[:-1])
    g = kernel.unperturbed()
    prof = g.sum_profile()
    if prof is not None:
        return _h_profile(prof, kernel.k, t, pts)
    flat = pts.reshape(-1, kernel.k)
    out = np.array([eval_h_t(g, t, row, quad) for row in flat])
    return out.reshape(pts.shape[:-1])


# --------------------------------------------------------------------------
# ||h~_t||^2 over R^d
# --------------------------------------------------------------------------


@dataclass
class L2Norm:
    value: float
    error: float
    method: str
    details: dict = field(default_factory=dict)


def l2_norm_h_t(
    kernel: Kernel, t: float, quad: QuadratureConfig = DEFAULT_QUAD
) -> L2Norm:
    """Squared L2 norm of the symmetrized ``h_t``.

    Dimension 1 and 2 use nested adaptive quadrature; dimension >= 3 uses
    scrambled Sobol points with a replicate standard error.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    if t == 0:
        return L2Norm(0.0, 0.0, "trivial")
    g = symmetrize(kernel.unperturbed())
    d = g.k
    if d == 1:
        return _l2_dim1(g, t, quad)
    if d == 2:
        return _l2_dim2(g, t, quad)
    return _l2_qmc(g, t, quad)


def _from_depth(t, w, spread):
    """Offsets for ``y = (t - w) - spread`` without forming ``y``.

    ``w = t - max(y)`` and ``spread_j = max(y) - y_j >= 0``.
    """
    spread = np.asarray(spread, dtype=float)
    if w < t:
        return w, spread
    return t, spread + (w - t)


def _l2_dim1(g, t, quad):
    def f(w):
        W, o = _from_depth(t, w, [0.0])
        return _h_offsets(g, W, o, quad) ** 2

    val, err = _half_line(f, quad, "l2 norm", split=t, scale=t)
    return L2Norm(val, err, "quad-1d")


def _l2_dim2(g, t, quad):
    """Coordinates ``w = t - max(y)`` and ``v = |y1 - y2|``; h~ is symmetric."""

    def inner(w):
        def f(v):
            W, o = _from_depth(t, w, [0.0, v])
            return _h_offsets(g, W, o, quad) ** 2

        val, _ = _half_line(f, quad, "l2 norm (inner)", scale=max(w, 1e-300))
        return val

    val, err = _half_line(inner, quad, "l2 norm (outer)", split=t, scale=t)
    return L2Norm(2.0 * val, 2.0 * err, "quad-2d")


def _l2_qmc(g, t, quad):
    """``y = t - w`` with ``w`` on ``(0, inf)^d`` through ``w = z / (1 - z)``."""
    d = g.k
    prof = g.sum_profile()
    reps = []
    for rep in range(quad.qmc_replicates):
        sob = qmc.Sobol(d, scramble=True, seed=quad.seed + rep)
        z = sob.random(quad.qmc_points)
        z = np.clip(z, 1e-15, 1 - 1e-15)
        w = z / (1.0 - z)
        jac = np.prod(1.0 / (1.0 - z) ** 2, axis=1)
        wmin = w.min(axis=1)
        W = np.minimum(wmin, t)
        o = w - W[:, None]
        if prof is not None:
            h = _h_profile_offsets(prof, d, W, o)
        else:
            h = np.array([_h_offsets(g, Wi, oi, quad) for Wi, oi in zip(W, o)])
        with np.errstate(invalid="ignore"):
            vals = np.where(np.isfinite(h), h * h * jac, 0.0)
        reps.append(vals.mean())
    reps = np.asarray(reps)
    se = float(reps.std(ddof=1) / math.sqrt(len(reps)))
    return L2Norm(float(reps.mean()), se, "rqmc-sobol", {"replicates": reps.tolist()})
