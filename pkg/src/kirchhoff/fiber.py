"""The scaling fiber t -> I(u_t), u_t(x) = t u(x/t), and projection onto M.

Along the fiber the four ingredients of the energy scale as t^3, t^5, t^6
and t^{p+4}, so for a constant potential

    gamma(t) = c1 t^3 + c2 t^5 + c3 t^6 - c4 t^{p+4}

with c1 = grad/2, c2 = mass/2, c3 = kirch/4, c4 = lam*pow/(p+1).  For
p > 2 and nonnegative c1..c3 (not all zero) gamma'(t)/t^2 is positive
near 0 and strictly decreasing once it turns negative, so there is
exactly one critical point and it is the maximum.  t*gamma'(t) equals
the constraint G evaluated on u_t, hence the maximizer is the unique
scale putting u on the manifold.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import functional as F
from .errors import DegenerateFiberError, FlatFiberError, InvalidExponentError, TrivialFunctionError
from .functional import EnergyBreakdown, PotentialSpec, ProblemParams
from .radial import RadialFunction, rescale

log = logging.getLogger(__name__)

AUDIT_POINTS = 64
_POW_FLOOR = 1e-300


@dataclass(frozen=True)
class FiberPolynomial:
    c1: float
    c2: float
    c3: float
    c4: float
    p: float

    def gamma(self, t):
        t = np.asarray(t, dtype=float)
        return self.c1 * t**3 + self.c2 * t**5 + self.c3 * t**6 - self.c4 * t ** (self.p + 4)

    def dgamma(self, t):
        t = np.asarray(t, dtype=float)
        return t**2 * self.reduced_slope(t)

    def reduced_slope(self, t):
        """gamma'(t) / t^2, which has the same sign as gamma' for t > 0."""
        t = np.asarray(t, dtype=float)
        p = self.p
        return 3 * self.c1 + 5 * self.c2 * t**2 + 6 * self.c3 * t**3 - (p + 4) * self.c4 * t ** (p + 1)

    def scaled(self, s: float) -> "FiberPolynomial":
        return FiberPolynomial(s * self.c1, s * self.c2, s * self.c3, s * self.c4, self.p)


class FiberMax(NamedTuple):
    t_star: float
    value: float


class GeneralFiberMax(NamedTuple):
    t_star: float
    value: float
    local_maxima: int


class Projection(NamedTuple):
    """Result of moving a profile onto the manifold along its fiber.

    ``t_star`` is the scale realized on the grid (G of ``profile`` is zero
    to round-off); ``scalar_t_star`` and ``scalar_breakdown`` are the exact
    closed-form projection in breakdown space.
    """

    t_star: float
    profile: RadialFunction
    scalar_t_star: float
    scalar_breakdown: EnergyBreakdown | None


def fiber_poly(bd: EnergyBreakdown, params: ProblemParams) -> FiberPolynomial:
    params.require_manifold_range()
    if bd.pow_q <= _POW_FLOOR:
        raise TrivialFunctionError("profile has vanishing L^{p+1} norm")
    if bd.dv_q != 0.0:
        raise ValueError("the closed-form fiber needs a constant potential")
    return FiberPolynomial(
        c1=bd.grad_q / 2,
        c2=bd.mass_q / 2,
        c3=bd.kirch_q / 4,
        c4=params.lam * bd.pow_q / (params.p + 1),
        p=params.p,
    )


def scale_breakdown(bd: EnergyBreakdown, t: float, p: float) -> EnergyBreakdown:
    """Breakdown of u_t computed from that of u by the exact scaling laws."""
    t3, t5 = t**3, t**5
    return EnergyBreakdown(
        dirichlet=bd.dirichlet * t3,
        grad_q=bd.grad_q * t3,
        mass_q=bd.mass_q * t5,
        dv_q=bd.dv_q * t5,
        kirch_q=bd.kirch_q * t**6,
        pow_q=bd.pow_q * t ** (p + 4),
    )


def fiber_max(fp: FiberPolynomial, rtol: float = 1e-12, audit: bool = True) -> FiberMax:
    """Unique maximizer of gamma on (0, inf), by doubling to a bracket and Brent's method.

    With ``audit`` the sign pattern of gamma' is checked on a log grid
    around the root; callers that verify uniqueness themselves may skip it.
    """
    if not 2 < fp.p < 5:
        raise InvalidExponentError(f"need 2 < p < 5, got {fp.p}")
    if fp.c1 < 0 or fp.c2 < 0 or fp.c3 < 0:
        raise DegenerateFiberError("fiber coefficients c1..c3 must be nonnegative")
    if fp.c1 == 0 and fp.c2 == 0 and fp.c3 == 0:
        raise DegenerateFiberError("c1 = c2 = c3 = 0: gamma has no positive part")
    if not fp.c4 > 0:
        raise DegenerateFiberError("c4 must be positive for gamma to turn down")

    c1, c2, c3, c4, p = float(fp.c1), float(fp.c2), float(fp.c3), float(fp.c4), float(fp.p)

    def s(t):
        # scalar version of reduced_slope; numpy overhead dominates otherwise
        return 3 * c1 + 5 * c2 * t * t + 6 * c3 * t**3 - (p + 4) * c4 * t ** (p + 1)

    try:
        if s(1.0) >= 0:
            hi = 2.0
            while s(hi) >= 0:
                hi *= 2.0
            lo = hi / 2.0
        else:
            lo = 0.5
            while s(lo) < 0:
                lo *= 0.5
            hi = 2.0 * lo
        t_star = brentq(s, lo, hi, xtol=rtol * lo, rtol=max(rtol, 4 * np.finfo(float).eps))
        if audit:
            _audit_unique(fp, t_star)
        value = c1 * t_star**3 + c2 * t_star**5 + c3 * t_star**6 - c4 * t_star ** (p + 4)
    except OverflowError as exc:
        raise DegenerateFiberError("fiber maximum lies outside double-precision range") from exc
    return FiberMax(t_star, value)


_AUDIT = np.geomspace(1e-3, 1e3, AUDIT_POINTS)
_AUDIT = _AUDIT[np.abs(_AUDIT - 1) > 1e-6]
_AUDIT_BELOW = _AUDIT < 1


def _audit_unique(fp: FiberPolynomial, t_star: float) -> None:
    """gamma' > 0 below t_star and < 0 above it on a log grid of t_star*[1e-3, 1e3]."""
    sl = fp.reduced_slope(t_star * _AUDIT)
    if not (np.all(sl[_AUDIT_BELOW] > 0) and np.all(sl[~_AUDIT_BELOW] < 0)):
        raise DegenerateFiberError(f"gamma' changes sign more than once near t={t_star:g}")


def count_sign_changes(fp: FiberPolynomial, t_hi: float, points: int = 4096) -> int:
    """Number of sign changes of gamma' on a log grid over (0, t_hi]."""
    ts = np.geomspace(t_hi * 1e-8, t_hi, points)
    sg = np.sign(fp.reduced_slope(ts))
    sg = sg[sg != 0]
    return int(np.count_nonzero(sg[1:] != sg[:-1]))


def _grid_constraint(u: RadialFunction, params: ProblemParams, V: PotentialSpec):
    def g(t):
        return F.constraint_G(F.breakdown(rescale(u, t), params, V), params)

    return g


def _refine_on_grid(u, params, V, t0: float) -> float:
    """Root of t -> G(rescale(u, t)) near the scalar estimate t0."""
    g = _grid_constraint(u, params, V)
    g0 = g(t0)
    if g0 == 0.0:
        return t0
    width = 0.02
    for _ in range(40):
        lo, hi = t0 / (1 + width), t0 * (1 + width)
        glo, ghi = g(lo), g(hi)
        if glo > 0 > ghi:
            return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        width *= 2
    raise FlatFiberError(f"no sign change of G along the discrete fiber around t={t0:g}")


def project_to_M(u: RadialFunction, params: ProblemParams, V: PotentialSpec) -> Projection:
    """Rescale ``u`` onto the manifold for a constant potential."""
    if not V.is_constant:
        raise ValueError("project_to_M needs a constant potential; use project()")
    bd = F.breakdown(u, params, V)
    t0, _ = fiber_max(fiber_poly(bd, params))
    scalar_bd = scale_breakdown(bd, t0, params.p)
    t = _refine_on_grid(u, params, V, t0)
    return Projection(t, rescale(u, t), t0, scalar_bd)


def project(u: RadialFunction, params: ProblemParams, V: PotentialSpec) -> Projection:
    """Projection onto {G = 0} for any potential."""
    if V.is_constant:
        return project_to_M(u, params, V)
    params.require_manifold_range()
    t0 = fiber_max_general(u, params, V).t_star
    t = _refine_on_grid(u, params, V, t0)
    return Projection(t, rescale(u, t), t0, None)


def _golden_max(f, lo: float, hi: float, tol: float) -> float:
    inv = (math.sqrt(5) - 1) / 2
    x1 = hi - inv * (hi - lo)
    x2 = lo + inv * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv * (hi - lo)
            f2 = f(x2)
    return 0.5 * (lo + hi)


def fiber_max_general(
    u: RadialFunction, params: ProblemParams, V: PotentialSpec, tol: float = 1e-8
) -> GeneralFiberMax:
    """Maximize t -> I(rescale(u, t)) numerically, for any potential.

    The bracket is found by doubling t until the energy has decreased on
    three consecutive doublings, or until the stretched profile would no
    longer fit on the grid; the maximum is then refined by golden section.  The number of local maxima seen on a 64-point audit grid is
    returned so that non-unimodal fibers are reported, not hidden.
    """
    bd = F.breakdown(u, params, V)
    if bd.pow_q <= _POW_FLOOR:
        raise TrivialFunctionError("profile has vanishing L^{p+1} norm")

    def f(t):
        return F.energy_I(F.breakdown(rescale(u, t), params, V), params)

    # beyond t_dom the stretched profile is cut off by the Dirichlet node at
    # r_max and the discrete energy no longer follows the continuum fiber
    t_dom = _domain_scale(u)
    ts = [2.0**k for k in range(-4, 1)]
    vals = [f(t) for t in ts]
    drops = 0
    while drops < 3 and ts[-1] * 2 <= t_dom:
        if len(ts) > 64:
            raise FlatFiberError("energy along the fiber never turned down")
        ts.append(ts[-1] * 2)
        vals.append(f(ts[-1]))
        drops = drops + 1 if vals[-1] < vals[-2] else 0
    if drops == 0:
        raise FlatFiberError("energy along the fiber never turned down inside the grid")
    k = int(np.argmax(vals))
    if k == 0 or vals[k] <= 0:
        raise FlatFiberError("no interior maximum of the energy along the fiber")
    lo, hi = ts[k - 1], ts[k + 1]
    t_star = _golden_max(f, lo, hi, tol)

    audit = np.geomspace(ts[0], ts[-1], AUDIT_POINTS)
    av = np.array([f(t) for t in audit])
    interior = (av[1:-1] > av[:-2]) & (av[1:-1] >= av[2:])
    n_max = int(np.count_nonzero(interior))
    if n_max > 1:
        log.warning("fiber of %s has %d local maxima", V.label or V.kind, n_max)
    return GeneralFiberMax(t_star, f(t_star), max(n_max, 1))


def _domain_scale(u: RadialFunction, rel: float = 1e-8) -> float:
    """Largest t for which rescale(u, t) keeps the resolved part of u inside the grid."""
    v = np.abs(u.values)
    idx = np.nonzero(v > rel * v.max())[0]
    r_supp = u.grid.nodes[idx[-1] + 1] if idx.size and idx[-1] + 1 < u.grid.n else u.grid.r_max
    return u.grid.r_max / r_supp


def fiber_curve(fp: FiberPolynomial, ts) -> np.ndarray:
    return fp.gamma(np.asarray(ts, dtype=float))
