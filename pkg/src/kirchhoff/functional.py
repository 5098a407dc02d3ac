"""Energy functionals, constraints and potentials.

Everything here is expressed through an :class:`EnergyBreakdown`, the six
scalar integrals from which the energy, the Nehari-Pohozaev constraint,
the Pohozaev functional and the auxiliary functional are linear
combinations:

    I   = grad/2 + mass/2 + kirch/4 - lam*pow/(p+1)
    G   = 3/2 grad + 5/2 mass + dv/2 + 3/2 kirch - lam*(p+4)/(p+1) pow
    P   = grad/2 + 3/2 mass + dv/2 + kirch/2 - 3 lam/(p+1) pow
    Phi = grad/4 + (mass - dv)/12 + lam*(p-2)/(6(p+1)) pow

with grad = a*int|Du|^2, mass = int V u^2, dv = int r V'(r) u^2,
kirch = b*(int|Du|^2)^2 and pow = int |u|^{p+1}.  G is t*d/dt I(u_t) at
t = 1, so that G = <I'(u), u> + P and I = Phi + G/6 hold for every
profile and every potential.  For constant V the dv term vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solveh_banded

from . import radial
from .errors import (
    ConvergenceError,
    IncompleteSpecError,
    InvalidExponentError,
    OutOfHypothesisError,
    ShapeError,
)
from .radial import RadialFunction, RadialGrid


@dataclass(frozen=True)
class ProblemParams:
    a: float = 1.0
    b: float = 1.0
    p: float = 3.0
    lam: float = 1.0
    delta: float = 0.5

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"a and b must be positive, got a={self.a}, b={self.b}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.delta <= self.lam <= 1:
            raise ValueError(f"lambda must lie in [delta, 1] = [{self.delta}, 1], got {self.lam}")

    def require_manifold_range(self) -> None:
        if not 2 < self.p < 5:
            raise InvalidExponentError(f"manifold operations need 2 < p < 5, got p={self.p}")

    def with_lambda(self, lam: float) -> "ProblemParams":
        return ProblemParams(self.a, self.b, self.p, lam, min(self.delta, lam))


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A radial potential V(r) with its asymptotic value ``v_inf``.

    ``kind == "constant"`` means V is ``v_inf`` everywhere.  A radial
    potential carries samples of V and of r*V'(r) on its own abscissae
    ``r``; they are linearly interpolated onto any grid, and extended by
    ``v_inf`` and 0 beyond the last sample.
    """

    kind: str
    v_inf: float
    r: np.ndarray | None = field(default=None, repr=False)
    profile: np.ndarray | None = field(default=None, repr=False)
    dv_profile: np.ndarray | None = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.kind == "constant":
            if self.profile is not None or self.dv_profile is not None:
                raise ValueError("a constant potential carries no profile")
        elif self.kind == "radial":
            if self.r is None or self.profile is None:
                raise IncompleteSpecError("radial potential needs r and V samples")
            if len(self.r) != len(self.profile) or (
                self.dv_profile is not None and len(self.dv_profile) != len(self.r)
            ):
                raise ShapeError("potential columns have different lengths")
        else:
            raise ValueError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> "PotentialSpec":
        return cls("constant", float(value), label=f"V={value}")

    @classmethod
    def from_functions(cls, grid: RadialGrid, v, r_dv, v_inf: float, label: str = "") -> "PotentialSpec":
        r = grid.nodes
        return cls("radial", float(v_inf), r.copy(), np.asarray(v(r), float), np.asarray(r_dv(r), float), label)

    @classmethod
    def inverse_distance_well(cls, v1: float = 2.0, grid: RadialGrid | None = None) -> "PotentialSpec":
        """V(r) = v1 - 1/(r+1), for which r V'(r) = r/(r+1)^2 and V_inf = v1.

        Without a grid the potential is sampled on a log-spaced abscissa
        fine enough for linear interpolation onto any practical mesh.
        """
        if grid is None:
            r = np.concatenate(([0.0], np.geomspace(1e-6, 1e7, 20001)))
            return cls("radial", float(v1), r, v1 - 1.0 / (r + 1.0), r / (r + 1.0) ** 2, f"V={v1}-1/(r+1)")
        return cls.from_functions(
            grid,
            lambda r: v1 - 1.0 / (r + 1.0),
            lambda r: r / (r + 1.0) ** 2,
            v1,
            label=f"V={v1}-1/(r+1)",
        )

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def values(self, grid: RadialGrid) -> np.ndarray:
        if self.is_constant:
            return np.full(grid.n, self.v_inf)
        return np.interp(grid.nodes, self.r, self.profile, right=self.v_inf)

    def dv_values(self, grid: RadialGrid) -> np.ndarray:
        if self.is_constant:
            return np.zeros(grid.n)
        if self.dv_profile is None:
            raise IncompleteSpecError("potential has no r*V'(r) samples")
        return np.interp(grid.nodes, self.r, self.dv_profile, right=0.0)

    def limit(self) -> "PotentialSpec":
        return PotentialSpec.constant(self.v_inf)


def read_potential_csv(path, v_inf: float | None = None) -> PotentialSpec:
    """Load a potential from a CSV with columns r,V,rVprime.

    Without an explicit ``v_inf`` the last V sample is taken as the limit.
    """
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].lstrip().startswith("#")]
    header = [c.strip() for c in rows[0]]
    if header[:2] != ["r", "V"]:
        raise ValueError(f"{path}: expected header r,V[,rVprime], got {header}")
    data = np.array([[float(x) for x in row] for row in rows[1:]])
    dv = data[:, 2] if "rVprime" in header else None
    v_inf = float(data[-1, 1]) if v_inf is None else float(v_inf)
    return PotentialSpec("radial", v_inf, data[:, 0], data[:, 1], dv, label=Path(path).name)


def write_potential_csv(path, V: PotentialSpec, grid: RadialGrid) -> None:
    rows = ["r,V,rVprime"]
    for r, v, dv in zip(grid.nodes, V.values(grid), V.dv_values(grid)):
        rows.append(f"{float(r)!r},{float(v)!r},{float(dv)!r}")
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    grad_q: float
    mass_q: float
    dv_q: float
    kirch_q: float
    pow_q: float

    @classmethod
    def zero(cls) -> "EnergyBreakdown":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def breakdown(u: RadialFunction, params: ProblemParams, V: PotentialSpec) -> EnergyBreakdown:
    if params.p <= 1:
        raise InvalidExponentError(f"need p > 1, got {params.p}")
    g = u.grid
    v = u.values
    d = radial.dirichlet(g, v)
    sq = v * v
    return EnergyBreakdown(
        dirichlet=d,
        grad_q=params.a * d,
        mass_q=radial.quad(g, V.values(g) * sq),
        dv_q=0.0 if V.is_constant else radial.quad(g, V.dv_values(g) * sq),
        kirch_q=params.b * d * d,
        pow_q=radial.quad(g, np.abs(v) ** (params.p + 1)),
    )


def energy_I(bd: EnergyBreakdown, params: ProblemParams) -> float:
    return bd.grad_q / 2 + bd.mass_q / 2 + bd.kirch_q / 4 - params.lam * bd.pow_q / (params.p + 1)


def constraint_G(bd: EnergyBreakdown, params: ProblemParams) -> float:
    p = params.p
    return (
        1.5 * bd.grad_q
        + 2.5 * bd.mass_q
        + 0.5 * bd.dv_q
        + 1.5 * bd.kirch_q
        - params.lam * (p + 4) / (p + 1) * bd.pow_q
    )


def pohozaev_P(bd: EnergyBreakdown, params: ProblemParams) -> float:
    return (
        bd.grad_q / 2
        + 1.5 * bd.mass_q
        + bd.dv_q / 2
        + bd.kirch_q / 2
        - 3 * params.lam / (params.p + 1) * bd.pow_q
    )


def nehari(bd: EnergyBreakdown, params: ProblemParams) -> float:
    """<I'(u), u> in breakdown arithmetic."""
    return bd.grad_q + bd.mass_q + bd.kirch_q - params.lam * bd.pow_q


def phi(bd: EnergyBreakdown, params: ProblemParams) -> float:
    p = params.p
    return bd.grad_q / 4 + (bd.mass_q - bd.dv_q) / 12 + params.lam * (p - 2) / (6 * (p + 1)) * bd.pow_q


def nodal_gradient(u: RadialFunction, params: ProblemParams, V: PotentialSpec) -> np.ndarray:
    """Partial derivatives dI/du_i of the discrete energy."""
    g = u.grid
    v = u.values
    d = radial.dirichlet(g, v)
    nonlin = np.abs(v) ** (params.p - 1) * v
    return (params.a + params.b * d) * radial.stiffness_apply(g, v) + g.weights * (
        V.values(g) * v - params.lam * nonlin
    )


def gradient_I(u: RadialFunction, params: ProblemParams, V: PotentialSpec) -> np.ndarray:
    """Euler-Lagrange residual (a + b int|Du|^2) L u + V u - lam |u|^{p-1} u.

    This is the L^2 Riesz representative of the derivative, so
    ``quad(gradient_I(u) * v)`` is the directional derivative of the
    energy along v.  The origin node repeats node 1.
    """
    g = u.grid
    v = u.values
    d = radial.dirichlet(g, v)
    res = (params.a + params.b * d) * radial.laplacian(g, v) + V.values(g) * v
    res -= params.lam * np.abs(v) ** (params.p - 1) * v
    res[0] = res[1]
    return res


def embedding_quotient(u: RadialFunction, V: PotentialSpec, q: float = 3.0, a: float = 1.0) -> float:
    """(a int|Du|^2 + int V u^2) / |u|_q^2."""
    g = u.grid
    num = a * radial.dirichlet(g, u) + radial.quad(g, V.values(g) * u.values**2)
    den = radial.quad(g, np.abs(u.values) ** q) ** (2.0 / q)
    if den == 0:
        raise ValueError("quotient undefined for the zero profile")
    return num / den


def _banded(diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    """Upper banded storage for scipy.linalg.solveh_banded."""
    ab = np.zeros((2, diag.size))
    ab[0, 1:] = off
    ab[1] = diag
    return ab


def minimize_quotient(
    grid: RadialGrid,
    V: PotentialSpec,
    q: float = 3.0,
    a: float = 1.0,
    max_iters: int = 2000,
    tol: float = 1e-11,
    seed: RadialFunction | None = None,
) -> tuple[float, RadialFunction]:
    """Minimize :func:`embedding_quotient` by preconditioned gradient descent.

    The descent direction is the gradient in the inner product of
    a*K + W*|V| (discrete H^1), which makes the iteration count
    essentially independent of the mesh.  Iterates are renormalized to
    unit L^q norm after every step.
    """
    vv = V.values(grid)
    kd, ko = radial.stiffness_bands(grid)
    free = slice(1, grid.n - 1)
    ab = _banded((a * kd + grid.weights * (np.abs(vv) + 1e-3))[free], a * ko[1:-1])

    def value_and_grad(x):
        num = a * (x @ radial.stiffness_apply(grid, x)) + grid.weights @ (vv * x * x)
        t = grid.weights @ np.abs(x) ** q
        scale = t ** (2.0 / q)
        r = num / scale
        grad = 2.0 * (a * radial.stiffness_apply(grid, x) + grid.weights * vv * x)
        grad -= 2.0 * r * grid.weights * np.abs(x) ** (q - 2) * x
        return r, grad / scale

    def normalize(x):
        return x / (grid.weights @ np.abs(x) ** q) ** (1.0 / q)

    x = (seed if seed is not None else radial.gaussian(grid)).values.copy()
    x = normalize(x)
    r, grad = value_and_grad(x)
    step = 1.0
    for _ in range(max_iters):
        d = np.zeros_like(x)
        d[free] = -solveh_banded(ab, grad[free])
        slope = grad @ d
        if -slope <= tol * tol * r:
            break
        while True:
            trial = x + step * d
            trial[0] = 0.0
            trial = normalize(radial.fill_origin(trial))
            r_new, g_new = value_and_grad(trial)
            if r_new <= r + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-12:
                raise ConvergenceError("line search failed while minimizing the quotient", best=r)
        done = r - r_new <= tol * r
        x, r, grad = trial, r_new, g_new
        step = min(1.0, 2.0 * step)
        if done:
            break
    else:
        raise ConvergenceError(f"quotient did not converge in {max_iters} iterations", best=r)
    return float(r), RadialFunction(grid, x)


def sobolev_constant(grid: RadialGrid, V: PotentialSpec, q: float = 3.0, a: float = 1.0) -> float:
    """Attained discrete value of inf (a int|Du|^2 + int V u^2)/|u|_q^2.

    With the defaults this is the H^1 -> L^3 embedding constant; the
    result bounds the continuum infimum from above.
    """
    return minimize_quotient(grid, V, q=q, a=a)[0]


@dataclass(frozen=True)
class VHypothesisReport:
    v1: bool
    v2: bool
    v3: bool
    v1_margin: float
    v2_gap: float
    v3_min_quotient: float

    @property
    def all_pass(self) -> bool:
        return self.v1 and self.v2 and self.v3


def _probe_family(grid: RadialGrid) -> list[RadialFunction]:
    widths = np.geomspace(0.25, min(8.0, grid.r_max / 3), 12)
    return [radial.gaussian(grid, w) for w in widths]


def check_V_hypotheses(V: PotentialSpec, grid: RadialGrid) -> VHypothesisReport:
    """Sampled surrogates of the three hypotheses on V.

    (V1): V - r V' >= 0 at every node.  (V2): V <= V_inf at every node,
    strictly somewhere.  (V3): the quotient (int|Du|^2 + V u^2)/int u^2 is
    positive over a family of Gaussian probes.
    """
    if not V.is_constant and V.dv_profile is None:
        raise IncompleteSpecError("checking (V1) needs the r*V'(r) samples")
    vv = V.values(grid)
    margin = float(np.min(vv - V.dv_values(grid)))
    gap = float(np.max(V.v_inf - vv))
    v2 = bool(np.all(vv <= V.v_inf)) and gap > 0
    quotients = []
    for u in _probe_family(grid):
        num = radial.dirichlet(grid, u) + radial.quad(grid, vv * u.values**2)
        quotients.append(num / radial.quad(grid, u.values**2))
    qmin = float(min(quotients))
    return VHypothesisReport(margin >= 0, v2, qmin > 0, margin, gap, qmin)


def require_hypotheses(V: PotentialSpec, grid: RadialGrid) -> None:
    rep = check_V_hypotheses(V, grid)
    if V.is_constant:
        ok = rep.v3
    else:
        ok = rep.all_pass
    if not ok:
        raise OutOfHypothesisError(f"potential {V.label or V.kind} fails the hypotheses: {rep}")


def lp_norm(u: RadialFunction, q: float) -> float:
    return radial.quad(u.grid, np.abs(u.values) ** q) ** (1.0 / q)


def pnorm_lower_bound(c_emb: float, p: float) -> float:
    """Lower bound [3C(p+1)/(2(p+4))]^{1/(p-1)} on |u|_{p+1} over the manifold."""
    return (3.0 * c_emb * (p + 1) / (2.0 * (p + 4))) ** (1.0 / (p - 1))


def energy_lower_bound(bd: EnergyBreakdown, params: ProblemParams) -> float:
    """(grad + mass)(p-1)/(2(p+4)), a strict lower bound for I on the manifold."""
    return (bd.grad_q + bd.mass_q) * (params.p - 1) / (2 * (params.p + 4))


__all__ = [
    "ProblemParams",
    "PotentialSpec",
    "EnergyBreakdown",
    "VHypothesisReport",
    "breakdown",
    "energy_I",
    "constraint_G",
    "pohozaev_P",
    "nehari",
    "phi",
    "nodal_gradient",
    "gradient_I",
    "embedding_quotient",
    "minimize_quotient",
    "sobolev_constant",
    "check_V_hypotheses",
    "require_hypotheses",
    "read_potential_csv",
    "write_potential_csv",
    "pnorm_lower_bound",
    "energy_lower_bound",
    "lp_norm",
]

