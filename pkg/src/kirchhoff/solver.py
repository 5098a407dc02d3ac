"""Ground states by descent of the energy over the Nehari-Pohozaev manifold.

The reduced functional E(u) = max_t I(u_t) is minimized.  When the
iterate already lies on the manifold its fiber is stationary at t = 1 and
the derivative of E equals the derivative of I, so each step moves along
-I'(u) and then rescales the trial back onto the manifold.  Steps are
taken in the discrete H^1 metric (a + b int|Du|^2) K + W V, which keeps
the iteration count essentially independent of the mesh.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solveh_banded
from scipy.optimize import minimize_scalar

from . import fiber
from . import functional as F
from . import radial
from .errors import CollapseError, KirchhoffError
from .functional import PotentialSpec, ProblemParams
from .radial import RadialFunction, RadialGrid

log = logging.getLogger(__name__)

PDE_GATE = 1e-4
POHOZAEV_GATE = 1e-4
G_GATE = 1e-6
_COLLAPSE = 1e-14
_FLAT_RTOL = 1e-13
_FLAT_STEPS = 5


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 50_000
    grad_tol: float = 1e-8
    step_init: float = 1.0
    armijo_c: float = 1e-4
    seed_kind: str = "gaussian"
    enforce_positivity: bool = True
    seed_profile: RadialFunction | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if self.seed_kind not in ("gaussian", "custom"):
            raise ValueError(f"unknown seed kind {self.seed_kind!r}")
        if self.seed_kind == "custom" and self.seed_profile is None:
            raise ValueError("seed_kind='custom' needs seed_profile")

    def echo(self) -> dict:
        return {
            "max_iters": self.max_iters,
            "grad_tol": self.grad_tol,
            "step_init": self.step_init,
            "armijo_c": self.armijo_c,
            "seed_kind": self.seed_kind,
            "enforce_positivity": self.enforce_positivity,
        }


@dataclass
class SolveReport:
    profile: RadialFunction
    energy: float
    g_residual: float
    pohozaev_residual: float
    pde_residual: float
    tangential_residual: float
    converged: bool
    iterations: int
    t_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)
    upper_bound_only: bool = False
    stop_reason: str = ""
    fiber_local_maxima: int = 1

    @property
    def gates_passed(self) -> bool:
        return (
            self.pde_residual <= PDE_GATE
            and self.pohozaev_residual <= POHOZAEV_GATE
            and self.g_residual <= G_GATE
        )

    def to_dict(self) -> dict:
        g = self.profile.grid
        return {
            "energy": self.energy,
            "g_residual": self.g_residual,
            "pohozaev_residual": self.pohozaev_residual,
            "pde_residual": self.pde_residual,
            "tangential_residual": self.tangential_residual,
            "converged": self.converged,
            "gates": {
                "pde": PDE_GATE,
                "pohozaev": POHOZAEV_GATE,
                "g": G_GATE,
                "passed": self.gates_passed,
            },
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "upper_bound_only": self.upper_bound_only,
            "fiber_local_maxima": self.fiber_local_maxima,
            "grid": {"r_max": g.r_max, "n": g.n},
            "t_history": list(self.t_history),
            "energy_history": list(self.energy_history),
        }


# -- grids and seeds ---------------------------------------------------------


def _gaussian_moments(p: float, width: float) -> tuple[float, float, float]:
    """Exact int|Du|^2, int u^2, int|u|^{p+1} for u = exp(-(r/width)^2)."""
    k = (math.pi / 2) ** 1.5
    return 3 * k * width, k * width**3, (math.pi / (p + 1)) ** 1.5 * width**3


def best_gaussian(params: ProblemParams, v_inf: float) -> tuple[float, float, float]:
    """Width, fiber scale and level of the best Gaussian trial function.

    Minimizes the closed-form fiber maximum of exp(-(r/w)^2) over w using
    exact Gaussian integrals; returns (w, t_star, level).
    """
    params.require_manifold_range()

    def fmax(log_w):
        d, m, q = _gaussian_moments(params.p, math.exp(log_w))
        fp = fiber.FiberPolynomial(
            params.a * d / 2, v_inf * m / 2, params.b * d * d / 4, params.lam * q / (params.p + 1), params.p
        )
        return fiber.fiber_max(fp)

    res = minimize_scalar(lambda s: fmax(s).value, bounds=(-12.0, 12.0), method="bounded",
                          options={"xatol": 1e-10})
    fm = fmax(res.x)
    return math.exp(res.x), fm.t_star, fm.value


def length_scale(params: ProblemParams, v_inf: float) -> float:
    """Decay length sqrt((a + b int|Du|^2)/V_inf) predicted by the best Gaussian."""
    w, t, _ = best_gaussian(params, v_inf)
    d, _, _ = _gaussian_moments(params.p, w)
    theta = t**3 * d
    return max(math.sqrt((params.a + params.b * theta) / v_inf), t * w)


def natural_grid(params: ProblemParams, v_inf: float, n: int = 8192, decay_lengths: float = 30.0) -> RadialGrid:
    """Grid wide enough that the ground state has decayed to round-off at r_max."""
    ell = length_scale(params, v_inf)
    return radial.make_grid(_round_up(max(radial.DEFAULT_R_MAX, decay_lengths * ell)), n)


_CORE_POINTS = 200
_MAX_NODES = 1 << 16


def profile_scales(u: RadialFunction, params: ProblemParams, v_inf: float) -> tuple[float, float]:
    """Decay length sqrt((a + b int|Du|^2)/v_inf) and half-maximum radius of u."""
    g = u.grid
    kappa = params.a + params.b * radial.dirichlet(g, u)
    v = u.values
    half = float(g.nodes[int(np.argmax(v < 0.5 * v.max()))])
    return math.sqrt(kappa / v_inf), max(half, g.h)


def adapted_grid(profiles, params_list, v_inf: float, decay_lengths: float = 30.0) -> RadialGrid:
    """Grid covering the widest decay length and resolving the narrowest core.

    r_max spans ``decay_lengths`` decay lengths of the slowest-decaying
    profile and the spacing puts about 200 nodes inside the smallest
    half-maximum radius; n is rounded up to a power of two.
    """
    ells, halves = zip(*(profile_scales(u, pr, v_inf) for u, pr in zip(profiles, params_list)))
    r_max = _round_up(max(radial.DEFAULT_R_MAX, decay_lengths * max(ells)))
    n = r_max / (min(halves) / _CORE_POINTS) + 1
    n = int(min(max(2 ** math.ceil(math.log2(n)), 4096), _MAX_NODES))
    return radial.make_grid(r_max, n)


def _round_up(x: float) -> float:
    mag = 10 ** math.floor(math.log10(x))
    return math.ceil(x / mag * 10) * mag / 10


def _regrid(u: RadialFunction, grid: RadialGrid) -> RadialFunction:
    if u.grid.same_as(grid):
        return u
    return RadialFunction.from_samples(grid, np.interp(grid.nodes, u.grid.nodes, u.values, right=0.0))


def gaussian_seed(params: ProblemParams, v_inf: float, grid: RadialGrid) -> RadialFunction:
    w, t, _ = best_gaussian(params, v_inf)
    return radial.gaussian(grid, width=t * w, amplitude=t)


# -- residuals -----------------------------------------------------------------


def _normalizer(bd: F.EnergyBreakdown) -> float:
    return 1.0 + bd.grad_q + bd.mass_q


def residual_report(u: RadialFunction, params: ProblemParams, V: PotentialSpec) -> dict:
    """G, Pohozaev and PDE residuals, each divided by 1 + grad + mass."""
    bd = F.breakdown(u, params, V)
    norm = _normalizer(bd)
    res = F.gradient_I(u, params, V)[1:-1]
    return {
        "g_residual": abs(F.constraint_G(bd, params)) / norm,
        "pohozaev_residual": abs(F.pohozaev_P(bd, params)) / norm,
        "pde_residual": float(np.max(np.abs(res))) / norm if res.size else 0.0,
    }


def nodal_constraint_gradient(u: RadialFunction, params: ProblemParams, V: PotentialSpec) -> np.ndarray:
    """Partial derivatives dG/du_i."""
    g = u.grid
    v = u.values
    d = radial.dirichlet(g, v)
    p = params.p
    vv = V.values(g)
    dv = V.dv_values(g)
    return (3 * params.a + 6 * params.b * d) * radial.stiffness_apply(g, v) + g.weights * (
        (5 * vv + dv) * v - params.lam * (p + 4) * np.abs(v) ** (p - 1) * v
    )


class _Metric:
    """Discrete H^1 inner product used to turn derivatives into directions."""

    def __init__(self, u: RadialFunction, params: ProblemParams, V: PotentialSpec):
        g = u.grid
        kd, ko = radial.stiffness_bands(g)
        coef = params.a + params.b * radial.dirichlet(g, u)
        diag = coef * kd + g.weights * np.maximum(V.values(g), 0.0) + 1e-12 * g.weights.max()
        self.free = slice(1, g.n - 1)
        self.ab = F._banded(diag[self.free], coef * ko[1:-1])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rhs)
        out[self.free] = solveh_banded(self.ab, rhs[self.free])
        return out


def tangential_residual(u: RadialFunction, params: ProblemParams, V: PotentialSpec) -> float:
    """PDE residual after removing the component along the constraint gradient.

    At a minimizer of I over {G = 0} this vanishes up to round-off, while
    the raw PDE residual keeps a small multiplier term because the
    discrete Pohozaev identity only holds to discretization accuracy.
    The max-norm is divided by the max-norm of the nonlinear term, so the
    value is insensitive to the physical scale of the solution.
    """
    g = u.grid
    di = F.nodal_gradient(u, params, V)
    dg = nodal_constraint_gradient(u, params, V)
    metric = _Metric(u, params, V)
    pdg = metric.solve(dg)
    denom = dg @ pdg
    nu = (di @ pdg) / denom if denom > 0 else 0.0
    tang = (di - nu * dg)[1:-1] / g.weights[1:-1]
    scale = params.lam * float(np.max(np.abs(u.values))) ** params.p
    return float(np.max(np.abs(tang))) / scale if scale > 0 else 0.0


# -- descent -------------------------------------------------------------------


def _project(u: RadialFunction, params: ProblemParams, V: PotentialSpec, t_guess: float = 1.0):
    if V.is_constant:
        pr = fiber.project_to_M(u, params, V)
        return pr.t_star, pr.profile
    t = fiber._refine_on_grid(u, params, V, t_guess)
    return t, radial.rescale(u, t)


def _descend(u0: RadialFunction, params: ProblemParams, V: PotentialSpec, opts: SolverOptions):
    t, u = _project(u0, params, V, 1.0)
    energy = F.energy_I(F.breakdown(u, params, V), params)
    t_hist, e_hist = [t], [energy]
    step = opts.step_init
    reason = "max_iters"
    flat = 0
    it = 0
    for it in range(1, opts.max_iters + 1):
        bd = F.breakdown(u, params, V)
        if bd.pow_q < _COLLAPSE:
            raise CollapseError(f"iterate collapsed to zero after {it} iterations")
        if tangential_residual(u, params, V) <= opts.grad_tol:
            reason = "tangential residual below tolerance"
            break
        grad = F.nodal_gradient(u, params, V)
        direction = -_Metric(u, params, V).solve(grad)
        slope = float(grad @ direction)
        if slope >= 0:
            reason = "no descent direction"
            break
        accepted = False
        while step >= 1e-12:
            trial = u.values + step * direction
            if opts.enforce_positivity:
                trial = np.abs(trial)
            trial[-1] = 0.0
            try:
                t_new, cand = _project(RadialFunction(u.grid, radial.fill_origin(trial)), params, V)
            except KirchhoffError:
                step *= 0.5
                continue
            e_new = F.energy_I(F.breakdown(cand, params, V), params)
            if e_new <= energy + opts.armijo_c * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            reason = "energy decrease below round-off"
            break
        # decreases lost in the last few ulps of the energy are noise
        flat = flat + 1 if energy - e_new <= _FLAT_RTOL * abs(energy) else 0
        u, energy = cand, e_new
        t_hist.append(t_new)
        e_hist.append(energy)
        if flat >= _FLAT_STEPS:
            reason = "energy decrease below round-off"
            break
        step = min(opts.step_init, 2.0 * step)
    return u, it, reason, t_hist, e_hist


def _report(u, params, V, it, reason, t_hist, e_hist, opts, upper_bound_only=False, n_max=1) -> SolveReport:
    res = residual_report(u, params, V)
    tang = tangential_residual(u, params, V)
    energy = F.energy_I(F.breakdown(u, params, V), params)
    rep = SolveReport(
        profile=u,
        energy=energy,
        g_residual=res["g_residual"],
        pohozaev_residual=res["pohozaev_residual"],
        pde_residual=res["pde_residual"],
        tangential_residual=tang,
        converged=False,
        iterations=it,
        t_history=t_hist,
        energy_history=e_hist,
        upper_bound_only=upper_bound_only,
        stop_reason=reason,
        fiber_local_maxima=n_max,
    )
    # stalls at round-off count as converged when the gates hold
    rep.converged = rep.gates_passed and reason != "max_iters"
    if not rep.converged:
        log.warning("solve did not converge (%s): %s", reason, res)
    return rep


def _seed(params, v_inf, grid, opts) -> RadialFunction:
    if opts.seed_kind == "custom":
        return _regrid(opts.seed_profile, grid)
    return gaussian_seed(params, v_inf, grid)


def solve_limit_ground_state(
    params: ProblemParams,
    v_inf: float = 1.0,
    grid: RadialGrid | None = None,
    opts: SolverOptions | None = None,
) -> SolveReport:
    """Positive ground state of -(a + b int|Du|^2) Lu + v_inf u = lam |u|^{p-1} u."""
    params.require_manifold_range()
    if not v_inf > 0:
        raise ValueError(f"v_inf must be positive, got {v_inf}")
    opts = opts or SolverOptions()
    V = PotentialSpec.constant(v_inf)
    if grid is not None:
        u, it, reason, th, eh = _descend(_seed(params, v_inf, grid, opts), params, V, opts)
        return _report(u, params, V, it, reason, th, eh, opts)
    # no grid given: a first pass on the Gaussian-sized grid measures the
    # actual scales, then the solve is repeated on a grid fitted to them
    first = natural_grid(params, v_inf)
    u, *_ = _descend(_seed(params, v_inf, first, opts), params, V, opts)
    fitted = adapted_grid([u], [params], v_inf)
    u, it, reason, th, eh = _descend(_regrid(u, fitted), params, V, opts)
    return _report(u, params, V, it, reason, th, eh, opts)


def solve_V_ground_state(
    params: ProblemParams,
    V: PotentialSpec,
    grid: RadialGrid | None = None,
    opts: SolverOptions | None = None,
    limit_report: SolveReport | None = None,
) -> SolveReport:
    """Descent for a non-constant potential, started from the limit ground state.

    The returned energy is the fiber maximum of the final iterate and is
    only an upper bound for the mountain-pass level.
    """
    params.require_manifold_range()
    opts = opts or SolverOptions()
    if V.is_constant:
        return solve_limit_ground_state(params, V.v_inf, grid, opts)
    if grid is None:
        if limit_report is None:
            limit_report = solve_limit_ground_state(params, V.v_inf, None, replace(opts, seed_kind="gaussian", seed_profile=None))
        grid = limit_report.profile.grid
    F.require_hypotheses(V, grid)
    if limit_report is None:
        limit_report = solve_limit_ground_state(params, V.v_inf, grid, replace(opts, seed_kind="gaussian", seed_profile=None))
    seed = _regrid(limit_report.profile, grid)
    fm0 = fiber.fiber_max_general(seed, params, V)
    start = radial.rescale(seed, fm0.t_star)
    u, it, reason, th, eh = _descend(start, params, V, opts)
    fm = fiber.fiber_max_general(u, params, V)
    rep = _report(u, params, V, it, reason, th, eh, opts, upper_bound_only=True,
                  n_max=max(fm0.local_maxima, fm.local_maxima))
    rep.energy = fm.value
    return rep


# -- levels --------------------------------------------------------------------


def gaussian_probes(params: ProblemParams, v_inf: float, grid: RadialGrid, count: int = 32) -> list[RadialFunction]:
    """Unit-amplitude Gaussians whose widths bracket the best Gaussian trial."""
    w, _, _ = best_gaussian(params, v_inf)
    lo = max(w / 8, 4 * grid.h)
    hi = max(min(8 * w, grid.r_max / 8), 2 * lo)
    return [radial.gaussian(grid, width=s) for s in np.geomspace(lo, hi, count)]


def smooth_bumps(grid: RadialGrid, scale: float, count: int, seed: int = 0) -> list[RadialFunction]:
    """Positive random sums of three Gaussian bumps on the given length scale."""
    rng = np.random.default_rng(seed)
    out = []
    r = grid.nodes
    for _ in range(count):
        centers = rng.uniform(0, 2 * scale, 3)
        widths = scale * rng.uniform(0.3, 1.5, 3)
        amps = rng.uniform(0.2, 1.0, 3)
        vals = sum(A * np.exp(-(((r - c) / s) ** 2)) for A, c, s in zip(amps, centers, widths))
        out.append(RadialFunction.from_samples(grid, vals))
    return out


def mountain_pass_value(
    params: ProblemParams,
    v_inf: float,
    u_ref: RadialFunction | None = None,
    grid: RadialGrid | None = None,
    probes: list[RadialFunction] | None = None,
    n_gaussians: int = 32,
    n_bumps: int = 0,
    seed: int = 0,
) -> float:
    """Minimum over a probe family of the closed-form fiber maxima.

    Each fiber maximum dominates the ground-state level, so the minimum is
    an upper bound that is attained when the family contains a ground
    state.  Pass ``probes`` to use an explicit family; otherwise the
    family is ``n_gaussians`` Gaussians, ``n_bumps`` random bumps and
    ``u_ref`` if given.
    """
    params.require_manifold_range()
    V = PotentialSpec.constant(v_inf)
    if probes is None:
        if grid is None:
            grid = u_ref.grid if u_ref is not None else natural_grid(params, v_inf)
        probes = gaussian_probes(params, v_inf, grid, n_gaussians) if n_gaussians else []
        if n_bumps:
            w, t, _ = best_gaussian(params, v_inf)
            probes += smooth_bumps(grid, w, n_bumps, seed)
        if u_ref is not None:
            probes.append(u_ref)
    if not probes:
        raise ValueError("empty probe family")
    return min(probe_levels(params, V, probes))


def probe_levels(params: ProblemParams, V: PotentialSpec, probes) -> list[float]:
    return [fiber.fiber_max(fiber.fiber_poly(F.breakdown(u, params, V), params)).value for u in probes]


@dataclass
class SweepRow:
    lam: float
    c_lambda: float
    m_inf: float
    gap: float
    ok: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "c_lambda": self.c_lambda, "m_inf": self.m_inf,
                "gap": self.gap, "ok": self.ok, "note": self.note}


def _sweep_row(params: ProblemParams, lam: float, V: PotentialSpec, grid, opts) -> SweepRow:
    pl = params.with_lambda(lam)
    try:
        lim = solve_limit_ground_state(pl, V.v_inf, grid, opts)
        cv = solve_V_ground_state(pl, V, grid, opts, limit_report=lim)
    except KirchhoffError as exc:
        return SweepRow(lam, math.nan, math.nan, math.nan, False, f"{type(exc).__name__}: {exc}")
    ok = lim.converged and cv.converged
    note = "" if ok else f"limit: {lim.stop_reason}; V: {cv.stop_reason}"
    return SweepRow(lam, cv.energy, lim.energy, lim.energy - cv.energy, ok, note)


def lambda_sweep(
    params: ProblemParams,
    lambdas,
    V: PotentialSpec,
    grid: RadialGrid | None = None,
    opts: SolverOptions | None = None,
    workers: int = 1,
) -> list[SweepRow]:
    """Rows (lambda, c_lambda upper bound, m_lambda^inf, gap) for sorted lambdas."""
    lambdas = [float(x) for x in lambdas]
    if lambdas != sorted(lambdas):
        raise ValueError("lambda values must be sorted ascending")
    if lambdas and not (params.delta <= lambdas[0] and lambdas[-1] <= 1):
        raise ValueError(f"lambda values must lie in [{params.delta}, 1]")
    opts = opts or SolverOptions()
    if grid is None and lambdas:
        # the smallest lambda has the widest profile, the largest the narrowest core
        ends = [params.with_lambda(lambdas[0]), params.with_lambda(lambdas[-1])]
        probes = [solve_limit_ground_state(pr, V.v_inf, None, opts).profile for pr in ends]
        grid = adapted_grid(probes, ends, V.v_inf)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda lam: _sweep_row(params, lam, V, grid, opts), lambdas))
    return [_sweep_row(params, lam, V, grid, opts) for lam in lambdas]
