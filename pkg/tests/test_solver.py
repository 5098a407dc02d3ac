import math

import numpy as np
import pytest

from kirchhoff import fiber, radial, solver
from kirchhoff import functional as F
from kirchhoff.errors import OutOfHypothesisError
from kirchhoff.functional import PotentialSpec, ProblemParams
from kirchhoff.solver import SolverOptions

# energy of the (a, b, p, lam, V) = (1, 1, 3, 1, 1) ground state from the
# shooting + nonlocal fixed-point oracle in tests/oracles.py, frozen here so the
# fast suite does not rerun the 35 s computation
SHOOTING_ENERGY = 862399.4351065648

V1 = PotentialSpec.constant(1.0)


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(grad_tol=0)
    with pytest.raises(ValueError):
        SolverOptions(max_iters=0)
    with pytest.raises(ValueError):
        SolverOptions(armijo_c=1.0)
    with pytest.raises(ValueError):
        SolverOptions(seed_kind="custom")
    with pytest.raises(ValueError):
        SolverOptions(seed_kind="other")
    assert SolverOptions().echo()["grad_tol"] == 1e-8


def test_gaussian_moments_match_quadrature():
    g = radial.make_grid(12.0, 4096)
    d, m, q = solver._gaussian_moments(3.0, 1.3)
    nm = radial.norms(radial.gaussian(g, 1.3), q=4)
    assert d == pytest.approx(nm["dirichlet"], rel=1e-5)
    assert m == pytest.approx(nm["l2sq"], rel=1e-6)
    assert q == pytest.approx(nm["lq"], rel=1e-6)


def test_best_gaussian_is_a_local_minimum(cubic_params):
    w, t, level = solver.best_gaussian(cubic_params, 1.0)
    for f in (0.9, 1.1):
        d, m, q = solver._gaussian_moments(3.0, w * f)
        fp = fiber.FiberPolynomial(d / 2, m / 2, d * d / 4, q / 4, 3.0)
        assert fiber.fiber_max(fp).value > level


def test_ground_state_converges(cubic_ground_state):
    rep = cubic_ground_state
    assert rep.converged and rep.gates_passed
    assert rep.stop_reason != "max_iters"
    assert rep.pde_residual <= solver.PDE_GATE
    assert rep.pohozaev_residual <= solver.POHOZAEV_GATE
    assert rep.g_residual <= solver.G_GATE
    assert not rep.upper_bound_only


def test_ground_state_energy_matches_shooting(cubic_ground_state):
    assert cubic_ground_state.energy == pytest.approx(SHOOTING_ENERGY, rel=1e-3)


def test_ground_state_positive_and_decaying(cubic_ground_state):
    v = cubic_ground_state.profile.values
    assert np.all(v[:-1] > 0)
    assert np.argmax(v) == 0
    assert v[-2] < 1e-10 * v[0]


def test_energy_history_monotone(cubic_ground_state):
    e = np.array(cubic_ground_state.energy_history)
    assert np.all(np.diff(e) <= 0)
    assert e[-1] == pytest.approx(cubic_ground_state.energy, rel=1e-12)


def test_lower_bounds_hold(cubic_ground_state, cubic_params):
    u = cubic_ground_state.profile
    c_emb, _ = F.minimize_quotient(u.grid, V1, q=cubic_params.p + 1, a=cubic_params.a)
    assert F.lp_norm(u, 4.0) >= F.pnorm_lower_bound(c_emb, cubic_params.p)
    bd = F.breakdown(u, cubic_params, V1)
    assert cubic_ground_state.energy > F.energy_lower_bound(bd, cubic_params)


def test_ground_state_satisfies_manifold_identity(cubic_ground_state, cubic_params):
    bd = F.breakdown(cubic_ground_state.profile, cubic_params, V1)
    lhs = F.energy_I(bd, cubic_params)
    assert lhs == pytest.approx(F.phi(bd, cubic_params), rel=1e-8)


def test_probe_family_containing_ground_state(cubic_ground_state, cubic_params):
    u = cubic_ground_state.profile
    assert solver.mountain_pass_value(cubic_params, 1.0, probes=[u]) == pytest.approx(
        cubic_ground_state.energy, rel=1e-9
    )
    levels = solver.probe_levels(cubic_params, V1, solver.gaussian_probes(cubic_params, 1.0, u.grid))
    assert min(levels) >= cubic_ground_state.energy
    with_ref = solver.mountain_pass_value(cubic_params, 1.0, u_ref=u)
    assert with_ref == pytest.approx(cubic_ground_state.energy, rel=1e-9)


def test_empty_probe_family_rejected(cubic_params):
    with pytest.raises(ValueError):
        solver.mountain_pass_value(cubic_params, 1.0, probes=[])


def test_residual_report_of_zero_profile(default_grid, cubic_params):
    res = solver.residual_report(radial.RadialFunction.zeros(default_grid), cubic_params, V1)
    assert res == {"g_residual": 0.0, "pohozaev_residual": 0.0, "pde_residual": 0.0}


def test_residual_report_flags_non_solution(default_grid, cubic_params):
    res = solver.residual_report(radial.gaussian(default_grid), cubic_params, V1)
    assert res["pde_residual"] > 1e-2


def test_tangential_residual_small_at_solution(cubic_ground_state, cubic_params):
    assert solver.tangential_residual(cubic_ground_state.profile, cubic_params, V1) <= 1e-6


def test_constant_potential_dispatches_to_limit(cubic_ground_state, cubic_params):
    grid = cubic_ground_state.profile.grid
    rep = solver.solve_V_ground_state(cubic_params, V1, grid)
    assert rep.energy == pytest.approx(cubic_ground_state.energy, rel=1e-4)


def test_explicit_grid_reproduces_auto_grid(cubic_ground_state, cubic_params):
    rep = solver.solve_limit_ground_state(cubic_params, 1.0, cubic_ground_state.profile.grid)
    assert rep.energy == pytest.approx(cubic_ground_state.energy, rel=1e-8)


def test_limit_requires_positive_v(cubic_params):
    with pytest.raises(ValueError):
        solver.solve_limit_ground_state(cubic_params, 0.0)


@pytest.fixture(scope="module")
def well_solutions():
    params = ProblemParams(a=1.0, b=1.0, p=3.0, lam=1.0)
    V = PotentialSpec.inverse_distance_well(2.0)
    lim = solver.solve_limit_ground_state(params, 2.0)
    rep = solver.solve_V_ground_state(params, V, limit_report=lim)
    return params, V, lim, rep


def test_well_solution_below_limit(well_solutions):
    params, V, lim, rep = well_solutions
    assert rep.upper_bound_only
    assert rep.converged
    assert rep.fiber_local_maxima == 1
    assert rep.energy < lim.energy


def test_well_solution_on_constraint(well_solutions):
    params, V, lim, rep = well_solutions
    assert rep.g_residual <= solver.G_GATE
    assert np.all(rep.profile.values[:-1] > 0)


def test_V_solve_rejects_bad_potential(default_grid, cubic_params):
    V = PotentialSpec.from_functions(default_grid, lambda r: 1 + 1 / (r + 1), lambda r: -r / (r + 1) ** 2, 1.0)
    with pytest.raises(OutOfHypothesisError):
        solver.solve_V_ground_state(cubic_params, V, default_grid)


def test_sweep_validation():
    params = ProblemParams(delta=0.5)
    V = PotentialSpec.inverse_distance_well(2.0)
    with pytest.raises(ValueError):
        solver.lambda_sweep(params, [0.8, 0.6], V)
    with pytest.raises(ValueError):
        solver.lambda_sweep(params, [0.4, 0.6], V)
    assert solver.lambda_sweep(params, [], V) == []


def test_adapted_grid_shape(cubic_ground_state, cubic_params):
    g = solver.adapted_grid([cubic_ground_state.profile], [cubic_params], 1.0)
    ell, half = solver.profile_scales(cubic_ground_state.profile, cubic_params, 1.0)
    assert g.r_max >= 30 * ell
    assert math.log2(g.n).is_integer()
    assert g.h <= half / 100


def test_report_serializes(cubic_ground_state):
    d = cubic_ground_state.to_dict()
    assert d["gates"]["passed"] is True
    assert d["energy"] == cubic_ground_state.energy


def test_pohozaev_residual_decreases_under_refinement(cubic_ground_state, cubic_params):
    g = cubic_ground_state.profile.grid
    coarse = [solver.solve_limit_ground_state(cubic_params, 1.0, radial.make_grid(g.r_max, n)) for n in (g.n // 4, g.n // 2)]
    res = [r.pohozaev_residual for r in coarse] + [cubic_ground_state.pohozaev_residual]
    assert res[0] > res[1] > res[2]
    # second-order discretization: roughly a factor 4 per doubling
    assert res[0] / res[1] > 3 and res[1] / res[2] > 3
