import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kirchhoff import functional as F
from kirchhoff import radial
from kirchhoff.errors import IncompleteSpecError, InvalidExponentError, OutOfHypothesisError, ShapeError
from kirchhoff.functional import PotentialSpec, ProblemParams

from conftest import random_smooth_profile

V1 = PotentialSpec.constant(1.0)


def _scale(bd):
    return 1.0 + bd.grad_q + bd.mass_q


def test_params_validation():
    with pytest.raises(ValueError):
        ProblemParams(a=0.0)
    with pytest.raises(ValueError):
        ProblemParams(b=-1.0)
    with pytest.raises(ValueError):
        ProblemParams(lam=0.2, delta=0.5)
    with pytest.raises(ValueError):
        ProblemParams(delta=1.0)
    with pytest.raises(InvalidExponentError):
        ProblemParams(p=5.0).require_manifold_range()
    assert ProblemParams().with_lambda(0.3).delta == 0.3


def test_breakdown_of_unit_gaussian(default_grid):
    bd = F.breakdown(radial.gaussian(default_grid), ProblemParams(), V1)
    grad = 3 * (math.pi / 2) ** 1.5
    assert bd.grad_q == pytest.approx(grad, rel=1e-5)
    assert bd.mass_q == pytest.approx((math.pi / 2) ** 1.5, rel=1e-6)
    assert bd.kirch_q == pytest.approx(grad**2, rel=1e-5)
    assert bd.pow_q == pytest.approx((math.pi / 4) ** 1.5, rel=1e-6)
    assert bd.dv_q == 0.0


def test_breakdown_rejects_bad_exponent(default_grid):
    with pytest.raises(InvalidExponentError):
        F.breakdown(radial.gaussian(default_grid), ProblemParams(p=1.0), V1)


def test_zero_profile_breakdown_is_zero(default_grid):
    z = radial.RadialFunction.zeros(default_grid)
    assert F.breakdown(z, ProblemParams(), V1) == F.EnergyBreakdown.zero()


def _identity_residuals(u, params, V):
    bd = F.breakdown(u, params, V)
    n = F.nodal_gradient(u, params, V) @ u.values
    G = F.constraint_G(bd, params)
    s = _scale(bd)
    return (
        abs(G - (n + F.pohozaev_P(bd, params))) / s,
        abs(F.energy_I(bd, params) - F.phi(bd, params) - G / 6) / s,
        abs(n - F.nehari(bd, params)) / s,
    )


@pytest.mark.parametrize("p", [2.5, 3.0, 4.5])
def test_identity_chain_on_random_profiles(default_grid, rng, p):
    params = ProblemParams(a=1.3, b=0.7, p=p, lam=0.8)
    for _ in range(20):
        u = random_smooth_profile(default_grid, rng)
        e1, e2, e3 = _identity_residuals(u, params, V1)
        assert e1 <= 1e-8 and e2 <= 1e-10 and e3 <= 1e-8


def test_identity_chain_with_radial_potential(default_grid, rng):
    V = PotentialSpec.inverse_distance_well(2.0, default_grid)
    params = ProblemParams(p=3.0)
    for _ in range(10):
        e1, e2, e3 = _identity_residuals(random_smooth_profile(default_grid, rng), params, V)
        assert e1 <= 1e-8 and e2 <= 1e-10 and e3 <= 1e-8


def test_nodal_gradient_matches_finite_differences(default_grid, rng):
    params = ProblemParams(a=1.0, b=0.5, p=3.0, lam=0.9)
    u = random_smooth_profile(default_grid, rng)
    grad = F.nodal_gradient(u, params, V1)

    def energy(x):
        return F.energy_I(F.breakdown(radial.RadialFunction(default_grid, x), params, V1), params)

    for _ in range(4):
        v = random_smooth_profile(default_grid, rng).values
        eps = 1e-4
        fd = (energy(u.values + eps * v) - energy(u.values - eps * v)) / (2 * eps)
        assert fd == pytest.approx(grad @ v, rel=1e-6)


def test_gradient_I_is_weighted_nodal_gradient(default_grid, rng):
    params = ProblemParams()
    u = random_smooth_profile(default_grid, rng)
    ng = F.nodal_gradient(u, params, V1)
    rg = F.gradient_I(u, params, V1)
    w = default_grid.weights
    assert np.allclose(rg[1:] * w[1:], ng[1:], rtol=1e-10, atol=1e-14)


def test_gradient_of_zero_is_zero(default_grid):
    z = radial.RadialFunction.zeros(default_grid)
    assert np.all(F.gradient_I(z, ProblemParams(), V1) == 0)


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(0.1, 5), b=st.floats(0.1, 5), p=st.floats(2.05, 4.95),
    lam=st.floats(0.5, 1.0), width=st.floats(0.5, 4),
)
def test_phi_plus_constraint_reproduces_energy(a, b, p, lam, width):
    g = radial.make_grid(20.0, 512)
    params = ProblemParams(a=a, b=b, p=p, lam=lam)
    bd = F.breakdown(radial.gaussian(g, width), params, V1)
    lhs = F.energy_I(bd, params)
    rhs = F.phi(bd, params) + F.constraint_G(bd, params) / 6
    assert abs(lhs - rhs) <= 1e-12 * _scale(bd)


def test_embedding_quotient_of_gaussian(default_grid):
    # (3 + 1)(pi/2)^{3/2} / ((pi/3)^{3/2})^{2/3}
    exact = 4 * (math.pi / 2) ** 1.5 / (math.pi / 3)
    q = F.embedding_quotient(radial.gaussian(default_grid), V1, q=3.0)
    assert q == pytest.approx(exact, rel=1e-5)


def test_embedding_quotient_zero(default_grid):
    with pytest.raises(ValueError):
        F.embedding_quotient(radial.RadialFunction.zeros(default_grid), V1)


def test_sobolev_constant_below_gaussian_and_refines():
    coarse = F.sobolev_constant(radial.make_grid(20.0, 1024), V1)
    fine = F.sobolev_constant(radial.make_grid(20.0, 2048), V1)
    gauss = 4 * (math.pi / 2) ** 1.5 / (math.pi / 3)
    assert 0 < fine < gauss
    assert abs(coarse - fine) / fine <= 1e-3
    assert isinstance(fine, float)


def test_sobolev_constant_scales_with_coefficients(default_grid):
    # inf (a|Du|^2 + |u|^2)/|u|_3^2 at a = 1 vs. a = 2: with u(x) = w(x/s),
    # the quotient scales; only monotonicity in a is asserted.
    c1 = F.sobolev_constant(default_grid, V1, a=1.0)
    c2 = F.sobolev_constant(default_grid, V1, a=2.0)
    assert c2 > c1


def test_hypotheses_for_inverse_distance_well(default_grid):
    rep = F.check_V_hypotheses(PotentialSpec.inverse_distance_well(2.0, default_grid), default_grid)
    assert rep.all_pass
    assert rep.v1_margin >= 0 and rep.v2_gap > 0 and rep.v3_min_quotient > 0


def test_constant_potential_fails_strict_domination(default_grid):
    rep = F.check_V_hypotheses(V1, default_grid)
    assert rep.v1 and rep.v3 and not rep.v2
    F.require_hypotheses(V1, default_grid)  # the limit problem only needs positivity


def test_negative_potential_rejected(default_grid):
    V = PotentialSpec.constant(-1.0)
    assert not F.check_V_hypotheses(V, default_grid).v3
    with pytest.raises(OutOfHypothesisError):
        F.require_hypotheses(V, default_grid)


def test_increasing_potential_above_limit_rejected(default_grid):
    V = PotentialSpec.from_functions(
        default_grid, lambda r: 1 + 1 / (r + 1), lambda r: -r / (r + 1) ** 2, 1.0
    )
    rep = F.check_V_hypotheses(V, default_grid)
    assert not rep.v2
    with pytest.raises(OutOfHypothesisError):
        F.require_hypotheses(V, default_grid)


def test_potential_without_derivative(default_grid):
    V = PotentialSpec("radial", 1.0, default_grid.nodes, np.ones(default_grid.n))
    with pytest.raises(IncompleteSpecError):
        V.dv_values(default_grid)
    with pytest.raises(IncompleteSpecError):
        F.check_V_hypotheses(V, default_grid)


def test_potential_shape_and_kind_errors(default_grid):
    with pytest.raises(ShapeError):
        PotentialSpec("radial", 1.0, default_grid.nodes, np.ones(3))
    with pytest.raises(IncompleteSpecError):
        PotentialSpec("radial", 1.0)
    with pytest.raises(ValueError):
        PotentialSpec("bogus", 1.0)


def test_well_sampling_without_grid_matches_grid_sampling(default_grid):
    a = PotentialSpec.inverse_distance_well(2.0)
    b = PotentialSpec.inverse_distance_well(2.0, default_grid)
    assert np.allclose(a.values(default_grid), b.values(default_grid), atol=1e-6)
    assert np.allclose(a.dv_values(default_grid), b.dv_values(default_grid), atol=1e-6)
    assert a.limit().is_constant and a.limit().v_inf == 2.0


def test_potential_csv_roundtrip(tmp_path, default_grid):
    V = PotentialSpec.inverse_distance_well(2.0, default_grid)
    path = tmp_path / "v.csv"
    F.write_potential_csv(path, V, default_grid)
    W = F.read_potential_csv(path, v_inf=2.0)
    assert np.allclose(W.values(default_grid), V.values(default_grid), rtol=1e-15)
    assert np.allclose(W.dv_values(default_grid), V.dv_values(default_grid), rtol=1e-15)


def test_lower_bound_helpers():
    assert F.pnorm_lower_bound(2.0, 3.0) == pytest.approx((3 * 2 * 4 / (2 * 7)) ** 0.5)
    bd = F.EnergyBreakdown(1.0, 2.0, 3.0, 0.0, 4.0, 5.0)
    assert F.energy_lower_bound(bd, ProblemParams(p=3.0)) == pytest.approx(5 * 2 / 14)
