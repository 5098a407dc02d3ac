import math

import numpy as np
import pytest

from kirchhoff import radial
from kirchhoff.errors import InvalidExponentError, InvalidGridError, InvalidScaleError, ShapeError

import oracles


def test_unit_ball_volume():
    g = radial.make_grid(1.0, 16)
    assert radial.quad(g, np.ones(g.n)) == pytest.approx(4 * math.pi / 3, rel=1e-10)


@pytest.mark.parametrize("r_max,n", [(20.0, 2048), (7.3, 100), (1.0, 17)])
def test_volume_exact_on_any_grid(r_max, n):
    g = radial.make_grid(r_max, n)
    assert radial.quad(g, np.ones(n)) == pytest.approx(4 * math.pi * r_max**3 / 3, rel=1e-10)


def test_grid_layout():
    g = radial.make_grid(20.0, 2048)
    assert g.weights[0] == 0.0
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 20.0
    assert np.all(np.diff(g.nodes) > 0)
    assert np.all(g.weights >= 0)
    assert g.h == pytest.approx(20.0 / 2047)


@pytest.mark.parametrize("r_max,n", [(0.0, 100), (-1.0, 100), (1.0, 15), (float("nan"), 100), (1.0, 20.5)])
def test_invalid_grid(r_max, n):
    with pytest.raises(InvalidGridError):
        radial.make_grid(r_max, n)


def test_gaussian_quadratures():
    g = radial.make_grid(12.0, 4096)
    r = g.nodes
    assert radial.quad(g, np.exp(-r**2)) == pytest.approx(math.pi**1.5, rel=1e-6)
    assert radial.quad(g, np.exp(-2 * r**2)) == pytest.approx((math.pi / 2) ** 1.5, rel=1e-6)
    assert radial.quad(g, np.zeros(g.n)) == 0.0


def test_quad_shape_error(default_grid):
    with pytest.raises(ShapeError):
        radial.quad(default_grid, np.ones(10))


def test_quad_linear(default_grid, rng):
    f, h = rng.normal(size=(2, default_grid.n))
    lhs = radial.quad(default_grid, 2.5 * f - 0.75 * h)
    rhs = 2.5 * radial.quad(default_grid, f) - 0.75 * radial.quad(default_grid, h)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)


def test_quad_converges_second_order():
    errs = []
    exact = (math.pi / 2) ** 1.5
    for n in (65, 129, 257):
        g = radial.make_grid(8.0, n)
        errs.append(abs(radial.quad(g, np.exp(-2 * g.nodes**2)) - exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 2.0)


def test_d_dr_linear_and_constant(default_grid):
    g = default_grid
    d = radial.d_dr(g, 3.0 * g.nodes)
    assert np.allclose(d[1:], 3.0, atol=1e-8)
    assert np.all(radial.d_dr(g, np.ones(g.n)) == 0.0)
    assert d[0] == 0.0


def test_d_dr_second_order():
    errs = []
    for n in (257, 513, 1025):
        g = radial.make_grid(8.0, n)
        r = g.nodes
        d = radial.d_dr(g, np.exp(-r**2))
        errs.append(np.max(np.abs(d - (-2 * r * np.exp(-r**2)))[1:-1]))
    order = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
    assert min(order) >= 1.9


def test_gaussian_norms_against_symbolic_integrals(default_grid):
    exact = oracles.gaussian_integrals(1.0, 3.0)
    nm = radial.norms(radial.gaussian(default_grid), q=4)
    assert nm["l2sq"] == pytest.approx(exact["l2sq"], rel=1e-6)
    assert nm["dirichlet"] == pytest.approx(exact["dirichlet"], rel=1e-5)
    assert nm["lq"] == pytest.approx(exact["lq"], rel=1e-6)
    assert exact["dirichlet"] == pytest.approx(3 * (math.pi / 2) ** 1.5, rel=1e-14)


def test_norms_zero_and_bad_exponent(default_grid):
    z = radial.RadialFunction.zeros(default_grid)
    assert radial.norms(z, q=3) == {"dirichlet": 0.0, "l2sq": 0.0, "lq": 0.0}
    with pytest.raises(InvalidExponentError):
        radial.norms(z, q=0.5)


def test_laplacian_is_riesz_representative(default_grid, rng):
    from conftest import random_smooth_profile

    u = random_smooth_profile(default_grid, rng)
    lhs = radial.quad(default_grid, radial.laplacian(default_grid, u) * u.values)
    assert lhs == pytest.approx(radial.dirichlet(default_grid, u), rel=1e-12)


def test_laplacian_of_gaussian_away_from_origin():
    # the end-corrected weights only perturb the first few cells
    g = radial.make_grid(10.0, 4001)
    r = g.nodes
    lap = radial.laplacian(g, np.exp(-r**2))
    exact = (6 - 4 * r**2) * np.exp(-r**2)
    far = r >= 1.0
    assert np.max(np.abs(lap - exact)[far]) < 1e-4


def test_function_invariants(default_grid):
    v = np.ones(default_grid.n)
    with pytest.raises(ValueError):
        radial.RadialFunction(default_grid, v)
    v[-1] = 0.0
    v[3] = np.nan
    with pytest.raises(ValueError):
        radial.RadialFunction(default_grid, v)
    with pytest.raises(ShapeError):
        radial.RadialFunction(default_grid, np.zeros(5))


def test_rescale_identity_and_errors(default_grid):
    u = radial.gaussian(default_grid)
    assert np.array_equal(radial.rescale(u, 1.0).values, u.values)
    for t in (0.0, -1.0, float("inf")):
        with pytest.raises(InvalidScaleError):
            radial.rescale(u, t)


def test_rescale_scaling_laws_t2(default_grid):
    u = radial.gaussian(default_grid)
    ut = radial.rescale(u, 2.0)
    a, b = radial.norms(u, q=4), radial.norms(ut, q=4)
    assert b["l2sq"] / a["l2sq"] == pytest.approx(2**5, rel=1e-4)
    assert b["dirichlet"] / a["dirichlet"] == pytest.approx(2**3, rel=1e-4)
    assert b["lq"] / a["lq"] == pytest.approx(2**7, rel=1e-4)


@pytest.mark.parametrize("t", [0.25, 0.5, 0.8, 1.7, 3.0, 4.0])
def test_rescale_scaling_laws_range(default_grid, t):
    u = radial.gaussian(default_grid, width=1.5)
    p = 3.0
    a, b = radial.norms(u, q=p + 1), radial.norms(radial.rescale(u, t), q=p + 1)
    assert b["dirichlet"] / a["dirichlet"] == pytest.approx(t**3, rel=1e-3)
    assert b["l2sq"] / a["l2sq"] == pytest.approx(t**5, rel=1e-3)
    assert b["lq"] / a["lq"] == pytest.approx(t ** (p + 4), rel=1e-3)


def test_profile_csv_roundtrip(tmp_path, default_grid):
    u = radial.gaussian(default_grid, 2.0)
    path = tmp_path / "u.csv"
    radial.write_profile_csv(path, u)
    first = path.read_text().splitlines()[:2]
    assert first == [f"# r_max={default_grid.r_max!r} n={default_grid.n}", "r,value"]
    v = radial.read_profile_csv(path)
    assert v.grid.same_as(default_grid)
    assert np.array_equal(v.values, u.values)


def test_profile_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("r,value\n0,1\n")
    with pytest.raises(ValueError):
        radial.read_profile_csv(path)
