import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from horseshoes import dynamics
from horseshoes.errors import OrbitEscape

unit = st.floats(0.0, 1.0, exclude_max=True, allow_nan=False)
CAT = np.array([[2.0, 1.0], [1.0, 1.0]])


@given(unit, unit)
def test_cat_round_trip(x, y):
    s = dynamics.cat_map()
    p = np.array([[x, y]])
    back = s.inverse(s.forward(p))
    assert s.distance(back, p)[0] < 1e-12


@given(unit, unit, st.floats(0.0, 0.05))
def test_perturbed_cat_round_trip(x, y, kappa):
    s = dynamics.perturbed_cat_map(kappa)
    p = np.array([[x, y]])
    assert s.distance(s.inverse(s.forward(p)), p)[0] < 1e-12
    assert s.distance(s.forward(s.inverse(p)), p)[0] < 1e-12


@given(st.floats(-1.0, 1.0), st.floats(-0.3, 0.3))
def test_henon_round_trip(x, y):
    s = dynamics.henon()
    p = np.array([[x, y]])
    assert np.allclose(s.inverse(s.forward(p)), p, atol=1e-12)


@pytest.mark.parametrize("name", ["baker", "linear_horseshoe"])
@given(x=st.floats(0.0, 1.0, exclude_max=True), y=st.floats(0.0, 1.0, exclude_max=True))
def test_piecewise_round_trip(name, x, y):
    s = dynamics.make_system(name)
    p = np.array([[x, y]])
    if name == "linear_horseshoe" and 1 / 3 <= x < 2 / 3:
        return      # middle strip leaves the square
    assert np.allclose(s.inverse(s.forward(p)), p, atol=1e-12)


@pytest.mark.parametrize("name,params", [("cat", {}), ("perturbed_cat", {"kappa": 0.04}),
                                         ("henon", {}), ("rotation", {}),
                                         ("henon_horseshoe", {})])
def test_jacobian_matches_finite_differences(name, params, rng):
    # central differences are the oracle; smooth maps only
    s = dynamics.make_system(name, **params)
    (x0, x1), (y0, y1) = s.bounds
    pts = np.column_stack([rng.uniform(x0 + 0.1 * (x1 - x0), x1 - 0.1 * (x1 - x0), 20),
                           rng.uniform(y0 + 0.1 * (y1 - y0), y1 - 0.1 * (y1 - y0), 20)])
    h = 1e-6
    jac = s.jacobian(pts)
    for k in range(2):
        d = np.zeros(2)
        d[k] = h
        diff = s.displacement(s.forward(pts - d), s.forward(pts + d)) / (2 * h)
        assert np.allclose(jac[:, :, k], diff, atol=1e-6)


def test_cat_derivative_powers():
    s = dynamics.cat_map()
    x = np.array([0.3, 0.7])
    assert np.allclose(dynamics.derivative(s, x, 3), np.linalg.matrix_power(CAT, 3))
    assert np.allclose(dynamics.derivative(s, x, -2), np.linalg.matrix_power(np.linalg.inv(CAT), 2))
    assert np.allclose(dynamics.step(s, dynamics.step(s, x, 5), -5), x, atol=1e-12)


def test_area_preserving_flags(rng):
    pts = rng.uniform(0, 1, (50, 2))
    for name, f in dynamics.BUILTINS.items():
        s = f()
        if s.area_preserving:
            det = np.linalg.det(s.jacobian(pts))
            assert np.allclose(np.abs(det), 1.0), name


@given(unit, unit, unit, unit)
def test_torus_distance_symmetric_and_bounded(a, b, c, d):
    p, q = np.array([a, b]), np.array([c, d])
    s = dynamics.cat_map()
    assert s.distance(p, q) == s.distance(q, p)
    assert s.distance(p, q) <= math.sqrt(0.5) + 1e-15
    assert abs(dynamics.torus_distance(p, q) - s.distance(p, q)) < 1e-12


def test_rotation_is_an_isometry(rng):
    s = dynamics.rotation()
    p, q = rng.uniform(0, 1, (100, 2)), rng.uniform(0, 1, (100, 2))
    assert np.allclose(s.distance(p, q), s.distance(s.forward(p), s.forward(q)), atol=1e-12)


def test_sample_orbit_is_deterministic_and_frozen():
    s = dynamics.cat_map()
    a = dynamics.sample_orbit(s, 7, 1000)
    b = dynamics.sample_orbit(s, 7, 1000)
    assert np.array_equal(a.points, b.points)
    assert not a.points.flags.writeable
    assert len(a) == 1000
    assert np.allclose(s.distance(s.forward(a.points[:-1]), a.points[1:]), 0, atol=1e-12)


def test_baker_orbit_follows_the_map():
    s = dynamics.baker_map()
    o = dynamics.sample_orbit(s, 3, 5000)
    assert np.all((o.points >= 0) & (o.points < 1))
    assert np.allclose(s.forward(o.points[:-1]), o.points[1:], atol=1e-12)


def test_henon_escape_raises():
    with pytest.raises(OrbitEscape):
        dynamics.orbit_from(dynamics.henon(), [1.9, 0.9], 100)


def test_bad_names_and_parameters():
    with pytest.raises(ValueError):
        dynamics.make_system("nope")
    with pytest.raises(ValueError):
        dynamics.perturbed_cat_map(0.2)
    with pytest.raises(ValueError):
        dynamics.henon(1.4, 0.0)


def test_henon_horseshoe_square_is_mapped_across():
    # for a = 6 the fixed points lie in the declared square
    s = dynamics.henon_horseshoe()
    a, b = s.params
    R = s.bounds[0][1]
    x = (-(1 - b) + math.sqrt((1 - b) ** 2 + 4 * a)) / (2 * a)
    assert abs(x) < R
    assert np.allclose(s.forward([x, b * x]), [[x, b * x]])
