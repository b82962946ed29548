import math
from fractions import Fraction

import numpy as np
import pytest

from carnot.fitting import geometric_grid, refine_grid
from carnot.group import load_group
from carnot.horizontal import (
    Curve,
    HorizontalControl,
    horizontal_ray,
    is_horizontal,
    lift,
    ray_error_study,
    vector_field,
)

from conftest import GROUPS


def test_parabola_lift_exact(heis):
    curve = lift(heis, (0, 0, 0), HorizontalControl.polynomial([[1], [0, 2]]))
    third = Fraction(1, 3)
    assert tuple(curve(third)) == (third, third**2, third**3 / 6)
    assert is_horizontal(heis, curve).symbolic_zero


def test_unit_square_loop_encloses_area(heis):
    sides = [HorizontalControl.constant(v) for v in ([1, 0], [0, 1], [-1, 0], [0, -1])]
    curve = lift(heis, (0, 0, 0), HorizontalControl.concat(*sides))
    assert tuple(curve(4)) == (0, 0, 1)


def test_circle_matches_closed_form(heis):
    # h = (-sin t, cos t) from (1, 0, 0) sweeps area at rate 1/2
    control = HorizontalControl.from_function(lambda t: [-math.sin(t), math.cos(t)], 2 * math.pi, 2)
    curve = lift(heis, (1.0, 0.0, 0.0), control)
    for t in np.linspace(0, 2 * math.pi, 9):
        assert np.allclose(curve(t), [math.cos(t), math.sin(t), 0.5 * t], atol=1e-10)
    assert is_horizontal(heis, curve).passed


@pytest.mark.parametrize("name", GROUPS)
def test_polynomial_lifts_are_symbolically_horizontal(name):
    g = load_group(name)
    coeffs = [[j + 1, -j, Fraction(1, j + 2)] for j in range(g.n)]
    curve = lift(g, tuple(range(g.N)), HorizontalControl.polynomial(coeffs, T=2))
    report = is_horizontal(g, curve)
    assert report.symbolic_zero and report.max_residual == 0


def test_horizontal_velocity_of_lift_matches_fields(heis):
    curve = lift(heis, (0, 0, 0), HorizontalControl.polynomial([[1, 1], [2, -1]]))
    for t in (0.1, 0.5, 0.9):
        h = np.array([1 + t, 2 - t])
        expected = h[0] * vector_field(heis, 0, np.asarray(curve(t), float)) + h[1] * vector_field(heis, 1, np.asarray(curve(t), float))
        assert np.allclose(curve.derivative(t), expected)


def test_non_horizontal_curve_detected(heis):
    straight = Curve.from_polynomials([[0, 1], [0], [0, 1]])
    report = is_horizontal(heis, straight)
    assert not report.passed and not report.symbolic_zero
    sampled = straight.sample(101)
    assert not is_horizontal(heis, sampled, tol=1e-3).passed


def test_vector_field_rejects_vertical_index(heis):
    with pytest.raises(ValueError):
        vector_field(heis, 2, (0, 0, 0))


def test_ray_error_rate_on_parabola(heis):
    curve = lift(heis, (0, 0, 0), HorizontalControl.polynomial([[1], [0, 2]]))
    study = ray_error_study(heis, curve, np.geomspace(1e-1, 1e-4, 20))
    assert study.fit.slope == pytest.approx(1.5, abs=0.05)


def test_ray_is_straight_horizontal_line(heis):
    assert horizontal_ray(heis, (0, 0, 0), [1, 2], Fraction(1, 2)) == (Fraction(1, 2), 1, 0)


@pytest.mark.parametrize("name", GROUPS)
def test_ray_bound_constant_grid_stable(name):
    g = load_group(name)
    coeffs = [[1 - j, 1, j] for j in range(g.n)]
    curve = lift(g, tuple([0] * g.N), HorizontalControl.polynomial(coeffs))
    grid = geometric_grid(1e-1, 3, 10)
    coarse = ray_error_study(g, curve, grid)
    fine = ray_error_study(g, curve, refine_grid(grid))
    assert np.all(coarse.errors <= coarse.C_hat * grid ** coarse.exponent * (1 + 1e-12))
    assert 0 < coarse.C_hat <= fine.C_hat < 2 * coarse.C_hat


def test_control_json_roundtrip():
    ctrl = HorizontalControl.concat(HorizontalControl.polynomial([[1, 2], [0]]), HorizontalControl.constant([0, 1], T=Fraction(1, 2)))
    back = HorizontalControl.from_json(ctrl.to_json())
    assert back.T == Fraction(3, 2) and back.n == 2
    assert np.allclose(back(1.25), ctrl(1.25))


def test_control_validation(heis):
    with pytest.raises(ValueError):
        HorizontalControl.from_json({"segments": [{"duration": 0, "coeffs": [[1], [0]]}]})
    with pytest.raises(ValueError):
        lift(heis, (0, 0, 0), HorizontalControl.constant([1, 0, 0]))
