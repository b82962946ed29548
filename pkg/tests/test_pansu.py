import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carnot.decomposition import build_scheme, calibrated_scheme
from carnot.group import load_group
from carnot.pansu import (
    Box,
    DomainError,
    MapSpecError,
    MetricBall,
    ModulusOfContinuity,
    catalog_map,
    certify_horizontality,
    compose_maps,
    continuity_study,
    convergence_study,
    difference_quotient,
    dilation,
    estimate_modulus,
    extend_to_morphism,
    function_map,
    graded_homomorphism,
    heisenberg_shear,
    horizontal_derivative,
    identity_map,
    is_certified,
    left_translation,
    map_from_spec,
    pansu_derivative,
    polynomial_map,
    region,
    verify_pansu_trick,
    z0,
)
from carnot.polynomial import variables

fracs = st.fractions(-1, 1, max_denominator=8)
H1 = load_group("heisenberg(1)")
SCHEME = build_scheme(H1)
SHEAR = heisenberg_shear([0, 0, 1])


def _exact_maps():
    g2 = load_group("heisenberg(2)")
    eng = load_group("engel")
    return [
        (identity_map(H1), build_scheme(H1)),
        (left_translation(H1, (1, -2, Fraction(1, 3))), SCHEME),
        (dilation(H1, Fraction(3, 2)), SCHEME),
        (graded_homomorphism(H1, [[2, 1], [0, 1]]), SCHEME),
        (graded_homomorphism(g2, [[1, 0, 0, 0], [0, 2, 0, 0], [0, 0, 2, 0], [0, 0, 0, 1]]), build_scheme(g2)),
        (dilation(eng, 2), build_scheme(eng)),
        (left_translation(eng, (1, 0, -1, 2)), build_scheme(eng)),
    ]


@pytest.mark.parametrize("f,scheme", _exact_maps(), ids=lambda v: getattr(v, "name", ""))
def test_difference_quotient_constant_for_exact_maps(f, scheme):
    rng = np.random.default_rng(0)
    G = f.source
    for _ in range(5):
        x = tuple(Fraction(int(v), 4) for v in rng.integers(-4, 5, G.N))
        xi = tuple(Fraction(int(v), 3) for v in rng.integers(-3, 4, G.N))
        z = pansu_derivative(f, x, xi, scheme)
        for t in (Fraction(1, 2), Fraction(1, 100)):
            assert difference_quotient(f, x, xi, t) == z


def test_shear_closed_forms():
    x = (Fraction(1, 3), Fraction(2), Fraction(-1))
    a, b, c = Fraction(1, 2), Fraction(1, 5), Fraction(3, 7)
    z = pansu_derivative(SHEAR, x, (a, b, c), SCHEME)
    assert z == (a, b + 2 * x[0] * a, c)
    for t in (Fraction(1, 10), Fraction(1, 1000)):
        R = difference_quotient(SHEAR, x, (a, b, c), t)
        assert H1.multiply(H1.inverse(R), z) == (0, -a * a * t, a**3 * t / 3)


def test_shear_components():
    x1, x2, x3 = variables(3)
    assert SHEAR.components == (x1, x2 + x1 * x1, x3 + x1 * x1 * x1 * Fraction(1, 6))


def test_horizontal_derivative_of_dilation():
    f = dilation(H1, 3)
    assert horizontal_derivative(f, (1, 2, 3), (1, Fraction(1, 2))) == (0, Fraction(3, 2), 0)


@given(st.tuples(fracs, fracs, fracs), st.tuples(fracs, fracs, fracs), st.fractions(Fraction(1, 1000), 1))
def test_pansu_trick_is_exact(x, xi, t):
    res = verify_pansu_trick(SHEAR, x, xi, SCHEME, t)
    assert res.direct == res.factored and res.residual == 0


def test_pansu_trick_float_mode_roundoff():
    rng = np.random.default_rng(1)
    for _ in range(20):
        res = verify_pansu_trick(SHEAR, rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3), SCHEME, 0.05, exact=False)
        # the homogeneous distance takes a square root of the centre roundoff
        assert np.abs(res.direct - res.factored).max() <= 1e-10


def test_z0_equals_z_for_homomorphism():
    f = graded_homomorphism(H1, [[1, 1], [0, 2]])
    x, xi = (1, 0, 2), (Fraction(1, 2), 1, Fraction(-1, 3))
    assert z0(f, x, xi, SCHEME, Fraction(1, 10)) == pansu_derivative(f, x, xi, SCHEME)


def test_morphism_extension_rejects_non_morphisms():
    eng = load_group("engel")
    with pytest.raises(MapSpecError):
        extend_to_morphism(eng, eng, [[1, 1], [0, 1]])
    with pytest.raises(MapSpecError):
        graded_homomorphism(H1, [[1, 0, 0], [0, 1, 0]])
    assert extend_to_morphism(H1, H1, [[2, 0], [0, 3]])[2][2] == 6


def test_composition_and_specs():
    f = map_from_spec({"kind": "composition", "group": "heisenberg(1)",
                       "maps": [{"kind": "dilation", "factor": 2}, {"kind": "left_translation", "point": ["1/2", 0, 0]}]})
    assert f((1, 0, 0)) == (Fraction(5, 2), 0, 0)
    assert is_certified(f)
    g = compose_maps([dilation(H1, 2), dilation(H1, Fraction(1, 2))])
    assert g((1, 2, 3)) == (1, 2, 3)
    with pytest.raises(MapSpecError):
        catalog_map("warp", {}, H1)
    with pytest.raises(MapSpecError):
        catalog_map("left_translation", {"point": [1, 2]}, H1)


def test_sampled_certificate_separates_contact_and_non_contact_maps():
    x1, x2, x3 = variables(3)
    good = polynomial_map(H1, H1, SHEAR.components)
    bad = polynomial_map(H1, H1, (x1, x2, x3 + x1))
    assert is_certified(good) and not is_certified(bad)
    fd = function_map(H1, H1, lambda x: SHEAR(x, exact=False))
    assert fd.gradient_method == "finite-difference"
    assert certify_horizontality(fd, curves=4)["passed"]
    assert np.allclose(fd.gradients(np.array([0.3, 0.1, 0.0])), SHEAR.gradients(np.array([0.3, 0.1, 0.0])), atol=1e-8)


def test_domain_is_enforced():
    f = SHEAR.with_domain(Box.cube(3, 1.0))
    with pytest.raises(DomainError):
        f((2, 0, 0))
    with pytest.raises(DomainError):
        difference_quotient(f, (0.9, 0, 0), (1, 0, 0), 0.5)


def test_box_distance_to_complement_oracle():
    scheme = calibrated_scheme(H1, 500)
    reg = region(Box.cube(3, 1.0), Box.cube(3, 4.0), scheme)
    # the nearest boundary point is on the centre faces: |z - a3 + (a1 b - a2 a)/2| = r^2
    assert reg.distance_to_complement == pytest.approx((math.sqrt(13) - 1) / 2, rel=1e-9)
    expected_tA = reg.distance_to_complement / (2 * 6 * reg.C0 * reg.sup_xi)
    assert reg.t_A == pytest.approx(expected_tA)


def test_region_variants():
    scheme = calibrated_scheme(H1, 300)
    A = Box.cube(3, 0.5)
    ball = region(A, MetricBall((0, 0, 0), 3.0), scheme)
    assert ball.distance_to_complement == pytest.approx(3.0 - max(H1.norm(c) for c in A.corners()))
    whole = region(A, None, scheme, t_max=0.7)
    assert math.isinf(whole.distance_to_complement) and whole.t_A == 0.7
    near = region(A, Box.cube(3, 1.0), scheme)
    far = region(A, Box.cube(3, 2.0), scheme)
    assert near.t_A < far.t_A
    with pytest.raises(ValueError):
        region(Box.cube(3, 2.0), Box.cube(3, 1.0), scheme)


@given(st.lists(st.tuples(st.floats(1e-6, 10), st.floats(0, 10)), min_size=1, max_size=40))
def test_modulus_invariants(pairs):
    d, o = zip(*pairs)
    w = ModulusOfContinuity.from_pairs(d, o)
    assert all(w.check().values())
    assert np.all(np.asarray(w(np.array(d))) >= np.array(o) - 1e-9 * (1 + np.array(o)))


def test_modulus_of_shear_is_lipschitz():
    scheme = calibrated_scheme(H1, 300)
    reg = region(Box.cube(3, 1.0), Box.cube(3, 4.0), scheme)
    w = estimate_modulus(SHEAR, reg, 400)
    # grad f_2 = (2 x1, 1, 0) so oscillations are 2 |x1 - y1| <= 2 d(x, y)
    assert w.lipschitz == pytest.approx(2.0, rel=1e-3)
    assert ModulusOfContinuity.from_pairs([1, 2], [0, 0]).degenerate


def test_convergence_and_continuity_on_small_grid():
    scheme = calibrated_scheme(H1, 300)
    reg = region(Box.cube(3, 1.0), Box.cube(3, 4.0), scheme)
    omega = ModulusOfContinuity(np.array([0.0, 1.0]), np.array([0.0, 2.0]))
    t = np.geomspace(reg.t_A, reg.t_A * 1e-2, 6)
    study = convergence_study(SHEAR, reg, scheme, x_samples=1, xi_set=np.eye(3), t_grid=t, omega=omega)
    errs = study.check.errors
    assert np.all(np.diff(errs) < 0)
    assert study.check.stability_ratio < 2
    cont = continuity_study(SHEAR, reg, scheme, x_samples=2, radii=[1.0, 1e-2], xi_set=np.eye(3))
    assert cont.values[1] < cont.values[0]


@pytest.mark.parametrize("name", ["heisenberg(2)", "engel", "free_nilpotent(2,3)"])
def test_identity_map_derivative_reconstructs_direction(name):
    g = load_group(name)
    scheme = build_scheme(g)
    xi = tuple(Fraction(k - 2, 3) for k in range(g.N))
    assert pansu_derivative(identity_map(g), (1,) * g.N, xi, scheme) == xi


def test_derivative_is_injective_on_sampled_directions():
    x = (Fraction(1, 2), 0, 0)
    xis = [tuple(Fraction(int(v), 5) for v in row) for row in np.random.default_rng(2).integers(-5, 6, (40, 3))]
    images = {pansu_derivative(SHEAR, x, xi, SCHEME) for xi in set(xis)}
    assert len(images) == len(set(xis))
