from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carnot.polynomial import SparsePolynomial, is_exact, polyval_exact, variables

rationals = st.fractions(min_value=-3, max_value=3, max_denominator=7)


@st.composite
def polys(draw, nvars=2, max_terms=4, max_deg=3):
    terms = {}
    for _ in range(draw(st.integers(0, max_terms))):
        mono = tuple(draw(st.integers(0, max_deg)) for _ in range(nvars))
        terms[mono] = draw(rationals)
    return SparsePolynomial(nvars, terms)


points = st.lists(rationals, min_size=2, max_size=2)


@given(polys(), polys(), points)
def test_ring_operations_commute_with_evaluation(p, q, x):
    assert (p + q).evaluate(x) == p.evaluate(x) + q.evaluate(x)
    assert (p * q).evaluate(x) == p.evaluate(x) * q.evaluate(x)
    assert (p - q).evaluate(x) == p.evaluate(x) - q.evaluate(x)


@given(polys(), polys(), polys())
def test_distributive(p, q, r):
    assert p * (q + r) == p * q + p * r


@given(polys())
def test_antiderivative_inverts_derivative(p):
    for var in range(2):
        assert p.antiderivative(var).derivative(var) == p


@given(polys(), polys(), polys(), points)
def test_composition_matches_nested_evaluation(p, a, b, x):
    composed = p.compose([a, b])
    assert composed.evaluate(x) == p.evaluate([a.evaluate(x), b.evaluate(x)])


@given(polys(), points)
def test_float_evaluation_close_to_exact(p, x):
    exact = p.evaluate(x)
    approx = p.evaluate([float(v) for v in x])
    assert isinstance(approx, float)
    assert approx == pytest.approx(float(exact), abs=1e-12)


@given(polys(), st.lists(points, min_size=1, max_size=5))
def test_batch_evaluation(p, pts):
    arr = np.array([[float(v) for v in pt] for pt in pts])
    expected = [float(p.evaluate(pt)) for pt in pts]
    assert np.allclose(p.evaluate_batch(arr), expected, atol=1e-10)


def test_zero_coefficients_dropped_and_ints_become_fractions():
    p = SparsePolynomial(2, {(1, 0): 0, (0, 1): 3})
    assert list(p.terms) == [(0, 1)]
    assert isinstance(p.terms[(0, 1)], Fraction)
    assert SparsePolynomial.zero(2).is_zero()


def test_subs_keeps_variables():
    x, y = variables(2)
    p = x * x * y + y
    r = p.subs({0: 2})
    assert r.nvars == 2
    assert r == y * 5


def test_weighted_degree_and_to_string():
    x, y, z = variables(3)
    p = x * y * Fraction(1, 2) - z
    assert p.to_string(["a", "b", "c"]) == "1/2*a*b - c"
    assert {p.weighted_degree(m, [1, 1, 2]) for m in p.terms} == {2}


def test_univariate_and_horner():
    p = SparsePolynomial.univariate([1, 0, 3])
    assert p.evaluate([Fraction(2)]) == 13 == polyval_exact([1, 0, 3], 2)


def test_bad_monomials_rejected():
    with pytest.raises(ValueError):
        SparsePolynomial(2, {(1,): 1})
    with pytest.raises(ValueError):
        SparsePolynomial(1, {(-1,): 1})
    with pytest.raises(ValueError):
        variables(2)[0].evaluate([1])


def test_is_exact():
    assert is_exact(3) and is_exact(Fraction(1, 3))
    assert not is_exact(0.5) and not is_exact(True)
