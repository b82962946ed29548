import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carnot.algebra import catalog
from carnot.bch import GroupLaw, compute_group_law, verify_group_law
from carnot.polynomial import variables

from oracles import REPS, matrix_product

rationals = st.fractions(min_value=-2, max_value=2, max_denominator=5)


@pytest.fixture(scope="module", params=list(REPS))
def law_and_rep(request):
    return compute_group_law(catalog(request.param)), REPS[request.param]()


def _vec(rng, N):
    return tuple(Fraction(rng.randint(-6, 6), rng.randint(1, 4)) for _ in range(N))


def test_structural_checks_pass(law_and_rep):
    law, _ = law_and_rep
    diag = verify_group_law(law)
    assert diag.passed, str(diag)


def test_law_agrees_with_matrix_exponential(law_and_rep):
    law, basis = law_and_rep
    rng = random.Random(7)
    for _ in range(8):
        x, y = _vec(rng, law.N), _vec(rng, law.N)
        ours = tuple(a + b + q for a, b, q in zip(x, y, law.evaluate(x, y)))
        assert ours == matrix_product(basis, x, y)


def test_heisenberg_closed_form():
    law = compute_group_law(catalog("heisenberg(1)"))
    x1, x2, x3, y1, y2, y3 = variables(6)
    assert law.Q[0].is_zero() and law.Q[1].is_zero()
    assert law.Q[2] == (x1 * y2 - x2 * y1) * Fraction(1, 2)


def test_engel_degree_three_term():
    law = compute_group_law(catalog("engel"))
    # [x,[x,y]] and [y,[y,x]] carry 1/12
    x = (Fraction(1), 0, 0, 0)
    y = (0, Fraction(1), 0, 0)
    assert law.evaluate(x, y) == (0, 0, Fraction(1, 2), Fraction(1, 12))


@given(st.lists(rationals, min_size=4, max_size=4), st.lists(rationals, min_size=4, max_size=4))
def test_engel_batch_matches_exact(x, y):
    law = compute_group_law(catalog("engel"))
    exact = np.array([float(v) for v in law.evaluate(x, y)])
    batch = law.evaluate_batch(np.array([x], float), np.array([y], float))[0]
    assert np.allclose(batch, exact, atol=1e-12)


def test_abelian_law_is_zero():
    law = compute_group_law(catalog("abelian(3)"))
    assert all(q.is_zero() for q in law.Q)
    assert verify_group_law(law).passed


def test_broken_law_detected():
    good = compute_group_law(catalog("heisenberg(1)"))
    x1, x2, x3, y1, y2, y3 = variables(6)
    broken = GroupLaw(good.algebra, (x1 * y1, good.Q[1], good.Q[2] + x3))
    diag = verify_group_law(broken)
    assert not diag["horizontal_vanishing"].passed
    assert not diag["antisymmetric_factors"].passed
    assert not diag["homogeneity"].passed
    assert not diag["lower_degree_dependence"].passed


def test_describe_and_json():
    law = compute_group_law(catalog("heisenberg(1)"))
    assert "Q3 = " in law.describe()
    data = law.to_json()
    assert data["variables"][0] == "x1" and len(data["Q"]) == 3
