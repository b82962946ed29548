from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carnot.algebra import catalog
from carnot.decomposition import (
    build_scheme,
    commutator_template,
    decompose,
    estimate_constants,
    sup_euclidean_on_unit_sphere,
)
from carnot.group import CarnotGroup, load_group
from carnot.horizontal import lift

from conftest import GROUPS

K0 = {"heisenberg(1)": 6, "heisenberg(2)": 8, "engel": 16, "free_nilpotent(2,3)": 26}


@pytest.fixture(scope="module")
def schemes():
    return {name: build_scheme(load_group(name)) for name in GROUPS}


@pytest.mark.parametrize("name", GROUPS)
def test_word_lengths(schemes, name):
    scheme = schemes[name]
    assert scheme.k0 == K0[name]
    assert all(j < scheme.group.n for j in scheme.template)


def test_abelian_scheme_is_one_letter_per_direction():
    g = CarnotGroup.from_algebra(catalog("abelian(3)"))
    scheme = build_scheme(g)
    assert scheme.k0 == 3
    assert decompose(scheme, (1, -2, 5)).letters == ((0, 1), (1, -2), (2, 5))
    assert estimate_constants(scheme, 200).C0 == pytest.approx(1.0)


def test_commutator_template_shape():
    assert commutator_template([0, 1]) == [(0, 0, 1), (1, 1, 1), (0, 0, -1), (1, 1, -1)]
    assert len(commutator_template([0, 0, 1])) == 10


def test_heisenberg_rectangle(schemes):
    scheme = schemes["heisenberg(1)"]
    g = scheme.group
    word = decompose(scheme, (0, 0, 1))
    assert word.nonzero() == [(0, 1), (1, 1), (0, -1), (1, -1)]
    assert g.product((1, 0, 0), (0, 1, 0), (-1, 0, 0), (0, -1, 0)) == (0, 0, 1)


def test_pure_generator_direction(schemes):
    word = decompose(schemes["heisenberg(1)"], (Fraction(3, 2), 0, 0))
    assert word.nonzero() == [(0, Fraction(3, 2))]


@pytest.mark.parametrize("name", GROUPS)
def test_identity_decomposes_to_zero_word(schemes, name):
    scheme = schemes[name]
    word = decompose(scheme, scheme.group.identity(exact=True))
    assert word.nonzero() == []


@pytest.mark.parametrize("name", GROUPS)
def test_float_reconstruction_on_random_targets(schemes, name):
    scheme = schemes[name]
    rng = np.random.default_rng(0)
    for xi in rng.uniform(-3, 3, size=(200, scheme.group.N)):
        word = decompose(scheme, xi, exact=False)
        assert np.abs(word.product - xi).max() <= 1e-9


@pytest.mark.parametrize("name", GROUPS)
@given(data=st.data())
def test_exact_reconstruction(schemes, name, data):
    scheme = schemes[name]
    xi = tuple(data.draw(st.fractions(-4, 4, max_denominator=9)) for _ in range(scheme.group.N))
    word = decompose(scheme, xi)
    assert word.product == xi
    assert scheme.group.product(*word.elements(scheme.group)) == xi


@pytest.mark.parametrize("name", GROUPS)
def test_amplitudes_scale_with_dilation(schemes, name):
    scheme = schemes[name]
    g = scheme.group
    xi = np.random.default_rng(1).uniform(-1, 1, g.N)
    base = decompose(scheme, xi, exact=False).amplitudes()
    scaled = decompose(scheme, g.dilate(0.3, xi), exact=False).amplitudes()
    assert np.allclose(scaled, 0.3 * base, atol=1e-9)


def test_word_as_control_lifts_to_target(schemes):
    scheme = schemes["engel"]
    g = scheme.group
    xi = (Fraction(1, 2), Fraction(-1), Fraction(2, 3), Fraction(1, 4))
    word = decompose(scheme, xi)
    curve = lift(g, g.identity(exact=True), word.as_control(g.n))
    assert tuple(curve(curve.end)) == xi


@pytest.mark.parametrize("name", GROUPS)
def test_C0_stable_and_monotone(schemes, name):
    scheme = schemes[name]
    values = [estimate_constants(scheme, 300, seed).C0 for seed in range(3)]
    assert max(values) / min(values) < 1.1
    more = estimate_constants(scheme, 600, 0).C0
    assert more >= values[0]


@pytest.mark.parametrize("name", GROUPS)
def test_sup_xi_dominates_sampled_sphere(name):
    g = load_group(name)
    rng = np.random.default_rng(3)
    sampled = np.linalg.norm(g.sample_sphere(rng, 5000), axis=1).max()
    assert sampled <= sup_euclidean_on_unit_sphere(g) + 1e-12
