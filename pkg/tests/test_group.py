import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carnot.decomposition import build_scheme
from carnot.group import (
    CarnotGroup,
    calibrate_norm,
    holder_comparison,
    load_group,
    right_translation_estimate,
    triangle_check,
    word_distance_decay,
    word_distance_estimate,
)
from carnot.algebra import catalog

from conftest import GROUPS


def _rational(rng, N):
    return tuple(Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(N))


def test_associativity_exact(any_group):
    rng = random.Random(1)
    for _ in range(60):
        x, y, z = (_rational(rng, any_group.N) for _ in range(3))
        g = any_group
        assert g.multiply(g.multiply(x, y), z) == g.multiply(x, g.multiply(y, z))


def test_inverse_and_identity_exact(any_group):
    rng = random.Random(2)
    e = any_group.identity(exact=True)
    for _ in range(60):
        x = _rational(rng, any_group.N)
        assert any_group.multiply(x, any_group.inverse(x)) == e
        assert any_group.multiply(e, x) == x == any_group.multiply(x, e)


def test_dilation_is_automorphism_exact(any_group):
    rng = random.Random(3)
    g = any_group
    for _ in range(30):
        x, y = _rational(rng, g.N), _rational(rng, g.N)
        t = Fraction(rng.randint(1, 7), rng.randint(1, 7))
        assert g.dilate(t, g.multiply(x, y)) == g.multiply(g.dilate(t, x), g.dilate(t, y))


@given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_norm_homogeneity_and_left_invariance(t, seed):
    g = load_group("engel")
    rng = np.random.default_rng(seed)
    p, q, a = g.sample_box(rng, 3, -2, 2)
    assert g.distance(g.dilate(t, p), g.dilate(t, q)) == pytest.approx(t * g.distance(p, q), rel=1e-12)
    assert g.distance(g.multiply(a, p), g.multiply(a, q)) == pytest.approx(g.distance(p, q), rel=1e-10)


def test_norm_symmetric_and_positive(any_group):
    rng = np.random.default_rng(4)
    X = any_group.sample_box(rng, 200)
    assert np.allclose(any_group.norm_batch(X), any_group.norm_batch(-X))
    assert np.all(any_group.norm_batch(X) > 0)
    assert any_group.norm(any_group.identity()) == 0


def test_calibrated_norm_passes_fresh_triangle_samples(any_group):
    report = triangle_check(any_group, 20_000, seed=12345)
    assert report["violations"] == 0
    cert = any_group.norm_data.certificate
    assert cert["confirmation"]["violations"] == 0
    assert "not a proof" in cert["note"]


def test_triangle_check_detects_bad_weights(heis):
    # a heavy weight on the centre breaks subadditivity
    assert triangle_check(heis, 20_000, seed=5, mu=[1, 1, 100])["violations"] > 0
    assert triangle_check(heis, 20_000, seed=5)["violations"] == 0


def test_calibration_is_deterministic():
    raw = CarnotGroup.from_algebra(catalog("engel"))
    a = calibrate_norm(raw, 5_000, seed=9)
    b = calibrate_norm(raw, 5_000, seed=9)
    assert a.mu == b.mu


def test_dimension_mismatch_rejected(heis):
    with pytest.raises(ValueError):
        heis.multiply((1, 2), (1, 2, 3))
    with pytest.raises(ValueError):
        heis.dilate(-1, (1, 2, 3))


@pytest.mark.parametrize("name", GROUPS)
def test_metric_constants_stable_across_seeds(name):
    g = load_group(name)
    K = (-np.ones(g.N), np.ones(g.N))
    k0 = build_scheme(g).k0
    CK = [holder_comparison(g, K, 4_000, seed).C_K for seed in range(3)]
    CR = [right_translation_estimate(g, 2.0, 4_000, seed).C for seed in range(3)]
    CW = [word_distance_estimate(g, k0, 1e-2, 2.0, 400, seed).C for seed in range(3)]
    for values in (CK, CR, CW):
        assert np.all(np.isfinite(values))
        assert max(values) / min(values) < 2


def test_holder_lower_bound_holds_on_samples(heis):
    est = holder_comparison(heis, (-np.ones(3), np.ones(3)), 4_000, 0)
    assert est.C_K >= max(est.lower_ratio, est.upper_ratio)
    with pytest.raises(ValueError):
        holder_comparison(heis, (np.ones(3), np.ones(3)), 10, 0)


@pytest.mark.parametrize("name", GROUPS)
def test_word_distance_decay_exponent(name):
    g = load_group(name)
    k0 = build_scheme(g).k0
    decay = word_distance_decay(g, k0, [1e-1, 1e-2, 1e-3, 1e-4], 2.0, 400, 0)
    assert decay["slope"] >= decay["predicted_exponent"] - 0.05
