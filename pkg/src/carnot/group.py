"""Carnot group arithmetic, dilations, homogeneous norm and metric estimates.

Elements are plain coordinate vectors in exponential coordinates.  A tuple or
list of ``int``/``Fraction`` is handled in exact mode (results are tuples of
``Fraction``); anything else is converted to a float ``numpy`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .algebra import StratifiedAlgebra, resolve
from .bch import GroupLaw, compute_group_law
from .fitting import loglog_slope
from .polynomial import is_exact


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class HomogeneousNorm:
    mu: tuple[float, ...]
    certificate: dict = field(default_factory=dict)


def _exact(x) -> bool:
    return not isinstance(x, np.ndarray) and all(is_exact(v) for v in x)


@dataclass(frozen=True, eq=False)
class CarnotGroup:
    algebra: StratifiedAlgebra
    law: GroupLaw
    norm_data: HomogeneousNorm | None = None

    @classmethod
    def from_algebra(cls, algebra: StratifiedAlgebra) -> "CarnotGroup":
        return cls(algebra, compute_group_law(algebra))

    @property
    def name(self) -> str:
        return self.algebra.name

    @property
    def N(self) -> int:
        return self.algebra.N

    @property
    def n(self) -> int:
        return self.algebra.n

    @property
    def s(self) -> int:
        return self.algebra.s

    @property
    def degrees(self) -> np.ndarray:
        return np.array(self.algebra.degrees)

    @property
    def mu(self) -> np.ndarray:
        if self.norm_data is None:
            return np.ones(self.N)
        return np.array(self.norm_data.mu, float)

    def with_norm(self, norm: HomogeneousNorm) -> "CarnotGroup":
        return replace(self, norm_data=norm)

    # -- element arithmetic ----------------------------------------------

    def _check(self, *elements):
        for x in elements:
            if len(x) != self.N:
                raise ValueError(f"element of dimension {len(x)} used in {self.name} (N = {self.N})")

    def element(self, x):
        self._check(x)
        if _exact(x):
            return tuple(Fraction(v) for v in x)
        return np.asarray(x, dtype=float)

    def identity(self, exact: bool = False):
        return tuple([Fraction(0)] * self.N) if exact else np.zeros(self.N)

    def multiply(self, x, y):
        self._check(x, y)
        if _exact(x) and _exact(y):
            q = self.law.evaluate(x, y)
            return tuple(Fraction(a) + Fraction(b) + c for a, b, c in zip(x, y, q))
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return x + y + self.law.evaluate(x, y)

    def product(self, *elements):
        if not elements:
            return self.identity()
        acc = elements[0]
        for el in elements[1:]:
            acc = self.multiply(acc, el)
        return self.element(acc)

    def inverse(self, x):
        self._check(x)
        if _exact(x):
            return tuple(-Fraction(v) for v in x)
        return -np.asarray(x, float)

    def dilate(self, t, x):
        self._check(x)
        if t < 0:
            raise ValueError(f"dilation factor must be nonnegative, got {t}")
        if _exact(x) and is_exact(t):
            t = Fraction(t)
            return tuple(t**d * Fraction(v) for d, v in zip(self.algebra.degrees, x))
        return float(t) ** self.degrees * np.asarray(x, float)

    def norm(self, x) -> float:
        self._check(x)
        x = np.array([float(v) for v in x])
        return float(np.max(self.mu * np.abs(x) ** (1.0 / self.degrees)))

    def distance(self, x, y) -> float:
        return self.norm(self.multiply(self.inverse(x), y))

    # -- batched float versions --------------------------------------------

    def multiply_batch(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        Y = np.atleast_2d(np.asarray(Y, float))
        X, Y = np.broadcast_arrays(X, Y)
        return X + Y + self.law.evaluate_batch(X, Y)

    def dilate_batch(self, t, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        t = np.asarray(t, float)
        scale = t[:, None] ** self.degrees if t.ndim else t**self.degrees
        return scale * X

    def norm_batch(self, X: np.ndarray, mu: np.ndarray | None = None) -> np.ndarray:
        mu = self.mu if mu is None else mu
        return np.max(mu * np.abs(np.atleast_2d(X)) ** (1.0 / self.degrees), axis=1)

    def distance_batch(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return self.norm_batch(self.multiply_batch(-np.asarray(X, float), Y))

    def to_sphere(self, X: np.ndarray, mu: np.ndarray | None = None) -> np.ndarray:
        """Project nonzero rows onto the unit sphere of the norm via dilation."""
        X = np.atleast_2d(np.asarray(X, float))
        r = self.norm_batch(X, mu)
        return (1.0 / r)[:, None] ** self.degrees * X

    def sample_box(self, rng: np.random.Generator, size: int, lo=-1.0, hi=1.0) -> np.ndarray:
        return rng.uniform(lo, hi, size=(size, self.N))

    def sample_sphere(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.to_sphere(self.sample_box(rng, size))

    def sample_ball(self, rng: np.random.Generator, size: int, radius: float) -> np.ndarray:
        """Uniform samples in the Euclidean ball of the given radius."""
        g = rng.standard_normal((size, self.N))
        g /= np.linalg.norm(g, axis=1)[:, None]
        return g * (radius * rng.uniform(size=size) ** (1.0 / self.N))[:, None]

    def unit_basis_points(self) -> np.ndarray:
        """The points +-e_i rescaled to norm one."""
        pts = []
        for i in range(self.N):
            e = np.zeros(self.N)
            e[i] = self.mu[i] ** (-float(self.degrees[i]))
            pts += [e, -e]
        return np.array(pts)


@lru_cache(maxsize=None)
def load_group(name: str, calibrated: bool = True, samples: int = 20_000, seed: int = 0) -> CarnotGroup:
    """Catalog name or algebra file -> group, with a calibrated norm by default."""
    group = CarnotGroup.from_algebra(resolve(name))
    if calibrated:
        group = group.with_norm(calibrate_norm(group, sample_budget=samples, seed=seed))
    return group


# -- norm calibration ---------------------------------------------------------


def _triangle_margins(group: CarnotGroup, mu: np.ndarray, keep: np.ndarray, X, Y, r) -> np.ndarray:
    """margin = ||x|| + ||y|| - ||xy|| with ||x|| = 1, ||y|| = r, on coordinates ``keep``."""
    mu_k = np.where(keep, mu, 0.0)
    Xs = group.to_sphere(np.where(keep, X, 0.0), mu_k)
    Ys = group.dilate_batch(r, group.to_sphere(np.where(keep, Y, 0.0), mu_k))
    XY = group.multiply_batch(Xs, Ys)
    YX = group.multiply_batch(Ys, Xs)
    worst = np.maximum(group.norm_batch(XY, mu_k), group.norm_batch(YX, mu_k))
    return 1.0 + r - worst


def _pair_samples(group: CarnotGroup, rng: np.random.Generator, size: int):
    X = group.sample_box(rng, size)
    Y = group.sample_box(rng, size)
    r = np.where(np.arange(size) % 2 == 0, 1.0, rng.uniform(0.0, 1.0, size))
    return X, Y, r


def triangle_check(group: CarnotGroup, samples: int, seed: int, mu=None) -> dict:
    """Sample ||xy|| <= ||x|| + ||y|| with ||x|| = 1 and ||y|| in (0, 1]."""
    mu = group.mu if mu is None else np.asarray(mu, float)
    rng = np.random.default_rng(seed)
    X, Y, r = _pair_samples(group, rng, samples)
    margins = _triangle_margins(group, mu, np.ones(group.N, bool), X, Y, r)
    return {
        "samples": int(samples),
        "seed": int(seed),
        "violations": int(np.sum(margins < 0)),
        "min_margin": float(margins.min()),
    }


def calibrate_norm(group: CarnotGroup, sample_budget: int = 100_000, seed: int = 0,
                   bisection_steps: int = 40, max_halvings: int = 40) -> HomogeneousNorm:
    """Find layer weights mu so the max-type homogeneous norm passes sampled triangle checks.

    Layers are handled in order on the quotient by the higher layers (the
    first m coordinates of a product only depend on the first m layers), with
    one common weight per layer: accept 1 if it passes, otherwise halve until
    a passing value is found and bisect between passing and failing values.
    The result is evidence, not proof; the certificate records the sampling.
    """
    deg = group.degrees
    mu = np.ones(group.N)
    rng = np.random.default_rng(seed)
    per_layer = {}
    for m in range(2, group.s + 1):
        keep = deg <= m
        layer = deg == m
        X, Y, r = _pair_samples(group, rng, sample_budget)

        def passes(value: float) -> bool:
            trial = mu.copy()
            trial[layer] = value
            return bool(_triangle_margins(group, trial, keep, X, Y, r).min() >= 0)

        if passes(1.0):
            value = 1.0
        else:
            hi, lo = 1.0, 0.5
            for _ in range(max_halvings):
                if passes(lo):
                    break
                hi, lo = lo, lo / 2
            else:
                raise CalibrationError(f"no passing weight for layer {m} down to {lo:.3g}")
            for _ in range(bisection_steps):
                mid = 0.5 * (lo + hi)
                if passes(mid):
                    lo = mid
                else:
                    hi = mid
            value = lo
        mu[layer] = value
        per_layer[m] = value

    # fresh confirmation; shrink the top layers a little while violations remain
    for attempt in range(20):
        report = triangle_check(group, sample_budget, seed + 1, mu)
        if report["violations"] == 0:
            break
        mu[deg >= 2] *= 0.98
    else:
        raise CalibrationError(f"calibration failed, smallest margin {report['min_margin']:.3e}")
    certificate = {
        "method": "layer-wise bisection on sampled triangle inequality",
        "calibration_seed": int(seed),
        "confirmation": report,
        "sample_budget": int(sample_budget),
        "layer_weights": {str(k): float(v) for k, v in per_layer.items()},
        "shrink_steps": attempt,
        "note": "sampling evidence, not a proof",
    }
    return HomogeneousNorm(tuple(float(v) for v in mu), certificate)


# -- metric comparison estimates ----------------------------------------------


@dataclass(frozen=True)
class HolderEstimate:
    C_K: float
    lower_ratio: float
    upper_ratio: float
    samples: int
    seed: int


def holder_ratios(group: CarnotGroup, X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per pair: |x - y| / d(x, y) and d(x, y) / |x - y|^(1/s)."""
    d = group.distance_batch(X, Y)
    e = np.linalg.norm(np.asarray(X) - np.asarray(Y), axis=1)
    ok = (d > 0) & (e > 0)
    return e[ok] / d[ok], d[ok] / e[ok] ** (1.0 / group.s)


def holder_comparison(group: CarnotGroup, K, samples: int = 20_000, seed: int = 0) -> HolderEstimate:
    """Sampled constant C_K with |x-y|/C_K <= d(x,y) <= C_K |x-y|^(1/s) on the box K."""
    lo, hi = (np.broadcast_to(np.asarray(b, float), (group.N,)) for b in K)
    if np.any(hi <= lo):
        raise ValueError("degenerate box: need lo < hi in every coordinate")
    rng = np.random.default_rng(seed)
    half = samples // 2
    X = rng.uniform(lo, hi, size=(samples, group.N))
    Y = rng.uniform(lo, hi, size=(samples, group.N))
    # near pairs probe the small-distance regime where the exponents matter
    eps = 10.0 ** rng.uniform(-6, 0, size=half)
    u = rng.standard_normal((half, group.N))
    u /= np.linalg.norm(u, axis=1)[:, None]
    Y[:half] = np.clip(X[:half] + eps[:, None] * u * (hi - lo), lo, hi)
    low, up = holder_ratios(group, X, Y)
    lower, upper = float(low.max()), float(up.max())
    return HolderEstimate(max(1.0, lower, upper), lower, upper, samples, seed)


@dataclass(frozen=True)
class TranslationEstimate:
    C: float
    samples: int
    seed: int


def right_translation_ratios(group: CarnotGroup, A, B, C) -> np.ndarray:
    num = group.distance_batch(group.multiply_batch(A, C), group.multiply_batch(B, C))
    den = group.distance_batch(A, B)
    ok = den > 0
    return num[ok] / den[ok] ** (1.0 / group.s)


def right_translation_estimate(group: CarnotGroup, M: float = 2.0, samples: int = 20_000,
                               seed: int = 0) -> TranslationEstimate:
    """Sampled max of d(ac, bc) / d(a, b)^(1/s) over |a|, |b|, |c| <= M."""
    rng = np.random.default_rng(seed)
    A = group.sample_ball(rng, samples, M)
    B = group.sample_ball(rng, samples, M)
    Cs = group.sample_ball(rng, samples, M)
    half = samples // 2
    eps = 10.0 ** rng.uniform(-6, 0, size=half)
    near = group.multiply_batch(A[:half], group.dilate_batch(eps, group.sample_sphere(rng, half)))
    inside = np.linalg.norm(near, axis=1) <= M
    B[:half][inside] = near[inside]
    ratios = right_translation_ratios(group, A, B, Cs)
    return TranslationEstimate(float(ratios.max()), samples, seed)


def fold_batch(group: CarnotGroup, letters: np.ndarray) -> np.ndarray:
    """Products letters[:, 0] * letters[:, 1] * ... for a (B, k, N) array."""
    acc = letters[:, 0]
    for k in range(1, letters.shape[1]):
        acc = group.multiply_batch(acc, letters[:, k])
    return acc


def _word_pairs(group: CarnotGroup, rng, k0: int, alpha: float, M: float, samples: int):
    A = group.sample_ball(rng, samples * k0, M / 2).reshape(samples, k0, group.N)
    rho = alpha * np.where(rng.uniform(size=(samples, k0)) < 0.5, 1.0, rng.uniform(size=(samples, k0)))
    U = group.sample_sphere(rng, samples * k0)
    step = group.dilate_batch(rho.ravel(), U)
    B = group.multiply_batch(A.reshape(-1, group.N), step)
    too_big = np.linalg.norm(B, axis=1) > M
    B[too_big] = A.reshape(-1, group.N)[too_big]
    return A, B.reshape(samples, k0, group.N)


def word_distances(group: CarnotGroup, k0: int, alpha: float, M: float = 2.0,
                   samples: int = 5_000, seed: int = 0) -> np.ndarray:
    """d(a_k0...a_1, b_k0...b_1) for sampled letter pairs with d(a_k, b_k) <= alpha."""
    rng = np.random.default_rng(seed)
    A, B = _word_pairs(group, rng, k0, alpha, M, samples)
    return group.distance_batch(fold_batch(group, A), fold_batch(group, B))


@dataclass(frozen=True)
class WordEstimate:
    C: float
    alpha: float
    k0: int
    exponent: float
    samples: int
    seed: int


def word_distance_estimate(group: CarnotGroup, k0: int, alpha: float, M: float = 2.0,
                           samples: int = 5_000, seed: int = 0) -> WordEstimate:
    """Sampled max of d(word_a, word_b) / alpha^(1/s^(k0-1))."""
    if k0 < 1 or alpha <= 0:
        raise ValueError("need k0 >= 1 and alpha > 0")
    exponent = 1.0 / group.s ** (k0 - 1)
    d = word_distances(group, k0, alpha, M, samples, seed)
    return WordEstimate(float(d.max() / alpha**exponent), alpha, k0, exponent, samples, seed)


def word_distance_decay(group: CarnotGroup, k0: int, alphas: Sequence[float], M: float = 2.0,
                        samples: int = 2_000, seed: int = 0) -> dict:
    """Max word distance per alpha and the fitted log-log decay exponent."""
    maxima = [float(word_distances(group, k0, a, M, samples, seed).max()) for a in alphas]
    fit = loglog_slope(alphas, maxima)
    return {
        "alphas": [float(a) for a in alphas],
        "max_distance": maxima,
        "slope": fit.slope,
        "predicted_exponent": 1.0 / group.s ** (k0 - 1),
    }
