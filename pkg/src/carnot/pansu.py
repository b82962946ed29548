"""Pansu difference quotients and derivatives of horizontal-curve-preserving maps.

For f from a domain of a Carnot group G into a Carnot group H:

    R(x, xi; t)  = dil_{1/t}( f(x)^-1 f(x dil_t(xi)) )                 difference quotient
    D_k f(x)     = lambda_k (grad f_1(x).X_j(x), ..., grad f_n(x).X_j(x), 0, ..., 0)
    z(x, xi)     = D_k0 f(x) ... D_1 f(x)                                with xi = xi_k0 ... xi_1
    z0(x, xi; t) = D_k0 f(x_k0) D_(k0-1) f(x_(k0-1)(t)) ... D_1 f(x_1(t))

where xi_k = lambda_k e_(j_k) are the letters of a horizontal word and
x_k(t) = x_(k+1)(t) dil_t(xi_(k+1)) with x_k0 = x.  The predicted rate is
d(R, z) <= C omega(t)^(1/s^k0), omega a modulus of continuity of the
horizontal gradients and s the step of the target group.

Polynomial maps with rational coefficients are evaluated in rational
arithmetic by default, so identities that hold algebraically hold exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .decomposition import (
    DecompositionScheme,
    HorizontalWord,
    _inverse_matrix,
    decompose,
    spanning_words,
    sup_euclidean_on_unit_sphere,
)
from .fitting import fitted_constant, geometric_grid, loglog_slope, refine_grid
from .group import CarnotGroup, load_group
from .horizontal import Curve, CurvePiece, HorizontalControl, is_horizontal, lift, vector_field
from .polynomial import SparsePolynomial, is_exact, variables


class DomainError(ValueError):
    """A point needed by the computation lies outside the map's domain."""


class MapSpecError(ValueError):
    pass


def _as_fraction(v) -> Fraction:
    return Fraction(v) if is_exact(v) else Fraction(float(v))


def _exact_tuple(x) -> tuple[Fraction, ...]:
    return tuple(_as_fraction(v) for v in x)


# -- domains --------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("box corners of different dimension")
        for i, (a, b) in enumerate(zip(self.lo, self.hi)):
            if a > b:
                raise ValueError(f"box has min > max in coordinate {i + 1}")

    @classmethod
    def cube(cls, N: int, half_width: float, center=None) -> "Box":
        c = np.zeros(N) if center is None else np.asarray(center, float)
        return cls(tuple(c - half_width), tuple(c + half_width))

    @property
    def N(self) -> int:
        return len(self.lo)

    def contains(self, x, strict: bool = False) -> bool:
        x = [float(v) for v in x]
        if strict:
            return all(a < v < b for a, v, b in zip(self.lo, x, self.hi))
        return all(a <= v <= b for a, v, b in zip(self.lo, x, self.hi))

    def contains_box(self, other: "Box", strict: bool = True) -> bool:
        return self.contains(other.lo, strict) and self.contains(other.hi, strict)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(size, self.N))

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lo, self.hi))), float)


@dataclass(frozen=True)
class MetricBall:
    """Open ball {y : d(center, y) < radius}."""

    center: tuple[float, ...]
    radius: float

    def contains(self, group: CarnotGroup, x, strict: bool = True) -> bool:
        d = group.distance(np.asarray(self.center, float), np.asarray([float(v) for v in x]))
        return d < self.radius if strict else d <= self.radius


Domain = Box | MetricBall | None


def _in_domain(group: CarnotGroup, domain: Domain, x) -> bool:
    if domain is None:
        return True
    if isinstance(domain, Box):
        return domain.contains(x)
    return domain.contains(group, x, strict=True)


# -- maps -----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CarnotMap:
    """A map between Carnot groups, by polynomial components or a callable.

    ``certificate`` records why the map is trusted to preserve horizontal
    curves.  ``gradient_method`` is ``"analytic"`` for polynomial maps and
    ``"finite-difference"`` otherwise.
    """

    source: CarnotGroup
    target: CarnotGroup
    components: tuple[SparsePolynomial, ...] | None = None
    func: Callable | None = None
    domain: Domain = None
    certificate: dict = field(default_factory=dict)
    name: str = "map"
    spec: dict = field(default_factory=dict)
    fd_step: float = 1e-6

    def __post_init__(self):
        if (self.components is None) == (self.func is None):
            raise ValueError("give either polynomial components or a function")
        if self.components is not None:
            if len(self.components) != self.target.N:
                raise ValueError(f"need {self.target.N} components, got {len(self.components)}")
            if any(p.nvars != self.source.N for p in self.components):
                raise ValueError("components must be polynomials in the source coordinates")

    @property
    def polynomial(self) -> bool:
        return self.components is not None

    @property
    def exact_capable(self) -> bool:
        return self.polynomial and all(p.is_exact() for p in self.components)

    @property
    def gradient_method(self) -> str:
        return "analytic" if self.polynomial else "finite-difference"

    def with_domain(self, domain: Domain) -> "CarnotMap":
        return CarnotMap(self.source, self.target, self.components, self.func, domain,
                         dict(self.certificate), self.name, dict(self.spec), self.fd_step)

    def check_domain(self, x) -> None:
        if not _in_domain(self.source, self.domain, x):
            raise DomainError(f"point {[float(v) for v in x]} is outside the domain of {self.name}")

    def __call__(self, x, exact: bool | None = None):
        self.source._check(x)
        self.check_domain(x)
        if exact is None:
            exact = self.exact_capable and not isinstance(x, np.ndarray) and all(is_exact(v) for v in x)
        if exact:
            if not self.exact_capable:
                raise ValueError(f"{self.name} cannot be evaluated exactly")
            xe = _exact_tuple(x)
            return tuple(p.evaluate(xe) for p in self.components)
        xf = np.array([float(v) for v in x])
        if self.polynomial:
            return np.array([p.evaluate(xf) for p in self.components])
        return np.asarray(self.func(xf), float)

    @cached_property
    def _gradient_polys(self):
        n_hat = self.target.n
        return tuple(tuple(p.derivative(k) for k in range(self.source.N)) for p in self.components[:n_hat])

    def gradients(self, x, exact: bool = False):
        """Rows grad f_i(x), i below the target's horizontal dimension."""
        n_hat = self.target.n
        if self.polynomial:
            if exact:
                xe = _exact_tuple(x)
                return [[g.evaluate(xe) for g in row] for row in self._gradient_polys]
            xf = np.array([float(v) for v in x])
            return np.array([[g.evaluate(xf) for g in row] for row in self._gradient_polys])
        return self._fd_gradients(np.array([float(v) for v in x], float))[:n_hat]

    def _fd_gradients(self, x: np.ndarray) -> np.ndarray:
        """Central differences, one Richardson step."""
        h = self.fd_step
        N = self.source.N

        def central(step):
            cols = []
            for k in range(N):
                e = np.zeros(N)
                e[k] = step
                cols.append((np.asarray(self.func(x + e), float) - np.asarray(self.func(x - e), float)) / (2 * step))
            return np.array(cols).T

        return (4 * central(h / 2) - central(h)) / 3


def _translation_polys(group: CarnotGroup, a) -> tuple[SparsePolynomial, ...]:
    """Components of x -> a x."""
    N = group.N
    a = _exact_tuple(a)
    xs = variables(N)
    consts = [SparsePolynomial.constant(N, c) for c in a]
    out = []
    for i in range(N):
        q = group.law.Q[i].compose(consts + xs)
        out.append(consts[i] + xs[i] + q)
    return tuple(out)


def _linear_polys(N: int, matrix) -> tuple[SparsePolynomial, ...]:
    xs = variables(N)
    out = []
    for row in matrix:
        p = SparsePolynomial.zero(N)
        for k, c in enumerate(row):
            if c:
                p = p + xs[k] * c
        out.append(p)
    return tuple(out)


def identity_map(group: CarnotGroup) -> CarnotMap:
    return CarnotMap(group, group, tuple(variables(group.N)), certificate={"method": "catalog", "reason": "identity"},
                     name="identity", spec={"kind": "identity"})


def left_translation(group: CarnotGroup, a) -> CarnotMap:
    return CarnotMap(group, group, _translation_polys(group, a),
                     certificate={"method": "catalog", "reason": "left translations are isometries preserving horizontality"},
                     name="left_translation", spec={"kind": "left_translation", "point": [str(_as_fraction(v)) for v in a]})


def dilation(group: CarnotGroup, r) -> CarnotMap:
    r = _as_fraction(r)
    if r <= 0:
        raise MapSpecError("dilation factor must be positive")
    mat = [[r ** group.algebra.degrees[i] if i == k else 0 for k in range(group.N)] for i in range(group.N)]
    return CarnotMap(group, group, _linear_polys(group.N, mat),
                     certificate={"method": "catalog", "reason": "dilations are automorphisms"},
                     name="dilation", spec={"kind": "dilation", "factor": str(r)})


def extend_to_morphism(source: CarnotGroup, target: CarnotGroup, matrix) -> list[list[Fraction]]:
    """Extend a linear map on the first layers to a graded Lie algebra morphism.

    ``matrix`` is n_hat x n; the result is the full N_hat x N matrix.  Raises
    ``MapSpecError`` when no graded morphism restricts to ``matrix``.
    """
    src, tgt = source.algebra, target.algebra
    M = [[_as_fraction(c) for c in row] for row in matrix]
    if len(M) != tgt.n or any(len(row) != src.n for row in M):
        raise MapSpecError(f"generator matrix must be {tgt.n} x {src.n}")
    Phi = [[Fraction(0)] * src.N for _ in range(tgt.N)]
    for i in range(tgt.n):
        for j in range(src.n):
            Phi[i][j] = M[i][j]

    def image(v):
        return [sum((Phi[i][k] * v[k] for k in range(src.N) if v[k]), Fraction(0)) for i in range(tgt.N)]

    for m in range(2, src.s + 1):
        chosen = spanning_words(src, m)
        inv = _inverse_matrix([v for _, v in chosen])
        layer = list(src.strat.layer(m))
        images = []
        for word, _ in chosen:
            acc = image(src.basis(word[-1]))
            for j in reversed(word[:-1]):
                acc = tgt.bracket(image(src.basis(j)), acc)
            images.append(acc)
        # Phi on layer m: columns = sum_w images[w] * inv[w][q]
        for q, k in enumerate(layer):
            for i in range(tgt.N):
                Phi[i][k] = sum((images[w][i] * inv[w][q] for w in range(len(chosen))), Fraction(0))
    tdeg = tgt.degrees if tgt.N else ()
    for k in range(src.N):
        for i in range(tgt.N):
            if Phi[i][k] and tdeg[i] != src.degrees[k]:
                raise MapSpecError(f"image of basis vector {k + 1} leaves layer {src.degrees[k]}")
    for a in range(src.N):
        for b in range(a + 1, src.N):
            lhs = image(src.bracket(src.basis(a), src.basis(b)))
            rhs = tgt.bracket(image(src.basis(a)), image(src.basis(b)))
            if lhs != rhs:
                raise MapSpecError(f"generator matrix does not extend to a Lie algebra morphism (fails on [e{a + 1}, e{b + 1}])")
    return Phi


def graded_homomorphism(source: CarnotGroup, matrix, target: CarnotGroup | None = None) -> CarnotMap:
    target = source if target is None else target
    Phi = extend_to_morphism(source, target, matrix)
    return CarnotMap(source, target, _linear_polys(source.N, Phi),
                     certificate={"method": "catalog", "reason": "graded homomorphisms preserve horizontality",
                                  "matrix": [[str(c) for c in row] for row in Phi]},
                     name="graded_homomorphism",
                     spec={"kind": "graded_homomorphism", "matrix": [[str(_as_fraction(c)) for c in row] for row in matrix],
                           "target": target.name})


def heisenberg_shear(psi: Sequence, group: CarnotGroup | None = None) -> CarnotMap:
    """f(x) = (x1, x2 + psi(x1), x3 + 1/2 int_0^x1 (s psi'(s) - psi(s)) ds) on the first Heisenberg group."""
    group = load_group("heisenberg(1)") if group is None else group
    if group.N != 3 or group.n != 2:
        raise MapSpecError("the shear map is defined on the first Heisenberg group")
    p = SparsePolynomial.univariate([_as_fraction(c) for c in psi])
    integrand = (SparsePolynomial.univariate([0, 1]) * p.derivative(0) - p) * Fraction(1, 2)
    F = integrand.antiderivative(0)
    x1, x2, x3 = variables(3)
    comps = (x1, x2 + p.compose([x1]), x3 + F.compose([x1]))
    return CarnotMap(group, group, comps,
                     certificate={"method": "catalog", "reason": "shear built so that images of horizontal curves are horizontal"},
                     name="heisenberg_shear", spec={"kind": "heisenberg_shear", "psi": [str(_as_fraction(c)) for c in psi]})


def compose_maps(maps: Sequence[CarnotMap]) -> CarnotMap:
    """Composite applying ``maps[0]`` first."""
    if not maps:
        raise MapSpecError("composition of no maps")
    for a, b in zip(maps, maps[1:]):
        if a.target.algebra is not b.source.algebra and a.target.N != b.source.N:
            raise MapSpecError(f"cannot compose {a.name} into {b.name}")
    first = maps[0]
    certified = all(m.certificate.get("method") in ("catalog", "inherited") for m in maps)
    cert = {"method": "inherited" if certified else "none", "parts": [m.name for m in maps]}
    if all(m.polynomial for m in maps):
        comps = list(first.components)
        for m in maps[1:]:
            comps = [p.compose(comps) for p in m.components]
        return CarnotMap(first.source, maps[-1].target, tuple(comps), domain=first.domain, certificate=cert,
                         name="composition", spec={"kind": "composition", "maps": [m.spec for m in maps]})

    def func(x):
        for m in maps:
            x = np.asarray(m(x, exact=False), float)
        return x

    return CarnotMap(first.source, maps[-1].target, func=func, domain=first.domain, certificate=cert,
                     name="composition", spec={"kind": "composition", "maps": [m.spec for m in maps]})


def catalog_map(kind: str, params: dict | None = None, group: CarnotGroup | str | None = None) -> CarnotMap:
    """Build a catalog map: identity, left_translation, dilation, graded_homomorphism,
    heisenberg_shear or composition."""
    params = dict(params or {})
    if isinstance(group, str):
        group = load_group(group)
    if kind == "heisenberg_shear":
        return heisenberg_shear(params.get("psi", [0, 0, 1]), group)
    if group is None:
        raise MapSpecError(f"map kind {kind!r} needs a group")
    if kind == "identity":
        return identity_map(group)
    if kind == "left_translation":
        if "point" not in params:
            raise MapSpecError("left_translation needs 'point'")
        point = [_parse_number(v) for v in params["point"]]
        if len(point) != group.N:
            raise MapSpecError(f"left_translation point must have {group.N} coordinates")
        return left_translation(group, point)
    if kind == "dilation":
        return dilation(group, _parse_number(params.get("factor", 2)))
    if kind == "graded_homomorphism":
        if "matrix" not in params:
            raise MapSpecError("graded_homomorphism needs 'matrix'")
        target = load_group(params["target"]) if params.get("target") else group
        return graded_homomorphism(group, [[_parse_number(c) for c in row] for row in params["matrix"]], target)
    if kind == "composition":
        parts = params.get("maps")
        if not parts:
            raise MapSpecError("composition needs a non-empty 'maps' list")
        built = []
        current = group
        for sub in parts:
            m = map_from_spec(sub, current)
            built.append(m)
            current = m.target
        return compose_maps(built)
    raise MapSpecError(f"unknown map kind {kind!r}")


def _parse_number(v):
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, bool) or not isinstance(v, (int, float, Fraction)):
        raise MapSpecError(f"not a number: {v!r}")
    return v


def map_from_spec(spec: dict, group: CarnotGroup | str | None = None) -> CarnotMap:
    """``{"kind": ..., "group": ..., <parameters>}``; ``group`` in the spec wins over the argument."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise MapSpecError("map spec must be an object with a 'kind'")
    params = {k: v for k, v in spec.items() if k not in ("kind", "group")}
    g = spec.get("group", group)
    return catalog_map(spec["kind"], params, g)


# -- sampled certificate --------------------------------------------------------


def _image_curve(f: CarnotMap, curve: Curve, samples: int) -> Curve:
    if f.polynomial and curve.pieces:
        pieces = []
        for pc in curve.pieces:
            coords = tuple(p.compose(list(pc.coords)) for p in f.components)
            pieces.append(CurvePiece(pc.start, pc.end, coords))
        return Curve(pieces=tuple(pieces))
    times = np.linspace(float(curve.start), float(curve.end), samples)
    pts = np.array([f(np.asarray(curve(t), float), exact=False) for t in times])
    return Curve.from_samples(times, pts)


def certify_horizontality(f: CarnotMap, curves: int = 20, tol: float = 1e-6, seed: int = 0,
                          region: Box | None = None, duration: float = 0.25, samples: int = 2001) -> dict:
    """Evidence that f maps horizontal curves to horizontal curves.

    Random quadratic controls are lifted from random starting points and the
    horizontality residual of each image curve is measured.
    """
    rng = np.random.default_rng(seed)
    G = f.source
    if region is None:
        region = f.domain if isinstance(f.domain, Box) else Box.cube(G.N, 1.0)
    worst = 0.0
    for _ in range(curves):
        x0 = region.sample(rng, 1)[0]
        coeffs = rng.uniform(-1, 1, size=(G.n, 3))
        ctrl = HorizontalControl.polynomial(coeffs.tolist(), duration)
        curve = lift(G, x0, ctrl)
        image = _image_curve(f, curve, samples)
        report = is_horizontal(f.target, image, tol=tol)
        worst = max(worst, report.max_residual)
    return {"method": "sampled", "curves": curves, "tol": tol, "seed": seed, "max_residual": worst,
            "passed": worst <= tol}


def polynomial_map(source: CarnotGroup, target: CarnotGroup, components, domain: Domain = None,
                   name: str = "custom", certify: bool = True, seed: int = 0) -> CarnotMap:
    """A non-catalog polynomial map; its certificate is sampled."""
    f = CarnotMap(source, target, tuple(components), domain=domain, name=name, spec={"kind": "custom"})
    if certify:
        f.certificate.update(certify_horizontality(f, seed=seed))
    return f


def function_map(source: CarnotGroup, target: CarnotGroup, func: Callable, domain: Domain = None,
                 name: str = "custom", certify: bool = True, seed: int = 0) -> CarnotMap:
    """A map given by a callable; gradients by finite differences, certificate sampled."""
    f = CarnotMap(source, target, func=func, domain=domain, name=name, spec={"kind": "custom"})
    if certify:
        f.certificate.update(certify_horizontality(f, seed=seed))
    return f


def is_certified(f: CarnotMap) -> bool:
    method = f.certificate.get("method")
    if method in ("catalog", "inherited"):
        return True
    return method == "sampled" and bool(f.certificate.get("passed"))


# -- region and t_A -------------------------------------------------------------


def _box_complement_distance(group: CarnotGroup, A: Box, Omega: Box, samples: int, seed: int,
                             polish: int = 10) -> float:
    """inf d(a, y) over a in A and y on the boundary of Omega.

    Sampled candidates on every face are ranked and the best few pairs are
    polished by a bounded Nelder-Mead search (coordinates are clipped).
    """
    rng = np.random.default_rng(seed)
    N = group.N
    lo_O, hi_O = np.asarray(Omega.lo, float), np.asarray(Omega.hi, float)
    a_pts = np.vstack([A.corners(), A.sample(rng, samples)])
    candidates = []
    for k in range(N):
        for value in (lo_O[k], hi_O[k]):
            Y = Omega.sample(rng, samples)
            # the projection of A onto the face is a natural guess too
            proj = np.clip(a_pts, lo_O, hi_O)
            Y = np.vstack([Y, proj])
            Y[:, k] = value
            for chunk in range(0, len(a_pts), 256):
                Ach = a_pts[chunk:chunk + 256]
                D = group.distance_batch(np.repeat(Ach, len(Y), axis=0), np.tile(Y, (len(Ach), 1)))
                D = D.reshape(len(Ach), len(Y))
                i, j = np.unravel_index(np.argmin(D), D.shape)
                candidates.append((float(D[i, j]), Ach[i].copy(), Y[j].copy(), k, value))
    candidates.sort(key=lambda c: c[0])
    best = candidates[0][0]
    lo_A, hi_A = np.asarray(A.lo, float), np.asarray(A.hi, float)
    for dist, a0, y0, k, value in candidates[:polish]:
        free = [i for i in range(N) if i != k]

        def objective(z, k=k, value=value, free=free):
            y = np.empty(N)
            y[free] = np.clip(z[N:], lo_O[free], hi_O[free])
            y[k] = value
            return group.distance(np.clip(z[:N], lo_A, hi_A), y)

        res = minimize(objective, np.concatenate([a0, y0[free]]), method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20_000, "adaptive": True})
        best = min(best, float(res.fun))
    return best


def complement_distance(group: CarnotGroup, A: Box, Omega: Domain, samples: int = 400, seed: int = 0) -> float:
    """dist(A, G minus Omega); infinite when Omega is the whole group."""
    if Omega is None:
        return math.inf
    if isinstance(Omega, MetricBall):
        # d(a, y) >= radius - d(c, a) for y outside the ball, with equality when A is the center
        corners = A.corners()
        rng = np.random.default_rng(seed)
        pts = np.vstack([corners, A.sample(rng, samples)])
        reach = float(group.distance_batch(np.tile(np.asarray(Omega.center, float), (len(pts), 1)), pts).max())
        return Omega.radius - reach
    return _box_complement_distance(group, A, Omega, samples, seed)


@dataclass(frozen=True)
class ExperimentRegion:
    group: CarnotGroup
    A: Box
    Omega: Domain
    distance_to_complement: float
    k0: int
    C0: float
    sup_xi: float
    t_A: float
    t_max: float

    @property
    def enlargement(self) -> float:
        """Radius of the enlarged set {y : dist(y, A) <= radius}."""
        return 0.5 * self.distance_to_complement if math.isfinite(self.distance_to_complement) else 1.0

    def contains(self, x) -> bool:
        return _in_domain(self.group, self.Omega, x)

    def sample_A(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.A.sample(rng, size)

    def sample_enlarged(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Points y = a dil_rho(u) with a in A, ||u|| = 1 and rho up to the enlargement radius."""
        a = self.A.sample(rng, size)
        u = self.group.sample_sphere(rng, size)
        rho = self.enlargement * rng.uniform(size=size)
        return self.group.multiply_batch(a, self.group.dilate_batch(rho, u))


def region(A: Box, Omega: Domain, scheme: DecompositionScheme, C0: float | None = None,
           t_max: float = 1.0, samples: int = 400, seed: int = 0) -> ExperimentRegion:
    """t_A = dist(A, G minus Omega) / (2 k0 C0 sup_{||xi|| = 1} |xi|), capped at t_max."""
    group = scheme.group
    if A.N != group.N:
        raise ValueError(f"A has dimension {A.N}, group has N = {group.N}")
    if isinstance(Omega, Box):
        if Omega.N != group.N:
            raise ValueError(f"Omega has dimension {Omega.N}, group has N = {group.N}")
        if not Omega.contains_box(A, strict=True):
            raise ValueError("A is not contained in the interior of Omega")
    if isinstance(Omega, MetricBall):
        if not all(Omega.contains(group, c) for c in A.corners()):
            raise ValueError("A is not contained in Omega")
    C0 = scheme.C0 if C0 is None else C0
    if C0 is None:
        raise ValueError("C0 is unknown; estimate it first")
    dist = complement_distance(group, A, Omega, samples, seed)
    if dist <= 0:
        raise ValueError("A touches the complement of Omega")
    sup = sup_euclidean_on_unit_sphere(group)
    t_A = min(dist / (2 * scheme.k0 * C0 * sup), t_max) if math.isfinite(dist) else t_max
    return ExperimentRegion(group, A, Omega, dist, scheme.k0, C0, sup, t_A, t_max)


# -- modulus of continuity -------------------------------------------------------


@dataclass(frozen=True)
class ModulusOfContinuity:
    """Piecewise-linear concave nondecreasing omega with omega(0) = 0, flat past the last breakpoint."""

    breakpoints: np.ndarray
    values: np.ndarray
    degenerate: bool = False
    epsilon: float = 1e-15

    def __call__(self, t):
        t = np.asarray(t, float)
        if self.degenerate:
            return self.epsilon * t
        return np.interp(t, self.breakpoints, self.values)

    @property
    def lipschitz(self) -> float:
        if self.degenerate:
            return self.epsilon
        return float((self.values[1] - self.values[0]) / (self.breakpoints[1] - self.breakpoints[0]))

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    def check(self, grid=None, factors=(1.0, 1.5, 2.0, 4.0, 10.0)) -> dict:
        """Invariant checks: omega(0) = 0, monotone, concave, omega(Ct) <= C omega(t)."""
        if grid is None:
            top = float(self.breakpoints[-1]) if not self.degenerate else 1.0
            grid = np.geomspace(top * 1e-6, top * 2, 200)
        tol = 1e-12
        zero = float(self(0.0)) == 0.0
        if self.degenerate:
            return {"zero_at_origin": zero, "monotone": True, "concave": True, "subadditive_scaling": True}
        monotone = bool(np.all(np.diff(self.values) >= -tol))
        sl = self.slopes()
        concave = bool(np.all(np.diff(sl) <= tol * (1 + np.abs(sl[:-1]))))
        w = self(grid)
        scaling = all(bool(np.all(self(C * grid) <= C * w * (1 + 1e-12) + tol)) for C in factors)
        return {"zero_at_origin": zero, "monotone": monotone, "concave": concave, "subadditive_scaling": scaling}

    @classmethod
    def from_pairs(cls, distances, oscillations, epsilon: float = 1e-15) -> "ModulusOfContinuity":
        """Least concave nondecreasing majorant of the points (d_k, o_k) through the origin."""
        d = np.asarray(distances, float)
        o = np.asarray(oscillations, float)
        keep = d > 0
        d, o = d[keep], o[keep]
        if len(d) == 0 or o.max() <= epsilon:
            return cls(np.array([0.0, 1.0]), np.array([0.0, epsilon]), True, epsilon)
        order = np.lexsort((-o, d))
        d, o = d[order], o[order]
        hull_x, hull_y = [0.0], [0.0]
        for x, y in zip(d, o):
            if x == hull_x[-1]:
                if y <= hull_y[-1]:
                    continue
                hull_x.pop()
                hull_y.pop()
            while len(hull_x) >= 2:
                x1, y1, x2, y2 = hull_x[-2], hull_y[-2], hull_x[-1], hull_y[-1]
                # drop the middle point when it lies on or below the chord
                if (y2 - y1) * (x - x1) <= (y - y1) * (x2 - x1):
                    hull_x.pop()
                    hull_y.pop()
                else:
                    break
            hull_x.append(float(x))
            hull_y.append(float(y))
        hx, hy = np.array(hull_x), np.array(hull_y)
        top = int(np.argmax(hy))
        hx, hy = hx[: top + 1], hy[: top + 1]
        if len(hx) < 2:
            return cls(np.array([0.0, 1.0]), np.array([0.0, epsilon]), True, epsilon)
        return cls(hx, hy)


def gradient_oscillations(f: CarnotMap, X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(d(x, y), max_i |grad f_i(x) - grad f_i(y)|) for paired rows."""
    d = f.source.distance_batch(X, Y)
    osc = np.array([float(np.max(np.linalg.norm(np.asarray(f.gradients(x)) - np.asarray(f.gradients(y)), axis=1)))
                    for x, y in zip(X, Y)])
    return d, osc


def estimate_modulus(f: CarnotMap, reg: ExperimentRegion, samples: int = 2000, seed: int = 0) -> ModulusOfContinuity:
    """Upper concave envelope of sampled gradient oscillations over the enlarged set.

    Half the pairs are independent points; the other half are near pairs
    y = x dil_rho(u) with rho spread over several decades.
    """
    rng = np.random.default_rng(seed)
    G = f.source
    half = samples // 2
    X1 = reg.sample_enlarged(rng, half)
    Y1 = reg.sample_enlarged(rng, half)
    X2 = reg.sample_enlarged(rng, samples - half)
    u = G.sample_sphere(rng, samples - half)
    rho = reg.enlargement * 10.0 ** rng.uniform(-4, 0, size=samples - half)
    Y2 = G.multiply_batch(X2, G.dilate_batch(rho, u))
    d, osc = gradient_oscillations(f, np.vstack([X1, X2]), np.vstack([Y1, Y2]))
    return ModulusOfContinuity.from_pairs(d, osc)


# -- difference quotients and derivatives ---------------------------------------


def _use_exact(f: CarnotMap, exact: bool | None) -> bool:
    if exact is None:
        return f.exact_capable
    if exact and not f.exact_capable:
        raise ValueError(f"{f.name} has no exact form")
    return exact


def difference_quotient(f: CarnotMap, x, xi, t, exact: bool | None = None):
    """R(x, xi; t) = dil_{1/t}( f(x)^-1 f(x dil_t(xi)) )."""
    if not t > 0:
        raise ValueError("t must be positive")
    G, H = f.source, f.target
    exact = _use_exact(f, exact)
    if exact:
        x, xi, t = _exact_tuple(x), _exact_tuple(xi), _as_fraction(t)
    else:
        x, xi, t = np.asarray(x, float), np.asarray(xi, float), float(t)
    y = G.multiply(x, G.dilate(t, xi))
    f.check_domain(x)
    f.check_domain(y)
    return H.dilate(1 / t, H.multiply(H.inverse(f(x, exact)), f(y, exact)))


def horizontal_derivative(f: CarnotMap, x, letter, exact: bool | None = None):
    """D f(x) along the letter (j, lambda): lambda (grad f_i(x) . X_j(x))_i, then zeros."""
    j, lam = letter
    G, H = f.source, f.target
    exact = _use_exact(f, exact)
    f.check_domain(x)
    if exact:
        xe = _exact_tuple(x)
        X = vector_field(G, j, xe)
        grads = f.gradients(xe, exact=True)
        lam = _as_fraction(lam)
        head = [lam * sum((g * v for g, v in zip(row, X)), Fraction(0)) for row in grads]
        return tuple(head + [Fraction(0)] * (H.N - H.n))
    xf = np.array([float(v) for v in x])
    X = vector_field(G, j, xf)
    grads = np.asarray(f.gradients(xf))
    return np.concatenate([float(lam) * grads @ X, np.zeros(H.N - H.n)])


def _word(scheme: DecompositionScheme, xi, word: HorizontalWord | None) -> HorizontalWord:
    return decompose(scheme, xi) if word is None else word


def pansu_derivative(f: CarnotMap, x, xi, scheme: DecompositionScheme, word: HorizontalWord | None = None,
                     exact: bool | None = None):
    """z(x, xi): product over the word's letters of D f(x)."""
    word = _word(scheme, xi, word)
    H = f.target
    factors = [horizontal_derivative(f, x, letter, exact) for letter in word.letters]
    return H.product(*factors)


def pansu_trick_points(group: CarnotGroup, x, word: HorizontalWord, t, exact: bool = False) -> list:
    """[x_k0, x_(k0-1)(t), ..., x_1(t)]: partial right products by the dilated letters."""
    if exact:
        p = _exact_tuple(x)
        t = _as_fraction(t)
        letters = word.elements(group, exact=True)
    else:
        p = np.asarray(x, float)
        t = float(t)
        letters = word.elements(group, exact=False)
    pts = [p]
    for el in letters[:-1]:
        p = group.multiply(p, group.dilate(t, el))
        pts.append(p)
    return pts


@dataclass(frozen=True)
class TrickResult:
    direct: object
    factored: object
    residual: float


def verify_pansu_trick(f: CarnotMap, x, xi, scheme: DecompositionScheme, t, word: HorizontalWord | None = None,
                       exact: bool | None = None) -> TrickResult:
    """Compare R(x, xi; t) with the product of R(x_k(t), xi_k; t) along the word."""
    exact = _use_exact(f, exact)
    word = _word(scheme, xi, word)
    G, H = f.source, f.target
    pts = pansu_trick_points(G, x, word, t, exact)
    letters = word.elements(G, exact=exact)
    factors = [difference_quotient(f, p, el, t, exact) for p, el in zip(pts, letters)]
    factored = H.product(*factors)
    target_xi = word.product if exact else np.asarray([float(v) for v in word.product])
    direct = difference_quotient(f, x, target_xi, t, exact)
    return TrickResult(direct, factored, H.distance(direct, factored))


def z0(f: CarnotMap, x, xi, scheme: DecompositionScheme, t, word: HorizontalWord | None = None,
       exact: bool | None = None):
    """D_k0 f(x) D_(k0-1) f(x_(k0-1)(t)) ... D_1 f(x_1(t))."""
    exact = _use_exact(f, exact)
    word = _word(scheme, xi, word)
    pts = pansu_trick_points(f.source, x, word, t, exact)
    return f.target.product(*[horizontal_derivative(f, p, letter, exact) for p, letter in zip(pts, word.letters)])


# -- studies -------------------------------------------------------------------------


def default_xi_set(group: CarnotGroup, count: int = 32, seed: int = 0) -> np.ndarray:
    """Unit-sphere directions: all +-e_i rescaled to norm one, then seeded random points."""
    axes = group.unit_basis_points()
    rng = np.random.default_rng(seed)
    extra = group.sample_sphere(rng, max(0, count - len(axes)))
    return np.vstack([axes, extra])[: max(count, len(axes))]


@dataclass
class BoundCheck:
    """Error curve against omega(t)^(1/s^k0) on a grid and its refinement."""

    t: np.ndarray
    errors: np.ndarray
    bound_values: np.ndarray
    C_hat: float
    t_refined: np.ndarray
    errors_refined: np.ndarray
    C_hat_refined: float
    slope: float
    exact_case: bool
    tolerance: float = 1e-10

    @property
    def stability_ratio(self) -> float:
        a, b = self.C_hat, self.C_hat_refined
        if self.exact_case:
            return 1.0
        if min(a, b) <= 0:
            return math.inf
        return max(a, b) / min(a, b)

    @property
    def decay_ratio(self) -> float:
        """Error at the smallest t over error at the largest t."""
        if self.errors[0] <= 0:
            return 0.0
        return float(self.errors[-1] / self.errors[0])

    @property
    def decays_on_average(self) -> bool:
        """Mean error over successive decades of the grid strictly decreases."""
        blocks = np.array_split(self.errors, 4)
        means = [b.mean() for b in blocks]
        return all(a > b for a, b in zip(means, means[1:]))

    @property
    def finite(self) -> bool:
        return math.isfinite(self.C_hat) and math.isfinite(self.C_hat_refined)

    @property
    def passed(self) -> bool:
        if self.exact_case:
            return True
        return self.finite and self.stability_ratio < 2.0 and self.decays_on_average and self.errors[-1] < self.errors[0]

    def summary(self) -> dict:
        return {
            "exact_case": self.exact_case,
            "max_error": float(self.errors.max()),
            "C_hat": self.C_hat,
            "C_hat_refined": self.C_hat_refined,
            "stability_ratio": self.stability_ratio,
            "slope": self.slope,
            "decay_ratio": self.decay_ratio,
            "decays_on_average": self.decays_on_average,
            "passed": self.passed,
        }


def theorem_exponent(f: CarnotMap, k0: int) -> float:
    return 1.0 / f.target.s ** k0


def bound_check(t, errors, t_refined, errors_refined, omega: ModulusOfContinuity, exponent: float,
                tolerance: float = 1e-10) -> BoundCheck:
    t = np.asarray(t, float)
    tr = np.asarray(t_refined, float)
    errors = np.asarray(errors, float)
    errors_refined = np.asarray(errors_refined, float)
    bv = np.asarray(omega(t), float) ** exponent
    bvr = np.asarray(omega(tr), float) ** exponent
    exact_case = bool(errors.max() <= tolerance and errors_refined.max() <= tolerance)
    return BoundCheck(t, errors, bv, fitted_constant(errors, bv), tr, errors_refined,
                      fitted_constant(errors_refined, bvr), loglog_slope(t, errors, floor=tolerance).slope,
                      exact_case, tolerance)


@dataclass
class ConvergenceStudy:
    """Per-sample error tables plus bound checks for the uniform (max) error curves."""

    rows: list  # (sample, x, xi, t, error, bound_value)
    check: BoundCheck
    omega: ModulusOfContinuity
    exponent: float
    per_sample_slopes: list
    per_sample_C: list
    quantity: str = "R-z"

    def summary(self) -> dict:
        out = self.check.summary()
        out.update({"quantity": self.quantity, "exponent": self.exponent, "omega_lipschitz": self.omega.lipschitz,
                    "omega_degenerate": self.omega.degenerate,
                    "max_per_sample_C": float(np.max(self.per_sample_C)) if self.per_sample_C else 0.0,
                    "samples": len(self.per_sample_C)})
        return out


def _study(f: CarnotMap, reg: ExperimentRegion, scheme: DecompositionScheme, points, xi_set, t_grid, t_refined,
           omega: ModulusOfContinuity, error_fn, quantity: str) -> ConvergenceStudy:
    exponent = theorem_exponent(f, scheme.k0)
    t_grid = np.asarray(t_grid, float)
    t_refined = np.asarray(t_refined, float)
    if np.any(t_grid <= 0) or np.any(t_grid > reg.t_A * (1 + 1e-12)):
        raise ValueError("t grid must lie in (0, t_A]")
    words = [decompose(scheme, xi) for xi in xi_set]
    all_t = np.unique(np.concatenate([t_grid, t_refined]))
    table = {}
    rows = []
    slopes, Cs = [], []
    sample = 0
    for x in points:
        for xi, word in zip(xi_set, words):
            errs = np.array([error_fn(x, xi, word, t) for t in all_t])
            table[sample] = dict(zip(all_t.tolist(), errs.tolist()))
            e_grid = np.array([table[sample][t] for t in t_grid.tolist()])
            bv = np.asarray(omega(t_grid), float) ** exponent
            for t, e, b in zip(t_grid, e_grid, bv):
                rows.append((sample, tuple(map(float, x)), tuple(map(float, xi)), float(t), float(e), float(b)))
            slopes.append(loglog_slope(t_grid, e_grid, floor=1e-10).slope)
            Cs.append(fitted_constant(e_grid, bv))
            sample += 1
    uniform = np.array([max(table[k][t] for k in table) for t in t_grid.tolist()])
    uniform_ref = np.array([max(table[k][t] for k in table) for t in t_refined.tolist()])
    check = bound_check(t_grid, uniform, t_refined, uniform_ref, omega, exponent)
    return ConvergenceStudy(rows, check, omega, exponent, slopes, Cs, quantity)


def convergence_study(f: CarnotMap, reg: ExperimentRegion, scheme: DecompositionScheme, points=None, xi_set=None,
                      t_grid=None, omega: ModulusOfContinuity | None = None, seed: int = 0,
                      exact: bool | None = None, x_samples: int = 4) -> ConvergenceStudy:
    """d(R(x, xi; t), z(x, xi)) over x in A, xi on the unit sphere and t on a geometric grid."""
    G = f.source
    rng = np.random.default_rng(seed)
    points = reg.sample_A(rng, x_samples) if points is None else np.atleast_2d(points)
    xi_set = default_xi_set(G, seed=seed) if xi_set is None else np.atleast_2d(xi_set)
    t_grid = geometric_grid(reg.t_A) if t_grid is None else np.asarray(t_grid, float)
    omega = estimate_modulus(f, reg, seed=seed) if omega is None else omega
    z_cache = {}

    def error(x, xi, word, t):
        key = (tuple(x), tuple(xi))
        if key not in z_cache:
            z_cache[key] = pansu_derivative(f, x, xi, scheme, word, exact)
        R = difference_quotient(f, x, xi, t, exact)
        return f.target.distance(R, z_cache[key])

    return _study(f, reg, scheme, points, xi_set, t_grid, refine_grid(t_grid), omega, error, "R-z")


@dataclass
class BridgeStudy:
    z_z0: ConvergenceStudy
    R_z0: ConvergenceStudy

    @property
    def passed(self) -> bool:
        return self.z_z0.check.passed and self.R_z0.check.passed


def verify_z0_bridge(f: CarnotMap, reg: ExperimentRegion, scheme: DecompositionScheme, points=None, xi_set=None,
                     t_grid=None, omega: ModulusOfContinuity | None = None, seed: int = 0,
                     exact: bool | None = None, x_samples: int = 4) -> BridgeStudy:
    """Both d(z, z0) and d(R, z0) along the grid, each with its own bound check."""
    G = f.source
    rng = np.random.default_rng(seed)
    points = reg.sample_A(rng, x_samples) if points is None else np.atleast_2d(points)
    xi_set = default_xi_set(G, seed=seed) if xi_set is None else np.atleast_2d(xi_set)
    t_grid = geometric_grid(reg.t_A) if t_grid is None else np.asarray(t_grid, float)
    omega = estimate_modulus(f, reg, seed=seed) if omega is None else omega
    z_cache, z0_cache = {}, {}

    def get_z0(x, xi, word, t):
        key = (tuple(x), tuple(xi), t)
        if key not in z0_cache:
            z0_cache[key] = z0(f, x, xi, scheme, t, word, exact)
        return z0_cache[key]

    def err_z(x, xi, word, t):
        key = (tuple(x), tuple(xi))
        if key not in z_cache:
            z_cache[key] = pansu_derivative(f, x, xi, scheme, word, exact)
        return f.target.distance(z_cache[key], get_z0(x, xi, word, t))

    def err_R(x, xi, word, t):
        R = difference_quotient(f, x, xi, t, exact)
        return f.target.distance(R, get_z0(x, xi, word, t))

    refined = refine_grid(t_grid)
    return BridgeStudy(
        _study(f, reg, scheme, points, xi_set, t_grid, refined, omega, err_z, "z-z0"),
        _study(f, reg, scheme, points, xi_set, t_grid, refined, omega, err_R, "R-z0"),
    )


@dataclass
class ContinuityStudy:
    """max over pairs and xi of d(z(x, xi), z(x', xi)) against d(x, x') on geometric shells."""

    radii: np.ndarray
    distances: np.ndarray  # max d(x, x') in each shell
    values: np.ndarray
    rows: list
    omega_bound_ratio: float | None = None

    @property
    def decay_ratio(self) -> float:
        if self.values[0] <= 0:
            return 0.0
        return float(self.values[-1] / self.values[0])

    @property
    def slope(self) -> float:
        return loglog_slope(self.radii, self.values, floor=1e-12).slope

    def summary(self) -> dict:
        return {"radii": self.radii.tolist(), "values": self.values.tolist(), "decay_ratio": self.decay_ratio,
                "slope": self.slope, "omega_bound_ratio": self.omega_bound_ratio,
                "max_value": float(self.values.max())}


def continuity_study(f: CarnotMap, reg: ExperimentRegion, scheme: DecompositionScheme, x_samples: int = 8,
                     radii=None, xi_set=None, seed: int = 0, exact: bool | None = None,
                     omega: ModulusOfContinuity | None = None) -> ContinuityStudy:
    """Pairs x in A and x' = x dil_rho(u) with u on the unit sphere (axis directions included)."""
    G, H = f.source, f.target
    rng = np.random.default_rng(seed)
    radii = np.geomspace(1.0, 1e-4, 9) if radii is None else np.asarray(radii, float)
    xi_set = default_xi_set(G, seed=seed) if xi_set is None else np.atleast_2d(xi_set)
    words = [decompose(scheme, xi) for xi in xi_set]
    X = reg.sample_A(rng, x_samples)
    U = np.vstack([G.unit_basis_points(), G.sample_sphere(rng, x_samples)])
    z_cache = {}

    def z(p, k):
        key = (tuple(p), k)
        if key not in z_cache:
            z_cache[key] = pansu_derivative(f, p, xi_set[k], scheme, words[k], exact)
        return z_cache[key]

    rows, values, dists = [], [], []
    for rho in radii:
        best, best_d = 0.0, 0.0
        for x in X:
            for u in U:
                xp = G.multiply(x, G.dilate(rho, u))
                if not _in_domain(G, f.domain, xp):
                    continue
                dxx = G.distance(x, xp)
                worst = max(H.distance(z(x, k), z(xp, k)) for k in range(len(xi_set)))
                rows.append((float(rho), float(dxx), float(worst)))
                best = max(best, worst)
                best_d = max(best_d, dxx)
        values.append(best)
        dists.append(best_d)
    values = np.array(values)
    ratio = None
    if omega is not None and not omega.degenerate:
        w = np.asarray(omega(np.array(dists)), float) ** (1.0 / H.s)
        ratio = float(np.max(values / w))
    return ContinuityStudy(radii, np.array(dists), values, rows, ratio)
