"""Horizontal vector fields, lifting of horizontal controls, horizontal rays."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial

from .fitting import SlopeFit, loglog_slope
from .group import CarnotGroup
from .polynomial import SparsePolynomial, is_exact


class QuadratureError(RuntimeError):
    pass


# -- vector fields ------------------------------------------------------------


def _restrict_to_x(poly: SparsePolynomial, N: int) -> SparsePolynomial:
    return SparsePolynomial(N, {mono[:N]: c for mono, c in poly.terms.items()})


@lru_cache(maxsize=None)
def field_polynomials(group: CarnotGroup) -> tuple[tuple[SparsePolynomial, ...], ...]:
    """fields[j][i] = d Q_i(x, y) / d y_j at y = 0, as a polynomial in x."""
    N = group.N
    zero_y = {N + k: 0 for k in range(N)}
    return tuple(
        tuple(_restrict_to_x(q.derivative(N + j).subs(zero_y), N) for q in group.law.Q)
        for j in range(group.n)
    )


def vector_field(group: CarnotGroup, j: int, x) -> np.ndarray | tuple:
    """X_j(x) = e_j + dQ(x, y)/dy_j at y = 0 (0-based j)."""
    if not 0 <= j < group.n:
        raise ValueError(f"X_{j + 1} is not horizontal: n = {group.n}")
    group._check(x)
    polys = field_polynomials(group)[j]
    exact = all(is_exact(v) for v in x) and not isinstance(x, np.ndarray)
    vals = [p.evaluate(list(x)) for p in polys]
    if exact:
        out = [Fraction(v) for v in vals]
        out[j] += 1
        return tuple(out)
    out = np.array(vals, float)
    out[j] += 1.0
    return out


# -- controls -----------------------------------------------------------------


@dataclass(frozen=True)
class ControlSegment:
    """One piece of a control on [start, end].

    ``coeffs[j]`` are ascending coefficients of h_j in the local time
    u = t - start; ``func`` is used instead for non-polynomial pieces.
    """

    start: object
    end: object
    coeffs: tuple[tuple, ...] | None = None
    func: Callable[[float], Sequence[float]] | None = None

    @property
    def exact(self) -> bool:
        return (
            self.coeffs is not None
            and is_exact(self.start)
            and is_exact(self.end)
            and all(is_exact(c) for comp in self.coeffs for c in comp)
        )

    def __call__(self, t) -> np.ndarray:
        if self.coeffs is not None:
            u = float(t) - float(self.start)
            return np.array([Polynomial([float(c) for c in comp])(u) if comp else 0.0 for comp in self.coeffs])
        return np.asarray(self.func(float(t)), float)


def _frac(v):
    if isinstance(v, str):
        return Fraction(v)
    if is_exact(v):
        return Fraction(v)
    return float(v)


@dataclass(frozen=True)
class HorizontalControl:
    segments: tuple[ControlSegment, ...]
    n: int

    @property
    def T(self):
        return self.segments[-1].end

    @classmethod
    def polynomial(cls, coeffs: Sequence[Sequence], T=1) -> "HorizontalControl":
        """Single polynomial piece on [0, T]; ``coeffs[j]`` ascending in t."""
        comps = tuple(tuple(_frac(c) for c in comp) for comp in coeffs)
        return cls((ControlSegment(Fraction(0), _frac(T), comps),), len(comps))

    @classmethod
    def constant(cls, values: Sequence, T=1) -> "HorizontalControl":
        return cls.polynomial([[v] for v in values], T)

    @classmethod
    def from_function(cls, func: Callable[[float], Sequence[float]], T: float, n: int) -> "HorizontalControl":
        return cls((ControlSegment(0.0, float(T), None, func),), n)

    @classmethod
    def concat(cls, *controls: "HorizontalControl") -> "HorizontalControl":
        segments = []
        offset = Fraction(0)
        for ctrl in controls:
            if ctrl.n != controls[0].n:
                raise ValueError("controls of different horizontal dimension")
            for seg in ctrl.segments:
                start = offset + seg.start
                end = offset + seg.end
                if seg.func is not None:
                    shift = float(start) - float(seg.start)
                    func = (lambda f, sh: (lambda t: f(t - sh)))(seg.func, shift)
                    segments.append(ControlSegment(start, end, None, func))
                else:
                    segments.append(ControlSegment(start, end, seg.coeffs))
            offset = offset + ctrl.T
        return cls(tuple(segments), controls[0].n)

    def __call__(self, t) -> np.ndarray:
        for seg in self.segments:
            if t <= seg.end:
                return seg(t)
        raise ValueError(f"t = {t} outside [0, {self.T}]")

    def to_json(self) -> dict:
        out = []
        for seg in self.segments:
            if seg.coeffs is None:
                raise ValueError("function segments cannot be serialised")
            out.append(
                {
                    "duration": str(Fraction(seg.end) - Fraction(seg.start)) if seg.exact else float(seg.end) - float(seg.start),
                    "coeffs": [[str(c) if isinstance(c, Fraction) else c for c in comp] for comp in seg.coeffs],
                }
            )
        return {"segments": out}

    @classmethod
    def from_json(cls, data: dict) -> "HorizontalControl":
        """``{"segments": [{"duration": d, "coeffs": [[...], ...]}, ...]}``, local time per segment."""
        segments = []
        t = Fraction(0)
        n = None
        for spec in data["segments"]:
            comps = tuple(tuple(_frac(c) for c in comp) for comp in spec["coeffs"])
            dur = _frac(spec.get("duration", 1))
            if dur <= 0:
                raise ValueError("segment durations must be positive")
            if n is not None and len(comps) != n:
                raise ValueError("inconsistent number of control components")
            n = len(comps)
            segments.append(ControlSegment(t, t + dur, comps))
            t = t + dur
        if not segments:
            raise ValueError("control has no segments")
        return cls(tuple(segments), n)


# -- curves -------------------------------------------------------------------


@dataclass(frozen=True)
class CurvePiece:
    start: object
    end: object
    coords: tuple[SparsePolynomial, ...]  # univariate, in u = t - start

    def evaluate(self, t):
        exact = is_exact(t) and is_exact(self.start) and all(p.is_exact() for p in self.coords)
        if exact:
            u = Fraction(t) - Fraction(self.start)
            return tuple(p.evaluate([u]) for p in self.coords)
        u = float(t) - float(self.start)
        return np.array([p.evaluate([u]) for p in self.coords])

    def derivative(self, t):
        u = float(t) - float(self.start)
        return np.array([p.derivative(0).evaluate([u]) for p in self.coords])


@dataclass(frozen=True)
class Curve:
    """A curve given by exact polynomial pieces, or by samples, or both."""

    pieces: tuple[CurvePiece, ...] | None = None
    times: np.ndarray | None = None
    points: np.ndarray | None = None

    def __post_init__(self):
        if self.times is not None:
            t = np.asarray(self.times, float)
            if np.any(np.diff(t) <= 0):
                raise ValueError("sample times must be strictly increasing")

    @classmethod
    def from_polynomials(cls, coords: Sequence[Sequence], T=1) -> "Curve":
        polys = tuple(SparsePolynomial.univariate([_frac(c) for c in comp]) for comp in coords)
        return cls(pieces=(CurvePiece(Fraction(0), _frac(T), polys),))

    @classmethod
    def from_samples(cls, times, points) -> "Curve":
        return cls(times=np.asarray(times, float), points=np.asarray(points, float))

    @property
    def start(self):
        return self.pieces[0].start if self.pieces else float(self.times[0])

    @property
    def end(self):
        return self.pieces[-1].end if self.pieces else float(self.times[-1])

    @property
    def exact(self) -> bool:
        return bool(self.pieces) and all(all(p.is_exact() for p in pc.coords) for pc in self.pieces)

    def _piece(self, t) -> CurvePiece:
        if not self.pieces:
            raise ValueError("curve has no polynomial form")
        if t < self.start or t > self.end:
            raise ValueError(f"t = {t} outside curve domain [{self.start}, {self.end}]")
        for pc in self.pieces:
            if t <= pc.end:
                return pc
        return self.pieces[-1]

    def __call__(self, t):
        if self.pieces:
            return self._piece(t).evaluate(t)
        if t < self.times[0] or t > self.times[-1]:
            raise ValueError(f"t = {t} outside curve domain")
        return np.array([np.interp(float(t), self.times, self.points[:, i]) for i in range(self.points.shape[1])])

    def derivative(self, t) -> np.ndarray:
        if self.pieces:
            return self._piece(t).derivative(t)
        return np.array([np.interp(float(t), self.times, col) for col in np.gradient(self.points, self.times, axis=0).T])

    def sample(self, m: int = 201) -> "Curve":
        times = np.linspace(float(self.start), float(self.end), m)
        points = np.array([np.asarray(self(t), float) for t in times])
        return Curve(self.pieces, times, points)


# -- lifting ------------------------------------------------------------------


def _lift_polynomial_piece(group: CarnotGroup, start_point, coeffs, start, end) -> CurvePiece:
    """Integrate one polynomial piece layer by layer; exact for rational data."""
    N, n = group.N, group.n
    fields = field_polynomials(group)
    h = [SparsePolynomial.univariate(list(c)) for c in coeffs]
    coords: list[SparsePolynomial | None] = [None] * N
    for j in range(n):
        coords[j] = SparsePolynomial.constant(1, start_point[j]) + h[j].antiderivative(0)
    order = sorted(range(n, N), key=lambda i: group.algebra.degrees[i])
    zero = SparsePolynomial.zero(1)
    for i in order:
        known = [c if c is not None else zero for c in coords]
        rhs = zero
        for j in range(n):
            if fields[j][i] and h[j]:
                rhs = rhs + h[j] * fields[j][i].compose(known)
        coords[i] = SparsePolynomial.constant(1, start_point[i]) + rhs.antiderivative(0)
    return CurvePiece(start, end, tuple(coords))


def _chebyshev_pieces(func, a: float, b: float, n: int, degree: int = 10, tol: float = 1e-13, depth: int = 0):
    """Adaptive piecewise polynomial fit of a control; returns (a, b, coeffs in u = t - a)."""
    L = b - a
    comps = []
    probe = np.linspace(a, b, 4 * degree + 3)
    values = np.array([np.asarray(func(t), float) for t in probe])
    scale = 1.0 + np.abs(values).max()
    ok = True
    for j in range(n):
        cheb = Chebyshev.interpolate(lambda u, j=j: np.array([float(np.asarray(func(a + v), float)[j]) for v in np.atleast_1d(u)]),
                                     degree, domain=[0.0, L])
        if np.abs(cheb(probe - a) - values[:, j]).max() > tol * scale:
            ok = False
            break
        comps.append(tuple(cheb.convert(kind=Polynomial, domain=[0.0, L], window=[0.0, L]).coef))
    if ok:
        return [(a, b, tuple(comps))]
    if depth > 40:
        raise QuadratureError(f"control could not be resolved on [{a}, {b}]")
    mid = 0.5 * (a + b)
    return (_chebyshev_pieces(func, a, mid, n, degree, tol, depth + 1)
            + _chebyshev_pieces(func, mid, b, n, degree, tol, depth + 1))


def lift(group: CarnotGroup, x0, control: HorizontalControl) -> Curve:
    """Horizontal curve with gamma(0) = x0 and horizontal velocity h.

    Polynomial segments are integrated exactly (in rationals when all data is
    rational).  Other segments are first resolved into short polynomial
    pieces by adaptive Chebyshev interpolation.
    """
    if control.n != group.n:
        raise ValueError(f"control has {control.n} components, group has n = {group.n}")
    group._check(x0)
    exact_start = all(is_exact(v) for v in x0) and not isinstance(x0, np.ndarray)
    point = tuple(Fraction(v) for v in x0) if exact_start else tuple(float(v) for v in x0)
    pieces = []
    for seg in control.segments:
        if seg.coeffs is not None:
            if seg.exact and all(isinstance(v, Fraction) for v in point):
                parts = [(seg.start, seg.end, seg.coeffs)]
            else:
                parts = [(float(seg.start), float(seg.end), tuple(tuple(float(c) for c in comp) for comp in seg.coeffs))]
                point = tuple(float(v) for v in point)
        else:
            point = tuple(float(v) for v in point)
            parts = _chebyshev_pieces(seg.func, float(seg.start), float(seg.end), control.n)
        for a, b, coeffs in parts:
            piece = _lift_polynomial_piece(group, point, coeffs, a, b)
            pieces.append(piece)
            end_value = piece.evaluate(b)
            point = tuple(end_value)
    return Curve(pieces=tuple(pieces))


# -- horizontality --------------------------------------------------------------


@dataclass
class HorizontalityReport:
    passed: bool
    max_residual: float
    tol: float
    checked_points: int
    symbolic_zero: bool | None = None


def horizontality_residuals(group: CarnotGroup, curve: Curve) -> list[tuple[SparsePolynomial, ...]]:
    """Per piece, the polynomials gamma' - sum_j gamma_j' X_j(gamma)."""
    fields = field_polynomials(group)
    out = []
    for pc in curve.pieces:
        d = [p.derivative(0) for p in pc.coords]
        res = []
        for i in range(group.N):
            r = d[i]
            if i < group.n:
                r = r - d[i]
            else:
                for j in range(group.n):
                    if fields[j][i]:
                        r = r - d[j] * fields[j][i].compose(list(pc.coords))
            res.append(r)
        out.append(tuple(res))
    return out


def is_horizontal(group: CarnotGroup, curve: Curve, tol: float = 1e-8, checks_per_piece: int = 33) -> HorizontalityReport:
    """Max of |gamma' - sum_j gamma_j' X_j(gamma)| over checked times."""
    if curve.pieces:
        residuals = horizontality_residuals(group, curve)
        symbolic = all(all(r.is_zero() for r in res) for res in residuals)
        worst = 0.0
        count = 0
        for pc, res in zip(curve.pieces, residuals):
            L = float(pc.end) - float(pc.start)
            for u in np.linspace(0.0, L, checks_per_piece):
                vec = np.array([r.evaluate([u]) for r in res], float)
                worst = max(worst, float(np.linalg.norm(vec)))
                count += 1
        return HorizontalityReport(worst <= tol, worst, tol, count, symbolic)
    if curve.times is None or len(curve.times) < 3:
        raise ValueError("need at least 3 samples to estimate derivatives")
    t, P = np.asarray(curve.times, float), np.asarray(curve.points, float)
    dP = (P[2:] - P[:-2]) / (t[2:] - t[:-2])[:, None]
    worst = 0.0
    for k in range(len(dP)):
        x = P[k + 1]
        expected = sum(dP[k, j] * vector_field(group, j, x) for j in range(group.n))
        worst = max(worst, float(np.linalg.norm(dP[k] - expected)))
    return HorizontalityReport(worst <= tol, worst, tol, len(dP), None)


# -- horizontal rays ----------------------------------------------------------------


def horizontal_ray(group: CarnotGroup, f0, v: Sequence, t):
    """f0 * (t v, 0, ..., 0)."""
    if len(v) != group.n:
        raise ValueError(f"direction needs {group.n} components")
    exact = not isinstance(f0, np.ndarray) and all(is_exact(c) for c in list(f0) + list(v)) and is_exact(t)
    if exact:
        step = [Fraction(t) * Fraction(c) for c in v] + [Fraction(0)] * (group.N - group.n)
    else:
        step = np.concatenate([float(t) * np.asarray(v, float), np.zeros(group.N - group.n)])
    return group.multiply(f0, step)


@dataclass
class RayErrorStudy:
    t: np.ndarray
    errors: np.ndarray
    fit: SlopeFit
    C_hat: float
    exponent: float
    initial_velocity: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def rows(self):
        return list(zip(self.t.tolist(), self.errors.tolist()))


def ray_error_study(group: CarnotGroup, curve: Curve, t_grid: Sequence[float]) -> RayErrorStudy:
    """d(gamma(t), L_gamma(t)) on the grid, its log-log slope and C with error <= C t^(1 + 1/s)."""
    t_grid = np.asarray(t_grid, float)
    t0 = curve.start
    if np.any(t_grid < float(t0)) or np.any(t_grid - float(t0) > float(curve.end) - float(t0)):
        raise ValueError("t values outside the curve domain")
    if curve.pieces:
        v = curve.pieces[0].derivative(t0)[: group.n]
        if curve.exact:
            v_exact = [p.derivative(0).evaluate([Fraction(0)]) for p in curve.pieces[0].coords[: group.n]]
    else:
        t, P = curve.times, curve.points
        v = ((-3 * P[0] + 4 * P[1] - P[2]) / (t[2] - t[0]))[: group.n]
    f0 = curve(t0)
    errors = []
    for t in t_grid:
        if curve.exact:
            tt = Fraction(t0) + Fraction(t)
            ray = horizontal_ray(group, f0, v_exact, Fraction(t))
            errors.append(group.distance(ray, curve(tt)))
        else:
            ray = horizontal_ray(group, np.asarray(f0, float), v, t)
            errors.append(group.distance(ray, np.asarray(curve(float(t0) + t), float)))
    errors = np.array(errors)
    exponent = 1.0 + 1.0 / group.s
    fit = loglog_slope(t_grid, errors)
    C_hat = float(np.max(errors / t_grid**exponent))
    return RayErrorStudy(t_grid, errors, fit, C_hat, exponent, np.asarray(v, float))
