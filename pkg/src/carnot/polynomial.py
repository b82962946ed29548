"""Sparse multivariate polynomials with exact (Fraction) or float coefficients.

A monomial is a tuple of exponents, one per variable.  Coefficients are kept
as given: ``Fraction``/``int`` stay exact, floats stay floats.  Zero
coefficients are never stored.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Number
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]


def is_exact(value) -> bool:
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


def _clean(value):
    # ints become Fractions so exact results have a uniform type
    if isinstance(value, int) and not isinstance(value, bool):
        return Fraction(value)
    return value


class SparsePolynomial:
    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[Monomial, Number] | None = None):
        self.nvars = nvars
        clean = {}
        for mono, coeff in (terms or {}).items():
            if len(mono) != nvars:
                raise ValueError(f"monomial {mono} does not have {nvars} exponents")
            if any(e < 0 for e in mono):
                raise ValueError(f"negative exponent in {mono}")
            if coeff != 0:
                clean[tuple(mono)] = _clean(coeff)
        self.terms: dict[Monomial, Number] = clean

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "SparsePolynomial":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, value) -> "SparsePolynomial":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars: int, index: int) -> "SparsePolynomial":
        mono = [0] * nvars
        mono[index] = 1
        return cls(nvars, {tuple(mono): Fraction(1)})

    @classmethod
    def univariate(cls, coeffs: Sequence) -> "SparsePolynomial":
        """Polynomial in one variable from ascending coefficients."""
        return cls(1, {(k,): c for k, c in enumerate(coeffs)})

    # -- basic protocol ---------------------------------------------------

    def __bool__(self) -> bool:
        return bool(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, SparsePolynomial):
            return self.nvars == other.nvars and self.terms == other.terms
        if isinstance(other, Number):
            return self == SparsePolynomial.constant(self.nvars, other)
        return NotImplemented

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        return f"SparsePolynomial({self.nvars}, {self.to_string()})"

    def copy(self) -> "SparsePolynomial":
        return SparsePolynomial(self.nvars, dict(self.terms))

    # -- arithmetic -------------------------------------------------------

    def _coerce(self, other) -> "SparsePolynomial":
        if isinstance(other, SparsePolynomial):
            if other.nvars != self.nvars:
                raise ValueError("polynomials over different variable sets")
            return other
        if isinstance(other, Number):
            return SparsePolynomial.constant(self.nvars, other)
        raise TypeError(f"cannot combine polynomial with {type(other).__name__}")

    def __add__(self, other) -> "SparsePolynomial":
        other = self._coerce(other)
        out = dict(self.terms)
        for mono, c in other.terms.items():
            v = out.get(mono, 0) + c
            if v == 0:
                out.pop(mono, None)
            else:
                out[mono] = v
        return SparsePolynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self) -> "SparsePolynomial":
        return SparsePolynomial(self.nvars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "SparsePolynomial":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "SparsePolynomial":
        return self._coerce(other) - self

    def __mul__(self, other) -> "SparsePolynomial":
        if isinstance(other, Number):
            if other == 0:
                return SparsePolynomial(self.nvars)
            return SparsePolynomial(self.nvars, {m: c * other for m, c in self.terms.items()})
        other = self._coerce(other)
        out: dict[Monomial, Number] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                mono = tuple(a + b for a, b in zip(m1, m2))
                out[mono] = out.get(mono, 0) + c1 * c2
        return SparsePolynomial(self.nvars, out)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "SparsePolynomial":
        if not isinstance(other, Number):
            raise TypeError("polynomials can only be divided by scalars")
        if is_exact(other):
            return self * (1 / Fraction(other))
        return self * (1.0 / other)

    def __pow__(self, power: int) -> "SparsePolynomial":
        if power < 0:
            raise ValueError("negative powers are not polynomials")
        result = SparsePolynomial.constant(self.nvars, 1)
        for _ in range(power):
            result = result * self
        return result

    # -- structure --------------------------------------------------------

    def degree(self) -> int:
        return max((sum(m) for m in self.terms), default=-1)

    def variables(self) -> set[int]:
        used = set()
        for mono in self.terms:
            used.update(i for i, e in enumerate(mono) if e)
        return used

    def weighted_degree(self, mono: Monomial, weights: Sequence[int]) -> int:
        return sum(e * w for e, w in zip(mono, weights))

    def is_exact(self) -> bool:
        return all(isinstance(c, Fraction) for c in self.terms.values())

    def coefficient(self, mono: Monomial):
        return self.terms.get(tuple(mono), Fraction(0))

    # -- calculus ---------------------------------------------------------

    def derivative(self, var: int) -> "SparsePolynomial":
        out = {}
        for mono, c in self.terms.items():
            e = mono[var]
            if e:
                new = list(mono)
                new[var] = e - 1
                out[tuple(new)] = c * e
        return SparsePolynomial(self.nvars, out)

    def antiderivative(self, var: int) -> "SparsePolynomial":
        """Antiderivative in ``var`` with zero constant term."""
        out = {}
        for mono, c in self.terms.items():
            new = list(mono)
            new[var] += 1
            out[tuple(new)] = c / Fraction(new[var]) if isinstance(c, Fraction) else c / new[var]
        return SparsePolynomial(self.nvars, out)

    # -- substitution -----------------------------------------------------

    def subs(self, assignment: Mapping[int, Number]) -> "SparsePolynomial":
        """Fix some variables to numbers; the variable set is unchanged."""
        out: dict[Monomial, Number] = {}
        for mono, c in self.terms.items():
            new = list(mono)
            for var, value in assignment.items():
                e = new[var]
                if e:
                    c = c * _clean(value) ** e
                    new[var] = 0
            if c != 0:
                key = tuple(new)
                out[key] = out.get(key, 0) + c
        return SparsePolynomial(self.nvars, out)

    def compose(self, polys: Sequence["SparsePolynomial"]) -> "SparsePolynomial":
        """Substitute ``polys[i]`` for variable ``i``; all must share one variable set."""
        if len(polys) != self.nvars:
            raise ValueError("need one polynomial per variable")
        if not polys:
            return self.copy()
        target = polys[0].nvars
        powers: dict[tuple[int, int], SparsePolynomial] = {}

        def power(var: int, e: int) -> SparsePolynomial:
            key = (var, e)
            if key not in powers:
                powers[key] = polys[var] if e == 1 else power(var, e - 1) * polys[var]
            return powers[key]

        result = SparsePolynomial(target)
        for mono, c in self.terms.items():
            term = SparsePolynomial.constant(target, c)
            for var, e in enumerate(mono):
                if e:
                    term = term * power(var, e)
            result = result + term
        return result

    # -- evaluation -------------------------------------------------------

    def __call__(self, *values):
        if len(values) == 1 and not isinstance(values[0], Number):
            values = tuple(values[0])
        return self.evaluate(values)

    def evaluate(self, values: Sequence):
        """Evaluate at a point.

        Exact when every coefficient and value is rational; otherwise the
        monomial contributions are summed with ``math.fsum``.
        """
        if len(values) != self.nvars:
            raise ValueError(f"expected {self.nvars} values, got {len(values)}")
        exact = self.is_exact() and all(is_exact(v) for v in values)
        if exact:
            vals = [Fraction(v) for v in values]
            total = Fraction(0)
            for mono, c in self.terms.items():
                term = c
                for v, e in zip(vals, mono):
                    if e:
                        term *= v**e
                total += term
            return total
        vals = [float(v) for v in values]
        parts = []
        for mono, c in self.terms.items():
            term = float(c)
            for v, e in zip(vals, mono):
                if e:
                    term *= v**e
            parts.append(term)
        return math.fsum(parts)

    def compile(self) -> tuple[np.ndarray, np.ndarray]:
        """Exponent matrix and float coefficients for batched evaluation."""
        if not self.terms:
            return np.zeros((0, self.nvars), dtype=np.int64), np.zeros(0)
        monos = list(self.terms)
        exps = np.array(monos, dtype=np.int64)
        coeffs = np.array([float(self.terms[m]) for m in monos])
        return exps, coeffs

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        """Float evaluation at each row of ``points`` (shape (B, nvars))."""
        exps, coeffs = self.compile()
        return evaluate_compiled(exps, coeffs, points)

    # -- formatting -------------------------------------------------------

    def to_string(self, names: Sequence[str] | None = None) -> str:
        if not self.terms:
            return "0"
        names = names or [f"v{i + 1}" for i in range(self.nvars)]
        pieces = []
        for mono in sorted(self.terms, reverse=True):
            c = self.terms[mono]
            factors = []
            for name, e in zip(names, mono):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            body = "*".join(factors)
            if not body:
                pieces.append(f"{c}")
            elif c == 1:
                pieces.append(body)
            elif c == -1:
                pieces.append(f"-{body}")
            else:
                pieces.append(f"{c}*{body}")
        return " + ".join(pieces).replace("+ -", "- ")

    def to_json(self) -> list:
        out = []
        for mono in sorted(self.terms):
            c = self.terms[mono]
            if isinstance(c, Fraction):
                out.append({"exponents": list(mono), "num": c.numerator, "den": c.denominator})
            else:
                out.append({"exponents": list(mono), "value": float(c)})
        return out


def evaluate_compiled(exps: np.ndarray, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if coeffs.size == 0:
        return np.zeros(points.shape[0])
    mons = np.ones((points.shape[0], exps.shape[0]))
    for var in range(exps.shape[1]):
        col = exps[:, var]
        if col.any():
            mons *= points[:, var][:, None] ** col[None, :]
    return mons @ coeffs


def variables(nvars: int) -> list[SparsePolynomial]:
    return [SparsePolynomial.variable(nvars, i) for i in range(nvars)]


def polyval_exact(coeffs: Iterable, t):
    """Horner evaluation of an ascending coefficient list (used for univariate data)."""
    acc = 0
    for c in reversed(list(coeffs)):
        acc = acc * t + c
    return acc
