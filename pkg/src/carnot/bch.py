"""Group law ``xy = x + y + Q(x, y)`` from the truncated Dynkin (BCH) series."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from .algebra import Check, Diagnostics, StratifiedAlgebra
from .polynomial import SparsePolynomial, evaluate_compiled, is_exact, variables


@dataclass(frozen=True, eq=False)
class GroupLaw:
    """Vector polynomial Q in the 2N variables (x_1..x_N, y_1..y_N)."""

    algebra: StratifiedAlgebra
    Q: tuple[SparsePolynomial, ...]

    def __post_init__(self):
        if len(self.Q) != self.algebra.N:
            raise ValueError("need one polynomial per coordinate")
        for q in self.Q:
            if q.nvars != 2 * self.algebra.N:
                raise ValueError("Q must be polynomial in 2N variables")

    @property
    def N(self) -> int:
        return self.algebra.N

    def variable_names(self) -> list[str]:
        N = self.N
        return [f"x{i + 1}" for i in range(N)] + [f"y{i + 1}" for i in range(N)]

    @cached_property
    def _compiled(self):
        return [q.compile() for q in self.Q]

    def evaluate(self, x: Sequence, y: Sequence):
        """Q(x, y); exact tuple for rational input, float array otherwise."""
        point = list(x) + list(y)
        if all(is_exact(v) for v in point):
            return tuple(q.evaluate(point) for q in self.Q)
        return np.array([q.evaluate(point) for q in self.Q])

    def evaluate_batch(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        pts = np.hstack([np.asarray(x, float), np.asarray(y, float)])
        return np.stack([evaluate_compiled(e, c, pts) for e, c in self._compiled], axis=1)

    def describe(self) -> str:
        names = self.variable_names()
        return "\n".join(f"Q{i + 1} = {q.to_string(names)}" for i, q in enumerate(self.Q))

    def to_json(self) -> dict:
        return {
            "algebra": self.algebra.name,
            "variables": self.variable_names(),
            "Q": [q.to_json() for q in self.Q],
            "text": [q.to_string(self.variable_names()) for q in self.Q],
        }


def _dynkin_terms(depth: int):
    """Yield (coefficient, word) pairs of the Dynkin series up to total degree ``depth``.

    Letters are 0 for x and 1 for y; the word stands for its right-nested bracket.
    """
    pairs = [(r, s) for r in range(depth + 1) for s in range(depth + 1) if 1 <= r + s <= depth]
    for n in range(1, depth + 1):
        for combo in itertools.product(pairs, repeat=n):
            total = sum(r + s for r, s in combo)
            if total > depth:
                continue
            denom = total
            for r, s in combo:
                denom *= math.factorial(r) * math.factorial(s)
            coeff = Fraction((-1) ** (n - 1), n * denom)
            word = []
            for r, s in combo:
                word += [0] * r + [1] * s
            yield coeff, tuple(word)


def compute_group_law(algebra: StratifiedAlgebra) -> GroupLaw:
    """Q(x, y) = log(exp x exp y) - x - y, exact, truncated at bracket depth s."""
    N = algebra.N
    vs = variables(2 * N)
    letters = (vs[:N], vs[N:])
    zero = SparsePolynomial.zero(2 * N)

    nested: dict[tuple[int, ...], list[SparsePolynomial]] = {}

    def bracket_word(word):
        if word in nested:
            return nested[word]
        if len(word) == 1:
            out = list(letters[word[0]])
        else:
            out = algebra.constants.bracket(letters[word[0]], bracket_word(word[1:]), zero)
        nested[word] = out
        return out

    acc: dict[tuple[int, ...], Fraction] = {}
    for coeff, word in _dynkin_terms(algebra.s):
        if len(word) >= 2:
            acc[word] = acc.get(word, Fraction(0)) + coeff

    Q = [zero] * N
    for word, coeff in sorted(acc.items()):
        if coeff == 0:
            continue
        element = bracket_word(word)
        Q = [q + e * coeff for q, e in zip(Q, element)]
    return GroupLaw(algebra, tuple(Q))


def verify_group_law(law: GroupLaw) -> Diagnostics:
    """Symbolic checks of the structural properties of Q."""
    alg = law.algebra
    N, n, deg = alg.N, alg.n, alg.degrees
    weights = list(deg) + list(deg)
    diag = Diagnostics()

    bad = next((i for i in range(n) if not law.Q[i].is_zero()), None)
    diag.checks.append(
        Check(
            "horizontal_vanishing",
            bad is None,
            "" if bad is None else f"Q{bad + 1} = {law.Q[bad].to_string(law.variable_names())} is not zero",
            None if bad is None else (bad + 1,),
        )
    )

    zero_y = {N + j: 0 for j in range(N)}
    zero_x = {j: 0 for j in range(N)}
    vs = variables(2 * N)
    diagonal = vs[:N] + vs[:N]
    witness = None
    for i in range(n, N):
        q = law.Q[i]
        for label, reduced in (("Q(x,0)", q.subs(zero_y)), ("Q(0,y)", q.subs(zero_x)), ("Q(x,x)", q.compose(diagonal))):
            if not reduced.is_zero():
                mono = next(iter(reduced.terms))
                witness = (i + 1, label, mono, reduced.to_string(law.variable_names()))
                break
        if witness:
            break
    diag.checks.append(
        Check(
            "antisymmetric_factors",
            witness is None,
            "" if witness is None else f"{witness[1]} component {witness[0]} = {witness[3]}",
            witness,
        )
    )

    witness = None
    for i in range(N):
        for mono in law.Q[i].terms:
            if law.Q[i].weighted_degree(mono, weights) != deg[i]:
                witness = (i + 1, mono)
                break
        if witness:
            break
    diag.checks.append(
        Check(
            "homogeneity",
            witness is None,
            "" if witness is None else f"Q{witness[0]} has monomial {witness[1]} of weighted degree != {deg[witness[0] - 1]}",
            witness,
        )
    )

    witness = None
    for i in range(N):
        for var in law.Q[i].variables():
            if deg[var % N] >= deg[i]:
                witness = (i + 1, law.variable_names()[var])
                break
        if witness:
            break
    diag.checks.append(
        Check(
            "lower_degree_dependence",
            witness is None,
            "" if witness is None else f"Q{witness[0]} depends on {witness[1]} of degree >= d_{witness[0]}",
            witness,
        )
    )
    return diag
