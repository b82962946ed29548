"""Factor group elements into words of horizontal basis multiples.

The template is fixed per group: one letter per horizontal direction,
followed by commutator blocks, one per basis direction of each higher layer.
A block of depth m for the bracket word (j1, ..., jm) is the iterated group
commutator [a1 e_j1, [a2 e_j2, [..., am e_jm]]]; at lowest order its product
is a1...am times the right-nested Lie bracket, with nothing below layer m.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy

from .algebra import StratifiedAlgebra
from .group import CarnotGroup
from .polynomial import is_exact


class DecompositionError(RuntimeError):
    pass


Letter = tuple[int, object]  # (direction j, amplitude lambda)


def commutator_template(word: Sequence[int]) -> list[tuple[int, int, int]]:
    """Letters (direction, amplitude index, sign) of the iterated group commutator."""
    if len(word) == 1:
        return [(word[0], 0, 1)]
    head = [(word[0], 0, 1)]
    tail = [(j, idx + 1, sign) for j, idx, sign in commutator_template(word[1:])]

    def inverse(letters):
        return [(j, idx, -sign) for j, idx, sign in reversed(letters)]

    return head + tail + inverse(head) + inverse(tail)


def _layer_vector(algebra: StratifiedAlgebra, word, layer) -> list[Fraction]:
    v = algebra.nested_bracket(word)
    return [v[k] for k in layer]


def spanning_words(algebra: StratifiedAlgebra, m: int) -> list[tuple[tuple[int, ...], list[Fraction]]]:
    """Bracket words of generators whose vectors form a basis of layer m.

    For each basis direction a word whose bracket is a multiple of exactly
    that direction is preferred; otherwise words are added greedily by rank.
    """
    layer = list(algebra.strat.layer(m))
    candidates = []
    for word in itertools.product(range(algebra.n), repeat=m):
        if m >= 2 and word[-1] == word[-2]:
            continue
        v = _layer_vector(algebra, word, layer)
        if any(v):
            candidates.append((word, v))
    chosen: list[tuple[tuple[int, ...], list[Fraction]]] = []
    for pos in range(len(layer)):
        for word, v in candidates:
            if v[pos] != 0 and all(c == 0 for q, c in enumerate(v) if q != pos):
                chosen.append((word, v))
                break
        else:
            chosen = []
            break
    if len(chosen) == len(layer):
        return chosen

    def rank(vs):
        return sympy.Matrix([[sympy.Rational(c.numerator, c.denominator) for c in v] for v in vs]).rank() if vs else 0

    chosen = []
    for word, v in candidates:
        if rank([c for _, c in chosen] + [v]) > len(chosen):
            chosen.append((word, v))
        if len(chosen) == len(layer):
            return chosen
    raise DecompositionError(f"bracket words of generators do not span layer {m}")


def _inverse_matrix(columns: list[list[Fraction]]) -> list[list[Fraction]]:
    M = sympy.Matrix([[sympy.Rational(c.numerator, c.denominator) for c in col] for col in columns]).T
    inv = M.inv()
    return [[Fraction(int(inv[i, j].p), int(inv[i, j].q)) for j in range(inv.cols)] for i in range(inv.rows)]


@dataclass(frozen=True)
class Block:
    layer: int
    word: tuple[int, ...]
    vector: tuple[Fraction, ...]  # layer-m part of the bracket
    letters: tuple[tuple[int, int, int], ...]


@dataclass(frozen=True, eq=False)
class DecompositionScheme:
    group: CarnotGroup
    blocks: tuple[Block, ...]
    layer_inverse: dict  # layer m -> inverse of the block-vector matrix
    C0: float | None = None

    @property
    def k0(self) -> int:
        return self.group.n + sum(len(b.letters) for b in self.blocks)

    @property
    def template(self) -> list[int]:
        """Letter directions in product order (0-based)."""
        return list(range(self.group.n)) + [j for b in self.blocks for j, _, _ in b.letters]


@dataclass(frozen=True)
class HorizontalWord:
    """Letters in product order: ``letters[0]`` is the leftmost factor."""

    letters: tuple[Letter, ...]
    product: object
    residual: float
    polished: bool = False

    @property
    def k0(self) -> int:
        return len(self.letters)

    def nonzero(self) -> list[Letter]:
        return [(j, lam) for j, lam in self.letters if lam != 0]

    def amplitudes(self) -> np.ndarray:
        return np.array([float(lam) for _, lam in self.letters])

    def elements(self, group: CarnotGroup, exact: bool | None = None) -> list:
        if exact is None:
            exact = all(is_exact(lam) for _, lam in self.letters)
        out = []
        for j, lam in self.letters:
            if exact:
                e = [Fraction(0)] * group.N
                e[j] = Fraction(lam)
                out.append(tuple(e))
            else:
                e = np.zeros(group.N)
                e[j] = float(lam)
                out.append(e)
        return out

    def as_control(self, n: int):
        """Piecewise-constant control tracing the word from the identity, unit time per letter."""
        from .horizontal import HorizontalControl

        parts = []
        for j, lam in self.letters:
            values = [0] * n
            values[j] = lam
            parts.append(HorizontalControl.constant(values))
        return HorizontalControl.concat(*parts)


def build_scheme(group: CarnotGroup) -> DecompositionScheme:
    alg = group.algebra
    blocks = []
    inverses = {}
    for m in range(2, group.s + 1):
        chosen = spanning_words(alg, m)
        for word, v in chosen:
            block = Block(m, tuple(word), tuple(v), tuple(commutator_template(word)))
            # realised at the origin: unit amplitudes give the bracket vector at layer m
            prod = group.product(*_block_elements(group, block, [Fraction(1)] * m, exact=True))
            deg = alg.degrees
            if any(prod[k] != 0 for k in range(group.N) if deg[k] < m):
                raise DecompositionError(f"block {word} leaks below layer {m}")
            if [prod[k] for k in alg.strat.layer(m)] != list(v):
                raise DecompositionError(f"block {word} does not realise its bracket")
            blocks.append(block)
        inverses[m] = _inverse_matrix([v for _, v in chosen])
    return DecompositionScheme(group, tuple(blocks), inverses)


def _block_elements(group, block: Block, amps, exact: bool):
    out = []
    for j, idx, sign in block.letters:
        e = [Fraction(0)] * group.N if exact else np.zeros(group.N)
        e[j] = sign * amps[idx]
        out.append(tuple(e) if exact else e)
    return out


def _signed_root(c, m: int, exact: bool):
    """Return (a, b) with a * b**(m-1) == c, a carrying the sign.

    In exact mode b is the rational m-th root when one exists and otherwise
    its float approximation; a is then solved for exactly, so the block
    reproduces c without error.
    """
    if c == 0:
        return (Fraction(0), Fraction(0)) if exact else (0.0, 0.0)
    if not exact:
        r = abs(float(c)) ** (1.0 / m)
        return (r if c > 0 else -r), r
    c = Fraction(c)
    num, num_ok = sympy.integer_nthroot(abs(c.numerator), m)
    den, den_ok = sympy.integer_nthroot(c.denominator, m)
    if num_ok and den_ok:
        b = Fraction(int(num), int(den))
    else:
        b = Fraction(math.exp(math.log(abs(c.numerator)) / m - math.log(c.denominator) / m))
    return c / b ** (m - 1), b


def _triangular_solve(scheme: DecompositionScheme, xi, exact: bool):
    group = scheme.group
    alg = group.algebra
    n = group.n
    letters: list[Letter] = []
    gens = []
    for j in range(n):
        lam = xi[j]
        letters.append((j, lam))
        e = [Fraction(0)] * group.N if exact else np.zeros(group.N)
        e[j] = lam
        gens.append(tuple(e) if exact else e)
    residual = group.multiply(group.inverse(group.product(*gens)), xi)
    for m in range(2, group.s + 1):
        layer = list(alg.strat.layer(m))
        rm = [residual[k] for k in layer]
        inv = scheme.layer_inverse[m]
        coeffs = [sum((inv[b][q] * rm[q] for q in range(len(layer))), Fraction(0) if exact else 0.0) for b in range(len(inv))]
        blocks = [b for b in scheme.blocks if b.layer == m]
        elements = []
        for block, c in zip(blocks, coeffs):
            a, b = _signed_root(c, m, exact)
            amps = [a] + [b] * (m - 1)
            for j, idx, sign in block.letters:
                letters.append((j, sign * amps[idx]))
            elements += _block_elements(group, block, amps, exact)
        if elements:
            residual = group.multiply(group.inverse(group.product(*elements)), residual)
    return letters


def _fold(group: CarnotGroup, directions: list[int], amps) -> np.ndarray:
    acc = np.zeros(group.N)
    for j, lam in zip(directions, amps):
        e = np.zeros(group.N)
        e[j] = lam
        acc = group.multiply(acc, e)
    return acc


def _newton_polish(group, directions, amps, target, tol, max_iter=25):
    amps = np.array(amps, float)
    F = _fold(group, directions, amps) - target
    for _ in range(max_iter):
        err = np.abs(F).max()
        if err <= tol:
            break
        J = np.empty((group.N, len(amps)))
        h = 1e-7
        for k in range(len(amps)):
            step = np.zeros(len(amps))
            step[k] = h
            J[:, k] = (_fold(group, directions, amps + step) - _fold(group, directions, amps - step)) / (2 * h)
        delta = np.linalg.lstsq(J, -F, rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            trial = amps + lam * delta
            Ft = _fold(group, directions, trial) - target
            if np.abs(Ft).max() < err:
                amps, F = trial, Ft
                break
            lam /= 2
        else:
            break
    return amps, float(np.abs(F).max())


def decompose(scheme: DecompositionScheme, xi, tol: float | None = None, exact: bool = True) -> HorizontalWord:
    """Write xi as a product of the template letters with solved amplitudes.

    Exact mode converts the input to rationals (floats convert without loss)
    and returns rational amplitudes whose product is exactly xi. Float mode
    runs the same solve in floating point, with a Newton polish if the
    residual exceeds ``tol``.
    """
    group = scheme.group
    group._check(xi)
    if exact:
        xi_e = tuple(Fraction(v) if is_exact(v) else Fraction(float(v)) for v in xi)
        letters = _triangular_solve(scheme, xi_e, exact=True)
        product = group.product(*HorizontalWord(tuple(letters), None, 0.0).elements(group, exact=True))
        residual = float(max(abs(a - b) for a, b in zip(product, xi_e)))
        if residual != 0:
            raise DecompositionError(f"exact decomposition left residual {residual:.3e}")
        return HorizontalWord(tuple(letters), product, 0.0)
    xf = np.array([float(v) for v in xi])
    if tol is None:
        tol = 1e-10 * (1.0 + float(np.linalg.norm(xf)))
    letters = _triangular_solve(scheme, xf, exact=False)
    directions = [j for j, _ in letters]
    amps = [float(lam) for _, lam in letters]
    product = _fold(group, directions, amps)
    residual = float(np.abs(product - xf).max())
    polished = False
    if residual > tol:
        amps, residual = _newton_polish(group, directions, amps, xf, tol)
        product = _fold(group, directions, amps)
        polished = True
        if residual > tol:
            raise DecompositionError(f"decomposition residual {residual:.3e} above tolerance {tol:.1e}")
    return HorizontalWord(tuple(zip(directions, amps)), product, residual, polished)


@dataclass(frozen=True)
class DecompositionConstants:
    k0: int
    C0: float
    sup_xi: float
    samples: int
    seed: int
    sampled_sup_xi: float = float("nan")


def sup_euclidean_on_unit_sphere(group: CarnotGroup) -> float:
    """sup of |xi| over ||xi|| = 1: the unit ball is the box |x_i| <= mu_i^(-d_i)."""
    return float(np.linalg.norm(group.mu ** (-group.degrees.astype(float))))


def estimate_constants(scheme: DecompositionScheme, sphere_samples: int = 2_000, seed: int = 0) -> DecompositionConstants:
    """k0 and a sampled C0 = max |lambda_k| over xi on the Euclidean unit sphere."""
    group = scheme.group
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((sphere_samples, group.N))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    axes = np.vstack([np.eye(group.N), -np.eye(group.N)])
    C0 = 1.0
    for xi in np.vstack([axes, pts]):
        word = decompose(scheme, xi, exact=False)
        C0 = max(C0, float(np.abs(word.amplitudes()).max()))
    sampled = float(np.linalg.norm(group.sample_sphere(rng, sphere_samples), axis=1).max())
    return DecompositionConstants(scheme.k0, C0, sup_euclidean_on_unit_sphere(group), sphere_samples, seed, sampled)


def calibrated_scheme(group: CarnotGroup, sphere_samples: int = 2_000, seed: int = 0) -> DecompositionScheme:
    """Scheme with its sampled C0 filled in."""
    scheme = build_scheme(group)
    return replace(scheme, C0=estimate_constants(scheme, sphere_samples, seed).C0)
