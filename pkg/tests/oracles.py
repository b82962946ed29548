"""Independent references: faithful matrix representations and exact exp/log.

The product of two elements in exponential coordinates is recomputed as
log(exp(X) exp(Y)) with nilpotent matrices, which does not touch the BCH code.
"""

from fractions import Fraction
from itertools import product

import sympy


def _E(n, i, j):
    m = sympy.zeros(n, n)
    m[i, j] = 1
    return m


def heisenberg_rep(m):
    n = m + 2
    xs = [_E(n, 0, i + 1) for i in range(m)]
    ys = [_E(n, i + 1, m + 1) for i in range(m)]
    return xs + ys + [_E(n, 0, m + 1)]


def engel_rep():
    e1 = _E(4, 0, 1) + _E(4, 1, 2) + _E(4, 2, 3)
    return [e1, _E(4, 2, 3), _E(4, 1, 3), _E(4, 0, 3)]


def free_2_3_rep():
    """Left multiplication on the tensor algebra of R^2 truncated above degree 3."""
    words = [()] + [w for k in (1, 2, 3) for w in product((0, 1), repeat=k)]
    index = {w: i for i, w in enumerate(words)}
    n = len(words)
    L = []
    for a in (0, 1):
        m = sympy.zeros(n, n)
        for w in words:
            if len(w) < 3:
                m[index[(a,) + w], index[w]] = 1
        L.append(m)

    def br(p, q):
        return p * q - q * p

    x3 = br(L[0], L[1])
    return [L[0], L[1], x3, br(L[0], x3), br(L[1], x3)]


REPS = {
    "heisenberg(1)": lambda: heisenberg_rep(1),
    "heisenberg(2)": lambda: heisenberg_rep(2),
    "engel": engel_rep,
    "free_nilpotent(2,3)": free_2_3_rep,
}


def _exp(M):
    n = M.shape[0]
    out, term = sympy.eye(n), sympy.eye(n)
    for k in range(1, n + 1):
        term = term * M / k
        out += term
    return out


def _log(G):
    n = G.shape[0]
    U = G - sympy.eye(n)
    out, power = sympy.zeros(n, n), sympy.eye(n)
    for k in range(1, n + 1):
        power = power * U
        out += sympy.Rational((-1) ** (k + 1), k) * power
    return out


def _coords(basis, M):
    A = sympy.Matrix.hstack(*[b.reshape(b.shape[0] ** 2, 1) for b in basis])
    sol, params = A.gauss_jordan_solve(M.reshape(M.shape[0] ** 2, 1))
    assert not params.free_symbols
    return tuple(Fraction(int(sympy.fraction(v)[0]), int(sympy.fraction(v)[1])) for v in sol)


def embed(basis, x):
    return sum((sympy.Rational(c.numerator, c.denominator) * b for c, b in zip(map(Fraction, x), basis)),
               sympy.zeros(*basis[0].shape))


def matrix_product(basis, x, y):
    return _coords(basis, _log(_exp(embed(basis, x)) * _exp(embed(basis, y))))


def matrix_bracket(basis, i, j):
    return _coords(basis, basis[i] * basis[j] - basis[j] * basis[i])
