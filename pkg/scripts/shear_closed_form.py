"""Symbolic difference quotient of the shear map on the first Heisenberg group.

Prints R(x, xi; t), the derivative z(x, xi) and R^-1 z, all computed with
sympy from the group law. The last one has centre and second coordinates
proportional to t, so the homogeneous distance between R and z is a
multiple of sqrt(t) uniformly in x.
"""

import sympy as sp


def mul(p, q):
    return (p[0] + q[0], p[1] + q[1], p[2] + q[2] + (p[0] * q[1] - p[1] * q[0]) / 2)


def inv(p):
    return tuple(-c for c in p)


def dil(r, p):
    return (r * p[0], r * p[1], r**2 * p[2])


def shear(p):
    return (p[0], p[1] + p[0] ** 2, p[2] + p[0] ** 3 / 6)


x = sp.symbols("x1:4")
a, b, c, t = sp.symbols("a b c t", positive=True)
xi = (a, b, c)

R = tuple(sp.expand(v) for v in dil(1 / t, mul(inv(shear(x)), shear(mul(x, dil(t, xi))))))
z = tuple(sp.limit(v, t, 0) for v in R)
gap = tuple(sp.simplify(v) for v in mul(inv(R), z))

print("R   =", R)
print("z   =", z)
print("R^-1 z =", gap)
print("d(R, z) over the grid [t_A, t_A 1e-4] shrinks by sqrt(1e-4) =", sp.sqrt(sp.Rational(1, 10**4)))
