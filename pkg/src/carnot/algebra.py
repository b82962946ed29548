"""Stratified Lie algebras given by exact structure constants.

Indices are 0-based in code.  The JSON definition format and everything
printed for humans use 1-based indices, matching the usual X_1, ..., X_N.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

import sympy


class AlgebraStructureError(ValueError):
    """Malformed definition (bad index, bad layer list), as opposed to a failed invariant."""


class UnknownAlgebra(KeyError):
    pass


@dataclass(frozen=True)
class Stratification:
    layer_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if not dims or any(d < 1 for d in dims):
            raise AlgebraStructureError(f"layer dimensions must be positive, got {self.layer_dims}")
        object.__setattr__(self, "layer_dims", dims)

    @property
    def N(self) -> int:
        return sum(self.layer_dims)

    @property
    def n(self) -> int:
        return self.layer_dims[0]

    @property
    def s(self) -> int:
        return len(self.layer_dims)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(m + 1 for m, dim in enumerate(self.layer_dims) for _ in range(dim))

    def layer(self, m: int) -> range:
        """Coordinate indices of layer ``m`` (1-based layer number)."""
        start = sum(self.layer_dims[: m - 1])
        return range(start, start + self.layer_dims[m - 1])


@dataclass
class Check:
    name: str
    passed: bool
    message: str = ""
    witness: tuple | None = None

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}"
        if self.message:
            text += f": {self.message}"
        return text


@dataclass
class Diagnostics:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __bool__(self):
        return self.passed

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __str__(self):
        return "\n".join(str(c) for c in self.checks)


class StructureConstants:
    """Sparse table ``c[i][j][k]`` with ``[X_i, X_j] = sum_k c[i][j][k] X_k``."""

    def __init__(self, N: int, table: Mapping[tuple[int, int], Mapping[int, Fraction]] | None = None):
        self.N = N
        self._table: dict[tuple[int, int], dict[int, Fraction]] = {}
        for (i, j), row in (table or {}).items():
            for k, c in row.items():
                self._set(i, j, k, c)

    def _set(self, i: int, j: int, k: int, c) -> None:
        for idx in (i, j, k):
            if not 0 <= idx < self.N:
                raise AlgebraStructureError(
                    f"structure constant index {idx + 1} outside 1..{self.N} in c[{i + 1}][{j + 1}][{k + 1}]"
                )
        c = Fraction(c)
        row = self._table.setdefault((i, j), {})
        if c == 0:
            row.pop(k, None)
        else:
            row[k] = c
        if not row:
            del self._table[(i, j)]

    @classmethod
    def from_entries(cls, N: int, entries: Iterable[tuple[int, int, int, Fraction]]) -> "StructureConstants":
        sc = cls(N)
        for i, j, k, c in entries:
            sc._set(i, j, k, c)
        return sc

    @classmethod
    def antisymmetric(cls, N: int, brackets: Iterable[tuple[int, int, int, Fraction]]) -> "StructureConstants":
        """Build from ``[X_i, X_j] = c X_k`` entries, adding the ``(j, i)`` counterparts."""
        sc = cls(N)
        for i, j, k, c in brackets:
            c = Fraction(c)
            sc._set(i, j, k, sc.get(i, j, k) + c)
            sc._set(j, i, k, sc.get(j, i, k) - c)
        return sc

    def get(self, i: int, j: int, k: int) -> Fraction:
        return self._table.get((i, j), {}).get(k, Fraction(0))

    def items(self):
        for (i, j), row in sorted(self._table.items()):
            for k, c in sorted(row.items()):
                yield i, j, k, c

    def row(self, i: int, j: int) -> dict[int, Fraction]:
        return self._table.get((i, j), {})

    def bracket(self, u, v, zero=Fraction(0)):
        """Bracket of two coefficient vectors; entries may be numbers or polynomials."""
        out = [zero] * self.N
        touched = [False] * self.N
        for (i, j), row in self._table.items():
            ui, vj = u[i], v[j]
            if not ui or not vj:
                continue
            prod = ui * vj
            for k, c in row.items():
                out[k] = out[k] + prod * c if touched[k] else prod * c
                touched[k] = True
        return out

    def __len__(self):
        return sum(len(r) for r in self._table.values())


@dataclass(frozen=True, eq=False)
class StratifiedAlgebra:
    strat: Stratification
    constants: StructureConstants
    name: str = "custom"

    def __post_init__(self):
        if self.constants.N != self.strat.N:
            raise AlgebraStructureError(
                f"structure constants are for dimension {self.constants.N}, layers sum to {self.strat.N}"
            )

    @property
    def N(self) -> int:
        return self.strat.N

    @property
    def n(self) -> int:
        return self.strat.n

    @property
    def s(self) -> int:
        return self.strat.s

    @property
    def degrees(self) -> tuple[int, ...]:
        return self.strat.degrees

    def basis(self, k: int) -> list[Fraction]:
        v = [Fraction(0)] * self.N
        v[k] = Fraction(1)
        return v

    def bracket(self, u, v):
        return self.constants.bracket(u, v)

    def nested_bracket(self, word: Iterable[int]) -> list[Fraction]:
        """Right-nested bracket ``[X_w1, [X_w2, [..., X_wm]]]`` of basis vectors."""
        word = list(word)
        acc = self.basis(word[-1])
        for j in reversed(word[:-1]):
            acc = self.bracket(self.basis(j), acc)
        return acc

    # -- serialisation --------------------------------------------------

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "layer_dims": list(self.strat.layer_dims),
            "constants": [
                [i + 1, j + 1, k + 1, c.numerator, c.denominator] for i, j, k, c in self.constants.items()
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "StratifiedAlgebra":
        try:
            layer_dims = data["layer_dims"]
            raw = data.get("constants", [])
        except (KeyError, TypeError) as exc:
            raise AlgebraStructureError(f"algebra definition is missing field {exc}") from exc
        strat = Stratification(tuple(layer_dims))
        entries = []
        for entry in raw:
            if len(entry) != 5:
                raise AlgebraStructureError(f"constant entry {entry} is not [i, j, k, num, den]")
            i, j, k, num, den = entry
            if den == 0:
                raise AlgebraStructureError(f"zero denominator in {entry}")
            entries.append((int(i) - 1, int(j) - 1, int(k) - 1, Fraction(int(num), int(den))))
        return cls(strat, StructureConstants.from_entries(strat.N, entries), data.get("name", "custom"))

    @classmethod
    def load(cls, path: str | Path) -> "StratifiedAlgebra":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise AlgebraStructureError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_json(data)


# -- validation -------------------------------------------------------------


def _rank(vectors: list[list[Fraction]]) -> int:
    if not vectors:
        return 0
    return sympy.Matrix([[sympy.Rational(c.numerator, c.denominator) for c in v] for v in vectors]).rank()


def validate(algebra: StratifiedAlgebra) -> Diagnostics:
    """Check antisymmetry, Jacobi, grading and generation exactly."""
    N, sc, deg = algebra.N, algebra.constants, algebra.degrees
    diag = Diagnostics()

    bad = None
    for i, j in itertools.product(range(N), repeat=2):
        for k in set(sc.row(i, j)) | set(sc.row(j, i)):
            if sc.get(i, j, k) != -sc.get(j, i, k):
                bad = (i + 1, j + 1, k + 1)
                break
        if bad:
            break
    diag.checks.append(
        Check("antisymmetry", bad is None, "" if bad is None else f"c[{bad[0]}][{bad[1]}][{bad[2]}] != -c[{bad[1]}][{bad[0]}][{bad[2]}]", bad)
    )

    bad = None
    basis = [algebra.basis(k) for k in range(N)]
    for i, j, l in itertools.combinations_with_replacement(range(N), 3):
        total = [Fraction(0)] * N
        for a, b, c in ((i, j, l), (j, l, i), (l, i, j)):
            term = sc.bracket(sc.bracket(basis[a], basis[b]), basis[c])
            total = [x + y for x, y in zip(total, term)]
        if any(total):
            bad = (i + 1, j + 1, l + 1)
            break
    diag.checks.append(
        Check("jacobi", bad is None, "" if bad is None else f"Jacobi fails for (X{bad[0]}, X{bad[1]}, X{bad[2]})", bad)
    )

    bad = None
    for i, j, k, c in sc.items():
        if deg[k] != deg[i] + deg[j]:
            bad = (i + 1, j + 1, k + 1)
            break
    diag.checks.append(
        Check(
            "grading",
            bad is None,
            "" if bad is None else f"c[{bad[0]}][{bad[1]}][{bad[2]}] != 0 but degrees {deg[bad[0]-1]}+{deg[bad[1]-1]} != {deg[bad[2]-1]}",
            bad,
        )
    )

    bad = None
    strat = algebra.strat
    for m in range(2, strat.s + 1):
        layer = list(strat.layer(m))
        vecs = []
        for i in strat.layer(1):
            for j in strat.layer(m - 1):
                v = sc.bracket(basis[i], basis[j])
                vecs.append([v[k] for k in layer])
        if _rank(vecs) < len(layer):
            bad = (m,)
            break
    diag.checks.append(
        Check("generation", bad is None, "" if bad is None else f"[V1, V{bad[0]-1}] does not span V{bad[0]}", bad)
    )
    return diag


# -- catalog ----------------------------------------------------------------


def heisenberg(m: int = 1) -> StratifiedAlgebra:
    if m < 1:
        raise UnknownAlgebra(f"heisenberg({m}): m must be >= 1")
    N = 2 * m + 1
    sc = StructureConstants.antisymmetric(N, [(i, m + i, N - 1, 1) for i in range(m)])
    return StratifiedAlgebra(Stratification((2 * m, 1)), sc, f"heisenberg({m})")


def engel() -> StratifiedAlgebra:
    sc = StructureConstants.antisymmetric(4, [(0, 1, 2, 1), (0, 2, 3, 1)])
    return StratifiedAlgebra(Stratification((2, 1, 1)), sc, "engel")


def free_nilpotent_2_3() -> StratifiedAlgebra:
    # Hall basis X1, X2, X3 = [X1,X2], X4 = [X1,X3], X5 = [X2,X3]
    sc = StructureConstants.antisymmetric(5, [(0, 1, 2, 1), (0, 2, 3, 1), (1, 2, 4, 1)])
    return StratifiedAlgebra(Stratification((2, 1, 2)), sc, "free_nilpotent(2,3)")


def abelian(n: int = 2) -> StratifiedAlgebra:
    return StratifiedAlgebra(Stratification((n,)), StructureConstants(n), f"abelian({n})")


CATALOG_NAMES = ("heisenberg(m)", "engel", "free_nilpotent(2,3)", "abelian(n)")

_NAME = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([\d,\s]*)\)|(\d+))?\s*$")


def catalog(name: str) -> StratifiedAlgebra:
    """Look up a named algebra, e.g. ``heisenberg(2)``, ``engel``, ``free_nilpotent(2,3)``."""
    match = _NAME.match(name.lower())
    if not match:
        raise UnknownAlgebra(name)
    base, args, suffix = match.groups()
    params = [int(a) for a in (args or suffix or "").replace(" ", "").split(",") if a]
    if base == "heisenberg" and len(params) <= 1:
        return heisenberg(*params)
    if base == "engel" and not params:
        return engel()
    if base in ("free_nilpotent", "free") and params in ([2, 3], []):
        return free_nilpotent_2_3()
    if base == "abelian" and len(params) <= 1:
        return abelian(*params)
    raise UnknownAlgebra(f"{name!r} is not one of {', '.join(CATALOG_NAMES)}")


def resolve(name_or_path: str) -> StratifiedAlgebra:
    """Catalog name or path to a JSON definition file."""
    path = Path(name_or_path)
    if path.suffix == ".json" or path.is_file():
        return StratifiedAlgebra.load(path)
    return catalog(name_or_path)
