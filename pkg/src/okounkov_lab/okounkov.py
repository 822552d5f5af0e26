"""Flag valuations, graded points and Okounkov bodies in exact arithmetic.

Flags are linear: a flag is the image of the coordinate flag
``{W1 = 0} > {W1 = W2 = 0} > ...`` under an invertible matrix acting on
homogeneous coordinates, ``Z = A W``. The valuation of a section is then the
lexicographically smallest exponent of its expansion in the affine
coordinates ``w_i = W_i / W_0``.
"""
from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Sequence

from .convexlab import LatticePolytope, as_fraction

__all__ = [
    "Polynomial",
    "Variety",
    "FlagSpec",
    "GradedPoint",
    "SectionBasis",
    "ValuationError",
    "lex_valuation",
    "enumerate_graded_points",
    "section_basis",
    "okounkov_body",
    "body_volume_check",
    "graded_points_csv",
]

Exponent = tuple[int, ...]
Polynomial = dict  # exponent tuple -> Fraction


class ValuationError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Varieties and flags
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Variety:
    """A polarized variety: ``O(d)`` on P^n (n <= 2) or a smooth toric surface.

    For toric surfaces the moment polygon must have the origin as a vertex
    with its two edges along the coordinate axes, so that the chart at that
    vertex has coordinates ``(z1, z2)`` and sections of ``kL`` are the
    monomials ``z^m`` with ``m`` in ``k * polygon``.
    """

    kind: str  # "proj" or "toric"
    polytope: LatticePolytope
    n: int
    degree: int = 1
    label: str = ""

    @classmethod
    def proj(cls, n: int, d: int = 1) -> "Variety":
        if n not in (1, 2) or d < 1:
            raise ValueError("supported: P^1 and P^2 with O(d), d >= 1")
        return cls("proj", LatticePolytope.simplex(n, d), n, d, f"p{n}:{d}")

    @classmethod
    def toric_surface(cls, polytope: LatticePolytope, label: str = "toric") -> "Variety":
        if polytope.dimension != 2 or not polytope.is_lattice:
            raise ValueError("toric surface needs an integral polygon")
        zero = (Fraction(0), Fraction(0))
        if zero not in polytope.vertices:
            raise ValueError("polygon must have the origin as a vertex")
        if not all(c >= 0 for v in polytope.vertices for c in v):
            raise ValueError("polygon must lie in the nonnegative quadrant")
        i = polytope.vertices.index(zero)
        nxt, prv = polytope.vertices[(i + 1) % len(polytope.vertices)], polytope.vertices[i - 1]
        if not (nxt[1] == 0 and prv[0] == 0):
            raise ValueError("edges at the origin must run along the coordinate axes")
        return cls("toric", polytope, 2, 1, label)

    @classmethod
    def p1xp1(cls, a: int, b: int) -> "Variety":
        return cls.toric_surface(LatticePolytope.rectangle(a, b), f"p1xp1:{a},{b}")

    @classmethod
    def hirzebruch(cls, a: int, b: int, c: int) -> "Variety":
        return cls.toric_surface(LatticePolytope.hirzebruch(a, b, c), f"hirzebruch:{a},{b},{c}")

    @classmethod
    def parse(cls, spec: str) -> "Variety":
        """Parse ``p1:d``, ``p2:d``, ``p1xp1:a,b`` or ``hirzebruch:a,b,c``."""
        name, _, args = spec.partition(":")
        nums = [int(s) for s in args.split(",")] if args else []
        if name in ("p1", "p2"):
            return cls.proj(int(name[1]), nums[0] if nums else 1)
        if name == "p1xp1" and len(nums) == 2:
            return cls.p1xp1(*nums)
        if name == "hirzebruch" and len(nums) == 3:
            return cls.hirzebruch(*nums)
        raise ValueError(f"unknown variety spec {spec!r}")

    @property
    def intersection_number(self) -> int:
        """Top self-intersection ``(L^n)``; ``n! vol`` of the moment polytope."""
        return int(math.factorial(self.n) * self.polytope.volume)

    def h0(self, k: int) -> int:
        if self.kind == "proj":
            return math.comb(k * self.degree + self.n, self.n)
        return len(self.polytope.scaled(k).lattice_points())

    def chart_monomials(self, k: int) -> list[Exponent]:
        """Monomial basis of ``H^0(X, kL)`` in the chart, lexicographically sorted."""
        if self.kind == "proj":
            D = k * self.degree
            return sorted(e for e in product(range(D + 1), repeat=self.n) if sum(e) <= D)
        return sorted(self.polytope.scaled(k).lattice_points())

    def homogeneous_degree(self, k: int) -> int:
        if self.kind == "proj":
            return k * self.degree
        return max(sum(e) for e in self.chart_monomials(k))


@dataclass(frozen=True)
class FlagSpec:
    """Linear flag given by ``Z = A W`` on homogeneous coordinates.

    ``matrix`` is ``(n+1) x (n+1)`` exact rational and invertible. The flag
    point ``A e_0`` must lie in the chart ``Z_chart != 0``. For toric
    surfaces only affine changes (first row ``(1, 0, 0)``) are allowed, since
    the chart is not a projective-linear coordinate system there.
    """

    matrix: tuple[tuple[Fraction, ...], ...]
    chart: int = 0
    label: str = "custom"

    def __post_init__(self):
        mat = tuple(tuple(as_fraction(c) for c in row) for row in self.matrix)
        size = len(mat)
        if any(len(r) != size for r in mat):
            raise ValueError("flag matrix must be square")
        if _det(mat) == 0:
            raise ValueError("flag matrix must be invertible")
        if mat[self.chart][0] == 0:
            raise ValueError("flag point does not lie in the marked chart")
        object.__setattr__(self, "matrix", mat)

    @property
    def n(self) -> int:
        return len(self.matrix) - 1

    @classmethod
    def coordinate(cls, n: int) -> "FlagSpec":
        return cls(tuple(tuple(Fraction(int(i == j)) for j in range(n + 1)) for i in range(n + 1)), label="coord")

    @classmethod
    def at_point(cls, point: Sequence) -> "FlagSpec":
        """Coordinate-parallel flag translated to the affine point ``point`` (chart 0)."""
        pt = [as_fraction(c) for c in point]
        n = len(pt)
        rows = [[Fraction(int(j == 0)) for j in range(n + 1)]]
        for i in range(n):
            rows.append([pt[i]] + [Fraction(int(i == j)) for j in range(n)])
        return cls(tuple(tuple(r) for r in rows), label="point:" + ",".join(str(c) for c in pt))

    @classmethod
    def random(cls, n: int, seed: int, *, affine: bool = False, bound: int = 5) -> "FlagSpec":
        """Seeded random invertible integer matrix (affine when requested)."""
        rng = random.Random(seed)
        while True:
            rows = [[Fraction(rng.randint(-bound, bound)) for _ in range(n + 1)] for _ in range(n + 1)]
            if affine:
                rows[0] = [Fraction(1)] + [Fraction(0)] * n
            if rows[0][0] != 0 and _det(rows) != 0:
                return cls(tuple(tuple(r) for r in rows), label=f"random:{seed}")

    @classmethod
    def parse(cls, spec, n: int, *, seed: int = 0, affine: bool = False) -> "FlagSpec":
        """``coord``, ``point:a[,b]``, ``random[:seed]`` or an explicit matrix (list of rows)."""
        if isinstance(spec, (list, tuple)):
            return cls(tuple(tuple(as_fraction(c) for c in row) for row in spec))
        name, _, args = str(spec).partition(":")
        if name == "coord":
            return cls.coordinate(n)
        if name == "point":
            return cls.at_point([Fraction(s) for s in args.split(",")])
        if name == "random":
            return cls.random(n, int(args) if args else seed, affine=affine)
        raise ValueError(f"unknown flag spec {spec!r}")

    def is_affine(self) -> bool:
        return self.matrix[0] == tuple(Fraction(int(j == 0)) for j in range(self.n + 1))

    def is_coordinate(self) -> bool:
        return self == FlagSpec.coordinate(self.n) or self.matrix == FlagSpec.coordinate(self.n).matrix

    def to_json(self) -> dict:
        return {"matrix": [[str(c) for c in row] for row in self.matrix], "chart": self.chart, "label": self.label}


def _det(mat) -> Fraction:
    m = [list(map(Fraction, r)) for r in mat]
    size = len(m)
    det = Fraction(1)
    for c in range(size):
        piv = next((r for r in range(c, size) if m[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            det = -det
        det *= m[c][c]
        for r in range(c + 1, size):
            f = m[r][c] / m[c][c]
            if f:
                m[r] = [a - f * b for a, b in zip(m[r], m[c])]
    return det


@dataclass(frozen=True, order=True)
class GradedPoint:
    k: int
    alpha: Exponent

    def __post_init__(self):
        if self.k < 1 or any(a < 0 for a in self.alpha):
            raise ValueError("graded point needs k >= 1 and nonnegative exponent")

    def normalized(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(a, self.k) for a in self.alpha)


# ---------------------------------------------------------------------------
# Polynomial arithmetic over Q
# ---------------------------------------------------------------------------


def _poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    out: dict = {}
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out.get(e, Fraction(0)) + c1 * c2
    return {e: c for e, c in out.items() if c != 0}


def _poly_pow(p: Polynomial, k: int, nvars: int) -> Polynomial:
    result: Polynomial = {(0,) * nvars: Fraction(1)}
    base = p
    while k:
        if k & 1:
            result = _poly_mul(result, base)
        k >>= 1
        if k:
            base = _poly_mul(base, base)
    return result


class _Substitution:
    """Expands homogeneous monomials ``Z^e`` (with ``Z = A W``, ``W_0 = 1``) in ``w``."""

    def __init__(self, flag: FlagSpec):
        self.flag = flag
        n = flag.n
        self.linear = []
        for i in range(n + 1):
            form: Polynomial = {}
            for j in range(n + 1):
                c = flag.matrix[i][j]
                if c:
                    e = tuple(int(j == t + 1) for t in range(n))
                    form[e] = form.get(e, Fraction(0)) + c
            self.linear.append(form)
        self._pow = lru_cache(maxsize=None)(self._power)

    def _power(self, i: int, k: int) -> tuple:
        return tuple(_poly_pow(self.linear[i], k, self.flag.n).items())

    def monomial(self, hexp: Exponent) -> Polynomial:
        out: Polynomial = {(0,) * self.flag.n: Fraction(1)}
        for i, k in enumerate(hexp):
            if k:
                out = _poly_mul(out, dict(self._pow(i, k)))
        return out

    def polynomial(self, poly: Polynomial, degree: int, chart: int) -> Polynomial:
        out: dict = {}
        for e, c in poly.items():
            for t, v in self.monomial(_homogenize(e, degree, chart)).items():
                out[t] = out.get(t, Fraction(0)) + c * v
        return {e: c for e, c in out.items() if c != 0}


def _homogenize(e: Exponent, degree: int, chart: int) -> Exponent:
    rest = degree - sum(e)
    if rest < 0:
        raise ValueError("homogenization degree below polynomial degree")
    h = list(e)
    h.insert(chart, rest)
    return tuple(h)


# ---------------------------------------------------------------------------
# Valuations and graded points
# ---------------------------------------------------------------------------


def lex_valuation(poly: Polynomial, flag: FlagSpec, *, degree: int | None = None) -> Exponent:
    """Flag valuation ``(ord_{Y1}(s), ord_{Y2}((s / w1^a)|_{Y1}), ...)`` of a chart polynomial.

    ``poly`` maps chart exponents to coefficients. The result does not depend
    on ``degree`` (the homogenization degree, default the total degree)
    because the flag point lies in the chart.
    """
    poly = {tuple(int(a) for a in e): as_fraction(c) for e, c in poly.items() if c != 0}
    if not poly:
        raise ValuationError("the zero section has no valuation")
    if any(len(e) != flag.n for e in poly):
        raise ValueError("polynomial has the wrong number of variables for this flag")
    deg = max(sum(e) for e in poly) if degree is None else degree
    expanded = _Substitution(flag).polynomial(poly, deg, flag.chart)
    return min(expanded)


def _check_flag(variety: Variety, flag: FlagSpec):
    if flag.n != variety.n:
        raise ValueError("flag dimension differs from variety dimension")
    if variety.kind == "toric" and not flag.is_affine():
        raise ValueError("toric surfaces support affine flag changes only")
    if variety.kind == "toric" and flag.chart != 0:
        raise ValueError("toric surfaces use chart 0")


def _echelon(variety: Variety, k: int, flag: FlagSpec):
    """Row-reduce the transformed monomial basis with pivots chosen by valuation order.

    Returns ``(pivots, transform)`` where ``pivots`` lists the valuation image
    in increasing lex order and ``transform[i]`` holds the chart-monomial
    coefficients of a section equal to ``w^{pivots[i]}`` plus lex-greater terms.
    """
    _check_flag(variety, flag)
    monos = variety.chart_monomials(k)
    D = variety.homogeneous_degree(k)
    sub = _Substitution(flag)
    rows = [sub.polynomial({e: Fraction(1)}, D, flag.chart) for e in monos]
    columns = sorted(set().union(*rows))
    size = len(monos)
    transform = [{i: Fraction(1)} for i in range(size)]
    remaining = list(range(size))
    pivots: list[Exponent] = []
    pivot_rows: list[int] = []
    for col in columns:
        piv = next((r for r in remaining if rows[r].get(col, 0) != 0), None)
        if piv is None:
            continue
        remaining.remove(piv)
        lead = rows[piv][col]
        rows[piv] = {e: c / lead for e, c in rows[piv].items()}
        transform[piv] = {i: c / lead for i, c in transform[piv].items()}
        for r in remaining:
            f = rows[r].get(col, 0)
            if f:
                for e, c in rows[piv].items():
                    v = rows[r].get(e, Fraction(0)) - f * c
                    if v:
                        rows[r][e] = v
                    else:
                        rows[r].pop(e, None)
                for i, c in transform[piv].items():
                    v = transform[r].get(i, Fraction(0)) - f * c
                    if v:
                        transform[r][i] = v
                    else:
                        transform[r].pop(i, None)
        pivots.append(col)
        pivot_rows.append(piv)
        if not remaining:
            break
    if remaining or len(pivots) != variety.h0(k):
        raise ValuationError(
            f"rank deficiency at k={k}: {len(pivots)} valuation values for h0={variety.h0(k)} "
            "(one-dimensional leaf property violated)"
        )
    return pivots, [transform[r] for r in pivot_rows], monos


def enumerate_graded_points(k: int, variety: Variety, flag: FlagSpec) -> list[Exponent]:
    """Valuation image ``Delta^k`` of ``H^0(X, kL)``, lexicographically sorted."""
    if k < 1:
        raise ValueError("degree k must be >= 1")
    if variety.kind == "toric" and flag.is_coordinate():
        return variety.chart_monomials(k)
    pivots, _, _ = _echelon(variety, k, flag)
    return pivots


@dataclass(frozen=True)
class SectionBasis:
    """Leaf-adapted basis of ``H^0(X, kL)``, ordered by decreasing valuation.

    ``monomials`` is the chart monomial basis; row ``i`` of ``transform``
    (a sparse map monomial-index -> coefficient) is a section whose flag
    expansion is ``w^{valuations[i]}`` plus lex-greater terms.
    """

    k: int
    monomials: tuple[Exponent, ...]
    valuations: tuple[Exponent, ...]
    transform: tuple[dict, ...] = field(repr=False)

    def __post_init__(self):
        if len(self.valuations) != len(self.monomials):
            raise ValueError("basis size differs from the number of valuation values")
        if any(not a > b for a, b in zip(self.valuations, self.valuations[1:])):
            raise ValueError("valuations must be strictly decreasing in lex order")

    @property
    def size(self) -> int:
        return len(self.monomials)

    def is_monomial(self) -> bool:
        """True when every adapted section is a single chart monomial with coefficient 1."""
        return all(len(t) == 1 and next(iter(t.values())) == 1 for t in self.transform)

    def ordering(self) -> tuple[int, ...]:
        """Permutation of monomial indices for a monomial basis (``is_monomial`` only)."""
        return tuple(next(iter(t)) for t in self.transform)


def section_basis(k: int, variety: Variety, flag: FlagSpec) -> SectionBasis:
    if k < 1:
        raise ValueError("degree k must be >= 1")
    if flag.is_coordinate():
        monos = variety.chart_monomials(k)
        order = sorted(range(len(monos)), key=lambda i: monos[i], reverse=True)
        return SectionBasis(k, tuple(monos), tuple(monos[i] for i in order), tuple({i: Fraction(1)} for i in order))
    pivots, transform, monos = _echelon(variety, k, flag)
    return SectionBasis(k, tuple(monos), tuple(reversed(pivots)), tuple(reversed(transform)))


def okounkov_body(variety: Variety, flag: FlagSpec, k_max: int) -> LatticePolytope:
    """Exact convex hull of ``k^{-1} Delta^k`` over ``1 <= k <= k_max``."""
    if k_max < 1:
        raise ValueError("K_max must be >= 1")
    pts = set()
    for k in range(1, k_max + 1):
        pts.update(tuple(Fraction(a, k) for a in e) for e in enumerate_graded_points(k, variety, flag))
    return LatticePolytope.from_points(pts)


def body_volume_check(variety: Variety, body: LatticePolytope) -> tuple[Fraction, Fraction]:
    """``(vol(body), (L^n) / n!)`` as exact rationals."""
    return body.volume, Fraction(variety.intersection_number, math.factorial(variety.n))


def graded_points_csv(points_by_k: dict[int, Sequence[Exponent]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    n = len(next(iter(next(iter(points_by_k.values())))))
    writer.writerow(["k"] + [f"alpha{i + 1}" for i in range(n)])
    for k in sorted(points_by_k):
        for e in points_by_k[k]:
            writer.writerow([k, *e])
    return buf.getvalue()
