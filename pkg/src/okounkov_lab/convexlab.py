"""Convex geometry on small polytopes.

Exact rational polytopes in dimension 1 and 2, convex functions sampled on
lattice grids inside them, discrete Legendre-Fenchel transforms in both
directions, lower convex hulls and linear functionals on grid functions.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

__all__ = [
    "ConvexityError",
    "DegenerateError",
    "GridMismatch",
    "GrowthError",
    "LatticePolytope",
    "Grid",
    "ConvexGridFunction",
    "SymbolFunction",
    "as_fraction",
    "legendre_transform",
    "legendre_back",
    "lower_convex_hull",
    "LowerHull",
    "affine_functional",
    "convexity_residual",
    "support_symbol",
    "fubini_study_symbol",
    "guillemin_potential",
    "guillemin_gradient",
]


class ConvexityError(ValueError):
    """Input that must be convex is not (beyond tolerance)."""


class DegenerateError(ValueError):
    """Point set or polytope does not span the ambient dimension."""


class GridMismatch(ValueError):
    pass


class GrowthError(ValueError):
    """A Legendre supremum diverges at some target node."""

    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


def as_fraction(v) -> Fraction:
    """Exact rational from int, str ("p/q" or decimal), Fraction or float.

    Floats convert to their exact binary value.
    """
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v.strip())
    return Fraction(float(v))


def _fraction_str(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull_2d(points: Iterable[tuple[Fraction, Fraction]]) -> list[tuple[Fraction, Fraction]]:
    """Counterclockwise convex hull without collinear vertices (monotone chain)."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


# ---------------------------------------------------------------------------
# Polytopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticePolytope:
    """Exact convex polytope of dimension 1 or 2.

    Vertices are rational points; in 2-D they are stored counterclockwise
    starting from the lexicographically smallest vertex, so that two equal
    polytopes compare equal with ``==``.
    """

    vertices: tuple[tuple[Fraction, ...], ...]
    degenerate: bool = False

    def __post_init__(self):
        verts = [tuple(as_fraction(c) for c in v) for v in self.vertices]
        if not verts:
            raise DegenerateError("polytope needs at least one vertex")
        n = len(verts[0])
        if n not in (1, 2) or any(len(v) != n for v in verts):
            raise ValueError("vertices must all have dimension 1 or all dimension 2")
        if len(set(verts)) != len(verts):
            raise ValueError("polytope vertices must be pairwise distinct")
        if n == 1:
            verts = sorted(verts)
            if len(verts) > 2:
                raise ValueError("a 1-D polytope has at most two vertices")
            full = len(verts) == 2
        else:
            hull = _hull_2d(verts)
            if len(hull) != len(verts):
                raise ValueError("vertices are not in convex position")
            start = hull.index(min(hull))
            verts = hull[start:] + hull[:start]
            full = len(verts) >= 3
        if not full and not self.degenerate:
            raise DegenerateError(
                f"polytope has no interior in dimension {n}; pass degenerate=True to allow"
            )
        object.__setattr__(self, "vertices", tuple(verts))

    # constructors -----------------------------------------------------------

    @classmethod
    def from_points(cls, points: Iterable[Sequence], *, degenerate: bool = False) -> "LatticePolytope":
        pts = [tuple(as_fraction(c) for c in p) for p in points]
        if not pts:
            raise DegenerateError("empty point set")
        if len(pts[0]) == 1:
            xs = sorted(set(p[0] for p in pts))
            verts = [(xs[0],), (xs[-1],)] if len(xs) > 1 else [(xs[0],)]
            return cls(tuple(verts), degenerate=degenerate)
        return cls(tuple(_hull_2d(pts)), degenerate=degenerate)

    @classmethod
    def interval(cls, a, b) -> "LatticePolytope":
        return cls(((as_fraction(a),), (as_fraction(b),)))

    @classmethod
    def simplex(cls, n: int, d=1) -> "LatticePolytope":
        d = as_fraction(d)
        if n == 1:
            return cls.interval(0, d)
        return cls(((Fraction(0), Fraction(0)), (d, Fraction(0)), (Fraction(0), d)))

    @classmethod
    def rectangle(cls, a, b) -> "LatticePolytope":
        a, b = as_fraction(a), as_fraction(b)
        z = Fraction(0)
        return cls(((z, z), (a, z), (a, b), (z, b)))

    @classmethod
    def hirzebruch(cls, a: int, b: int, c: int) -> "LatticePolytope":
        """Moment polygon {x >= 0, 0 <= y <= c, x + a*y <= b} of F_a."""
        if not b > a * c:
            raise ValueError("Hirzebruch polygon needs b > a*c")
        z = Fraction(0)
        return cls(((z, z), (Fraction(b), z), (Fraction(b - a * c), Fraction(c)), (z, Fraction(c))))

    # geometry ---------------------------------------------------------------

    @property
    def dimension(self) -> int:
        return len(self.vertices[0])

    @property
    def volume(self) -> Fraction:
        """Exact length (1-D) or area (2-D)."""
        v = self.vertices
        if self.dimension == 1:
            return v[-1][0] - v[0][0]
        if len(v) < 3:
            return Fraction(0)
        twice = sum(v[i][0] * v[(i + 1) % len(v)][1] - v[(i + 1) % len(v)][0] * v[i][1] for i in range(len(v)))
        return twice / 2

    @property
    def is_lattice(self) -> bool:
        return all(c.denominator == 1 for v in self.vertices for c in v)

    def facets(self) -> list[tuple[tuple[Fraction, ...], Fraction]]:
        """Inward facet normals ``v`` and offsets ``c`` with ``<v, x> - c >= 0`` on the polytope.

        Normals are primitive integer vectors when the polytope is a lattice polytope.
        """
        v = self.vertices
        if self.dimension == 1:
            return [((Fraction(1),), v[0][0]), ((Fraction(-1),), -v[-1][0])]
        out = []
        for i in range(len(v)):
            p, q = v[i], v[(i + 1) % len(v)]
            nx, ny = -(q[1] - p[1]), q[0] - p[0]
            den = math.lcm(nx.denominator, ny.denominator)
            ix, iy = int(nx * den), int(ny * den)
            g = math.gcd(ix, iy)
            normal = (Fraction(ix // g), Fraction(iy // g))
            out.append((normal, normal[0] * p[0] + normal[1] * p[1]))
        return out

    def contains_exact(self, point: Sequence) -> bool:
        x = [as_fraction(c) for c in point]
        return all(sum(a * b for a, b in zip(nv, x)) - c >= 0 for nv, c in self.facets())

    def on_boundary_exact(self, point: Sequence) -> bool:
        x = [as_fraction(c) for c in point]
        vals = [sum(a * b for a, b in zip(nv, x)) - c for nv, c in self.facets()]
        return min(vals) == 0

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.ones(len(pts), dtype=bool)
        for nv, c in self.facets():
            ok &= pts @ np.array([float(a) for a in nv]) - float(c) >= -tol
        return ok

    def support(self, rho) -> np.ndarray:
        """Support function ``max_v <v, rho>`` over the vertices."""
        rho = np.asarray(rho, dtype=float)
        verts = np.array([[float(c) for c in v] for v in self.vertices])
        return np.max(rho @ verts.T, axis=-1)

    def bounding_box(self) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
        lo = tuple(min(v[i] for v in self.vertices) for i in range(self.dimension))
        hi = tuple(max(v[i] for v in self.vertices) for i in range(self.dimension))
        return lo, hi

    def vertex_array(self) -> np.ndarray:
        return np.array([[float(c) for c in v] for v in self.vertices])

    def scaled(self, factor) -> "LatticePolytope":
        f = as_fraction(factor)
        return LatticePolytope(tuple(tuple(f * c for c in v) for v in self.vertices), degenerate=self.degenerate)

    def lattice_points(self) -> list[tuple[int, ...]]:
        """Integer points of the polytope, in lexicographic order."""
        lo, hi = self.bounding_box()
        ranges = [range(math.ceil(a), math.floor(b) + 1) for a, b in zip(lo, hi)]
        if self.dimension == 1:
            return [(i,) for i in ranges[0]]
        return [(i, j) for i in ranges[0] for j in ranges[1] if self.contains_exact((i, j))]

    # serialization ----------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "vertices": [[_fraction_str(c) for c in v] for v in self.vertices],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LatticePolytope":
        return cls(tuple(tuple(Fraction(c) for c in v) for v in obj["vertices"]))


# ---------------------------------------------------------------------------
# Grids and grid functions
# ---------------------------------------------------------------------------


def _clip_polygon(poly: list, normal, offset) -> list:
    """Sutherland-Hodgman clip of a convex polygon by ``<normal, x> >= offset``."""
    out = []
    if not poly:
        return out
    val = [normal[0] * p[0] + normal[1] * p[1] - offset for p in poly]
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        vp, vq = val[i], val[(i + 1) % len(poly)]
        if vp >= 0:
            out.append(p)
        if (vp >= 0) != (vq >= 0):
            t = vp / (vp - vq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _polygon_area(poly: list) -> Fraction:
    if len(poly) < 3:
        return Fraction(0)
    s = sum(poly[i][0] * poly[(i + 1) % len(poly)][1] - poly[(i + 1) % len(poly)][0] * poly[i][1] for i in range(len(poly)))
    return abs(s) / 2


def _run_weights(count: int, h: Fraction) -> list[Fraction]:
    """Composite Simpson weights on ``count`` equally spaced nodes (3/8 rule closes odd runs)."""
    n = count - 1
    w = [Fraction(0)] * count
    if n == 0:
        return w
    if n == 1:
        return [h / 2, h / 2]
    simpson = n if n % 2 == 0 else n - 3
    for i in range(0, simpson, 2):
        w[i] += h / 3
        w[i + 1] += 4 * h / 3
        w[i + 2] += h / 3
    if simpson != n:
        for off, c in zip(range(4), (1, 3, 3, 1)):
            w[simpson + off] += Fraction(3, 8) * h * c
    return w


class Grid:
    """Lattice ``(1/m) Z^n`` clipped to a polytope, with quadrature weights.

    ``resolution`` is the number of lattice steps per unit length, so a
    vertex with denominator ``q`` is a node whenever ``q`` divides ``m``.
    Weights are composite Simpson in 1-D and dual-cell areas clipped to the
    polytope in 2-D (product trapezoid on lattice-aligned rectangles); they
    always sum to the exact volume.
    """

    def __init__(self, polytope: LatticePolytope, resolution: int):
        if resolution < 1:
            raise ValueError("grid resolution must be a positive integer")
        self.polytope = polytope
        self.resolution = int(resolution)
        m = self.resolution
        lo, hi = polytope.bounding_box()
        if polytope.dimension == 1:
            i0, i1 = math.ceil(lo[0] * m), math.floor(hi[0] * m)
            if i1 - i0 < 1:
                raise ValueError("grid too coarse: fewer than two nodes in the interval")
            idx = np.arange(i0, i1 + 1).reshape(-1, 1)
        else:
            pts = [
                (i, j)
                for i in range(math.ceil(lo[0] * m), math.floor(hi[0] * m) + 1)
                for j in range(math.ceil(lo[1] * m), math.floor(hi[1] * m) + 1)
                if polytope.contains_exact((Fraction(i, m), Fraction(j, m)))
            ]
            if len(pts) < 3:
                raise ValueError("grid too coarse: fewer than three nodes in the polygon")
            idx = np.array(pts, dtype=np.int64)
        self.index = idx
        self.index.setflags(write=False)
        self.nodes = idx / m
        self.nodes.setflags(write=False)
        self._exact_weights = self._compute_weights()
        self.weights = np.array([float(w) for w in self._exact_weights])
        self.weights.setflags(write=False)
        bmask = [polytope.on_boundary_exact(tuple(Fraction(int(c), m) for c in row)) for row in idx]
        self.boundary = np.array(bmask, dtype=bool)
        self.boundary.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.polytope.dimension

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def volume(self) -> float:
        return float(self.polytope.volume)

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and other.polytope == self.polytope and other.resolution == self.resolution

    def __hash__(self) -> int:
        return hash((self.polytope, self.resolution))

    def __repr__(self) -> str:
        return f"Grid(dim={self.dimension}, resolution={self.resolution}, nodes={self.size})"

    def exact_node(self, i: int) -> tuple[Fraction, ...]:
        return tuple(Fraction(int(c), self.resolution) for c in self.index[i])

    def _compute_weights(self) -> list[Fraction]:
        m = self.resolution
        h = Fraction(1, m)
        poly = self.polytope
        if poly.dimension == 1:
            a, b = poly.vertices[0][0], poly.vertices[-1][0]
            i0, i1 = int(self.index[0, 0]), int(self.index[-1, 0])
            w = _run_weights(i1 - i0 + 1, h)
            w[0] += Fraction(i0, m) - a
            w[-1] += b - Fraction(i1, m)
            return w
        facets = poly.facets()
        lookup = {tuple(int(c) for c in row): k for k, row in enumerate(self.index)}
        weights = [Fraction(0)] * len(self.index)
        lo, hi = poly.bounding_box()
        half = h / 2
        for i in range(math.floor(lo[0] * m) - 1, math.ceil(hi[0] * m) + 2):
            for j in range(math.floor(lo[1] * m) - 1, math.ceil(hi[1] * m) + 2):
                cx, cy = Fraction(i, m), Fraction(j, m)
                cell = [(cx - half, cy - half), (cx + half, cy - half), (cx + half, cy + half), (cx - half, cy + half)]
                inside = all(nv[0] * p[0] + nv[1] * p[1] - c >= 0 for nv, c in facets for p in cell)
                if inside:
                    area = h * h
                else:
                    clipped = cell
                    for nv, c in facets:
                        clipped = _clip_polygon(clipped, nv, c)
                    area = _polygon_area(clipped)
                if area == 0:
                    continue
                key = (i, j)
                if key not in lookup:
                    # cell of an outside lattice point: hand its area to the nearest node
                    d2 = (self.index[:, 0] - i) ** 2 + (self.index[:, 1] - j) ** 2
                    weights[int(np.argmin(d2))] += area
                else:
                    weights[lookup[key]] += area
        return weights


@dataclass(frozen=True, eq=False)
class ConvexGridFunction:
    """Values of a (nominally convex) function at the nodes of a grid.

    Convexity is not enforced at construction; ``convexity_residual``
    measures it.
    """

    grid: Grid
    values: np.ndarray
    tol: float = 1e-9

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.shape[0] != self.grid.size:
            raise GridMismatch(f"expected {self.grid.size} values, got {vals.shape[0]}")
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise ValueError(f"non-finite value at node {self.grid.nodes[bad].tolist()}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, grid: Grid, f: Callable[[np.ndarray], np.ndarray], **kw) -> "ConvexGridFunction":
        return cls(grid, np.asarray(f(grid.nodes), dtype=float).reshape(-1), **kw)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "ConvexGridFunction":
        return cls(grid, np.full(grid.size, float(c)))

    def _other(self, other):
        if isinstance(other, ConvexGridFunction):
            if other.grid != self.grid:
                raise GridMismatch("grid functions live on different grids")
            return other.values
        return float(other)

    def __add__(self, other):
        return ConvexGridFunction(self.grid, self.values + self._other(other), self.tol)

    __radd__ = __add__

    def __sub__(self, other):
        return ConvexGridFunction(self.grid, self.values - self._other(other), self.tol)

    def __mul__(self, c):
        return ConvexGridFunction(self.grid, self.values * float(c), self.tol)

    __rmul__ = __mul__

    def maximum(self, other: "ConvexGridFunction") -> "ConvexGridFunction":
        return ConvexGridFunction(self.grid, np.maximum(self.values, self._other(other)), self.tol)

    def sup_distance(self, other: "ConvexGridFunction", mask=None) -> float:
        diff = np.abs(self.values - self._other(other))
        if mask is not None:
            diff = diff[mask]
        return float(diff.max())

    # serialization ----------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = ["x1"] if self.grid.dimension == 1 else ["x1", "x2"]
        writer.writerow(cols + ["value"])
        for x, v in zip(self.grid.nodes, self.values):
            writer.writerow([repr(float(c)) for c in x] + [repr(float(v))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "polytope": self.grid.polytope.to_json(),
            "resolution": self.grid.resolution,
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ConvexGridFunction":
        grid = Grid(LatticePolytope.from_json(obj["polytope"]), int(obj["resolution"]))
        return cls(grid, np.array(obj["values"], dtype=float))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# ---------------------------------------------------------------------------
# Lower convex hulls
# ---------------------------------------------------------------------------


class LowerHull:
    """Lower convex envelope of finitely many points ``(x_i, v_i)``.

    In 1-D the hull is computed exactly over the rationals (floats are
    converted to their exact binary values). In 2-D the lifted point set is
    handed to Qhull and the envelope is evaluated as the maximum over the
    lower facet planes, which is exact up to floating-point rounding.
    """

    def __init__(self, xs, values):
        values = list(values)
        if isinstance(xs, np.ndarray):
            xs = xs.reshape(len(values), -1).tolist()
        pts = [tuple(as_fraction(c) for c in (x if isinstance(x, (tuple, list)) else (x,))) for x in xs]
        if len(pts) != len(values):
            raise ValueError("xs and values differ in length")
        if not pts:
            raise DegenerateError("no points given")
        self.dimension = len(pts[0])
        fvals = [float(v) for v in values]
        if not all(math.isfinite(v) for v in fvals):
            raise ValueError("hull input values must be finite")
        if self.dimension == 1:
            self._build_1d(pts, fvals)
        elif self.dimension == 2:
            self._build_2d(pts, fvals)
        else:
            raise ValueError("only dimensions 1 and 2 are supported")

    def _build_1d(self, pts, vals):
        best: dict[Fraction, Fraction] = {}
        for (x,), v in zip(pts, vals):
            fv = Fraction(v)
            if x not in best or fv < best[x]:
                best[x] = fv
        if len(best) < 2:
            raise DegenerateError("affine span has dimension 0 < 1: need two distinct x values")
        chain: list[tuple[Fraction, Fraction]] = []
        for p in sorted(best.items()):
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        self.vertices_x = np.array([float(p[0]) for p in chain]).reshape(-1, 1)
        self.vertices_v = np.array([float(p[1]) for p in chain])
        self.exact_vertices = chain
        self._lo, self._hi = float(chain[0][0]), float(chain[-1][0])

    def _build_2d(self, pts, vals):
        x = np.array([[float(c) for c in p] for p in pts])
        v = np.asarray(vals, dtype=float)
        base = pts[0]
        others = [p for p in pts if p != base]
        span = 0
        if others:
            span = 1
            d0 = (others[0][0] - base[0], others[0][1] - base[1])
            if any(d0[0] * (p[1] - base[1]) - d0[1] * (p[0] - base[0]) != 0 for p in others):
                span = 2
        if span < 2:
            raise DegenerateError(f"affine span has dimension {span} < 2: points are collinear")
        self._domain = LatticePolytope.from_points(pts)
        lifted = np.column_stack([x, v])
        try:
            hull = ConvexHull(lifted)
            eq = hull.equations
            lower = eq[eq[:, 2] < -1e-12]
            # z = -(a x + b y + d) / c  on each lower facet plane
            self._planes = np.column_stack([-lower[:, 0] / lower[:, 2], -lower[:, 1] / lower[:, 2], -lower[:, 3] / lower[:, 2]])
            verts = np.unique(hull.simplices[np.flatnonzero(eq[:, 2] < -1e-12)])
        except QhullError:
            # all lifted points coplanar: the envelope is that plane
            a = np.column_stack([x, np.ones(len(x))])
            coef, *_ = np.linalg.lstsq(a, v, rcond=None)
            self._planes = coef.reshape(1, 3)
            verts = np.arange(len(x))
        self.vertices_x = x[verts]
        self.vertices_v = v[verts]

    def __call__(self, q, tol: float = 1e-9) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.dimension == 1:
            q = q.reshape(-1)
            if q.size and (q.min() < self._lo - tol or q.max() > self._hi + tol):
                raise ValueError("query point outside the convex hull of the input points")
            return np.interp(q, self.vertices_x[:, 0], self.vertices_v)
        q = q.reshape(-1, 2)
        if not np.all(self._domain.contains(q, tol=tol)):
            raise ValueError("query point outside the convex hull of the input points")
        out = np.empty(len(q))
        chunk = max(1, 2_000_000 // max(1, len(self._planes)))
        for s in range(0, len(q), chunk):
            qq = q[s : s + chunk]
            out[s : s + chunk] = np.max(qq @ self._planes[:, :2].T + self._planes[:, 2], axis=1)
        return out


def lower_convex_hull(xs, values, grid: Grid) -> ConvexGridFunction:
    """Largest convex function below all points ``(x_i, v_i)``, sampled on ``grid``."""
    hull = LowerHull(xs, values)
    if hull.dimension != grid.dimension:
        raise GridMismatch("point dimension differs from grid dimension")
    return ConvexGridFunction(grid, hull(grid.nodes))


def convexity_residual(u: ConvexGridFunction) -> float:
    """``max(u - hull(u))`` over the nodes; 0 for discretely convex data."""
    hull = LowerHull(u.grid.nodes, u.values)
    return float(max(0.0, np.max(u.values - hull(u.grid.nodes))))


def affine_functional(density, u: ConvexGridFunction) -> float:
    """``V^{-1} sum_nodes u * density * w`` for the grid quadrature weights ``w``.

    ``density`` may be a grid function on the same grid or an array of node
    values; signed densities are allowed.
    """
    if isinstance(density, ConvexGridFunction):
        if density.grid != u.grid:
            raise GridMismatch("density and function live on different grids")
        dens = density.values
    else:
        dens = np.asarray(density, dtype=float).reshape(-1)
        if dens.shape[0] != u.grid.size:
            raise GridMismatch(f"density has {dens.shape[0]} values, grid has {u.grid.size} nodes")
    return float(np.sum(u.values * dens * u.grid.weights) / u.grid.volume)


# ---------------------------------------------------------------------------
# Symbols and Legendre transforms
# ---------------------------------------------------------------------------


class SymbolFunction:
    """Convex function on R^n whose gradient image is a given polytope.

    ``func`` maps an ``(N, n)`` array of points ``rho`` to ``N`` values. Calls
    accept any ``(..., n)`` array, and for ``n = 1`` also plain scalars or
    1-D arrays of rho values.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], polytope: LatticePolytope, *, name: str = "symbol"):
        self.func = func
        self.polytope = polytope
        self.name = name

    @property
    def dimension(self) -> int:
        return self.polytope.dimension

    def _points(self, rho) -> tuple[np.ndarray, tuple]:
        rho = np.asarray(rho, dtype=float)
        if self.dimension == 1 and (rho.ndim == 0 or rho.shape[-1] != 1):
            rho = rho[..., None]
        return rho.reshape(-1, self.dimension), rho.shape[:-1]

    def __call__(self, rho) -> np.ndarray:
        pts, shape = self._points(rho)
        return np.asarray(self.func(pts), dtype=float).reshape(shape)

    def shifted(self, c: float) -> "SymbolFunction":
        c = float(c)
        return SymbolFunction(lambda r: self.func(r) + c, self.polytope, name=f"{self.name}{c:+g}")

    def growth_gap(self, rho) -> np.ndarray:
        """``psi(rho) - h(rho)`` with ``h`` the support function of the polytope."""
        pts, shape = self._points(rho)
        return (np.asarray(self.func(pts)) - self.polytope.support(pts)).reshape(shape)


def support_symbol(polytope: LatticePolytope) -> SymbolFunction:
    return SymbolFunction(polytope.support, polytope, name="support")


def fubini_study_symbol(n: int = 1, d: int = 1) -> SymbolFunction:
    """``(d/2) log(1 + sum exp(2 rho_i))``, the symbol of the Fubini-Study metric on O(d)."""

    def func(r):
        return 0.5 * d * np.logaddexp.reduce(np.column_stack([np.zeros(len(r)), 2.0 * r]), axis=1)

    return SymbolFunction(func, LatticePolytope.simplex(n, d), name="fs")


def guillemin_potential(polytope: LatticePolytope) -> Callable[[np.ndarray], np.ndarray]:
    """``u(x) = 1/2 sum_i l_i(x) log l_i(x)`` over the facet functions ``l_i``."""
    facets = [(np.array([float(a) for a in nv]), float(c)) for nv, c in polytope.facets()]

    def u(x):
        x = np.asarray(x, dtype=float).reshape(-1, polytope.dimension)
        total = np.zeros(len(x))
        for nv, c in facets:
            ell = x @ nv - c
            with np.errstate(divide="ignore", invalid="ignore"):
                total += np.where(ell > 0, ell * np.log(np.where(ell > 0, ell, 1.0)), 0.0)
        return 0.5 * total

    return u


def guillemin_gradient(polytope: LatticePolytope) -> Callable[[np.ndarray], np.ndarray]:
    """Gradient ``1/2 sum_i v_i (log l_i(x) + 1)`` of the Guillemin potential (interior points only)."""
    facets = [(np.array([float(a) for a in nv]), float(c)) for nv, c in polytope.facets()]

    def grad(x):
        x = np.asarray(x, dtype=float).reshape(-1, polytope.dimension)
        g = np.zeros_like(x)
        for nv, c in facets:
            g += 0.5 * np.outer(np.log(x @ nv - c) + 1.0, nv)
        return g

    return grad


def _slope_argmax(rho: np.ndarray, psi: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Index of ``argmax_i (x rho_i - psi_i)`` for each x, for convex samples on a uniform grid.

    Linear-time Legendre transform: the argmax is located by merging the
    sorted targets with the nondecreasing chord slopes, then the two
    neighbours are rechecked to absorb rounding.
    """
    slopes = np.maximum.accumulate(np.diff(psi) / np.diff(rho))
    idx = np.searchsorted(slopes, xs, side="left")
    cand = np.stack([np.clip(idx - 1, 0, len(rho) - 1), idx, np.clip(idx + 1, 0, len(rho) - 1)])
    vals = xs[None, :] * rho[cand] - psi[cand]
    return cand[np.argmax(vals, axis=0), np.arange(len(xs))]


def _check_convex_samples(psi: np.ndarray, axis: int = -1, tol: float = 1e-9):
    d2 = np.diff(psi, n=2, axis=axis)
    scale = 1.0 + np.max(np.abs(psi))
    if d2.size and d2.min() < -tol * scale:
        raise ConvexityError(f"symbol samples are not convex (second difference {d2.min():.3e})")


def legendre_transform(
    psi: SymbolFunction,
    target: Grid,
    *,
    step: float | None = None,
    radius: float = 8.0,
    max_radius: float = 512.0,
    boundary_tol: float = 1e-13,
) -> ConvexGridFunction:
    """``u(x) = sup_rho (<x, rho> - psi(rho))`` at every node of ``target``.

    The sup runs over a uniform rho-grid of spacing ``step`` on ``[-R, R]^n``;
    ``R`` doubles until every interior node has its argmax strictly inside
    the box and boundary-node values have stopped moving.
    """
    if target.polytope != psi.polytope:
        raise GridMismatch("target grid polytope differs from the symbol's polytope")
    n = target.dimension
    if step is None:
        step = 2.0**-10 if n == 1 else 2.0**-5
    x = target.nodes
    interior = ~target.boundary
    prev = None
    r = float(radius)
    while True:
        half = int(round(r / step))
        rho = np.arange(-half, half + 1) * step
        if n == 1:
            vals, arg_edge = _llt_1d(psi, rho, x[:, 0])
        else:
            vals, arg_edge = _llt_2d(psi, rho, x)
        bad = arg_edge & interior
        stable = prev is not None and np.max(np.abs(vals - prev)[~interior], initial=0.0) <= boundary_tol * (1 + np.max(np.abs(vals)))
        if not bad.any() and (stable or not (~interior).any()):
            return ConvexGridFunction(target, vals)
        if r * 2 > max_radius:
            if bad.any():
                node = x[int(np.flatnonzero(bad)[0])].tolist()
                raise GrowthError(f"Legendre supremum diverges at node {node} (argmax reaches |rho| = {r:g})", node=node)
            return ConvexGridFunction(target, vals)
        prev = vals
        r *= 2


def _llt_1d(psi: SymbolFunction, rho: np.ndarray, xs: np.ndarray):
    samples = psi(rho)
    if not np.all(np.isfinite(samples)):
        raise GrowthError("symbol is not finite on the sampling box")
    _check_convex_samples(samples)
    idx = _slope_argmax(rho, samples, xs)
    vals = xs * rho[idx] - samples[idx]
    return vals, (idx == 0) | (idx == len(rho) - 1)


def _llt_2d(psi: SymbolFunction, rho: np.ndarray, x: np.ndarray):
    r1, r2 = np.meshgrid(rho, rho, indexing="ij")
    samples = psi(np.stack([r1, r2], axis=-1))
    if not np.all(np.isfinite(samples)):
        raise GrowthError("symbol is not finite on the sampling box")
    _check_convex_samples(samples, axis=0)
    _check_convex_samples(samples, axis=1)
    x2_vals, x2_inv = np.unique(x[:, 1], return_inverse=True)
    # pass 1: g[a, j] = max_b (x2_j rho_b - psi(rho_a, rho_b))
    g = np.empty((len(rho), len(x2_vals)))
    edge2 = np.empty((len(rho), len(x2_vals)), dtype=bool)
    for a in range(len(rho)):
        idx = _slope_argmax(rho, samples[a], x2_vals)
        g[a] = x2_vals * rho[idx] - samples[a, idx]
        edge2[a] = (idx == 0) | (idx == len(rho) - 1)
    vals = np.empty(len(x))
    edge = np.empty(len(x), dtype=bool)
    for j in range(len(x2_vals)):
        sel = np.flatnonzero(x2_inv == j)
        h = -g[:, j]
        order = np.argsort(x[sel, 0])
        xs = x[sel[order], 0]
        idx = _slope_argmax(rho, h, xs)
        vals[sel[order]] = xs * rho[idx] - h[idx]
        edge[sel[order]] = (idx == 0) | (idx == len(rho) - 1) | edge2[idx, j]
    return vals, edge


def legendre_back(u: ConvexGridFunction, rho_grid=None) -> SymbolFunction:
    """``psi(rho) = max_x (<x, rho> - u(x))`` over the grid nodes.

    The result is piecewise affine and convex with gradient image the grid's
    polytope. When ``rho_grid`` is given the symbol's values there are
    tabulated on the returned object as ``samples``.
    """
    if convexity_residual(u) > u.tol:
        raise ConvexityError("cannot back-transform a non-convex grid function")
    hull = LowerHull(u.grid.nodes, u.values)
    hx, hv = hull.vertices_x, hull.vertices_v
    if u.grid.dimension == 1:
        xs, vs = hx[:, 0], hv
        kinks = np.diff(vs) / np.diff(xs)

        def func(r):
            r = r[:, 0]
            idx = np.searchsorted(kinks, r, side="left")
            cand = np.stack([np.clip(idx - 1, 0, len(xs) - 1), np.clip(idx, 0, len(xs) - 1)])
            return np.max(xs[cand] * r[None, :] - vs[cand], axis=0)

    else:

        def func(r):
            out = np.empty(len(r))
            chunk = max(1, 2_000_000 // len(hx))
            for s in range(0, len(r), chunk):
                out[s : s + chunk] = np.max(r[s : s + chunk] @ hx.T - hv, axis=1)
            return out

    sym = SymbolFunction(func, u.grid.polytope, name="legendre_back")
    if rho_grid is not None:
        rho_grid = np.asarray(rho_grid, dtype=float)
        sym.samples = (rho_grid, sym(rho_grid))
    return sym
