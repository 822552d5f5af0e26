"""Independent oracles used to freeze derived reference values."""
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from scipy.optimize import minimize_scalar

from okounkov_lab.convexlab import Grid, LatticePolytope, fubini_study_symbol, legendre_transform, lower_convex_hull
from okounkov_lab.hermitian import chebyshev_level, gram_exact_fs
from okounkov_lab.okounkov import Variety
from okounkov_lab.specs import parse_symbol

P1, P2 = Variety.proj(1, 1), Variety.proj(2, 1)


def p1_norm(j, k):
    # ||z^j||^2 under e^{-2k phi_FS} and the normalized FS area form, in s = |z|^2
    s = sp.symbols("s", positive=True)
    return sp.integrate(s**j * (1 + s) ** (-(k + 2)), (s, 0, sp.oo))


def p2_norm(a1, a2, k):
    s, t = sp.symbols("s t", positive=True)
    inner = sp.integrate(s**a1 * t**a2 * (1 + s + t) ** (-(k + 3)), (s, 0, sp.oo))
    return 2 * sp.integrate(sp.simplify(inner), (t, 0, sp.oo))


@pytest.mark.parametrize("k", [1, 2, 4])
def test_p1_gram_from_beta_integral(k):
    exact = dict(zip(gram_exact_fs(k, P1).basis.valuations, gram_exact_fs(k, P1).exact))
    for j in range(k + 1):
        assert Fraction(str(p1_norm(j, k))) == exact[(j,)]


@pytest.mark.parametrize("k", [1, 2])
def test_p2_gram_from_dirichlet_integral(k):
    g = gram_exact_fs(k, P2)
    for a, q in zip(g.basis.valuations, g.exact):
        assert Fraction(str(p2_norm(a[0], a[1], k))) == q


def test_golden_value_from_exact_rational():
    val = sp.Rational(1, 128) * sp.log(sp.factorial(32) ** 2 / sp.factorial(65))
    lev = chebyshev_level(gram_exact_fs(64, P1))
    assert abs(float(val.evalf(30)) - lev.as_dict()[(32,)]) < 1e-15
    assert abs(float(val.evalf(30)) - (-0.36114584250239656)) < 1e-16


def brute_legendre(psi, x):
    res = minimize_scalar(lambda r: float(psi(np.array([[r]]))[0]) - x * r, bounds=(-40, 40), method="bounded",
                          options={"xatol": 1e-12})
    return -res.fun


@pytest.mark.parametrize("name", ["fs", "quadratic"])
def test_legendre_against_scalar_optimizer(name):
    psi = parse_symbol(name, P1)
    grid = Grid(P1.polytope, 64)
    u = legendre_transform(psi, grid)
    for i in range(2, 63, 7):
        x = float(grid.nodes[i, 0])
        assert abs(u.values[i] - brute_legendre(psi, x)) < 1e-7


def test_fs_dual_midpoint_value():
    # closed form at x = 1/2 is -log(2)/2
    u = legendre_transform(fubini_study_symbol(1, 1), Grid(P1.polytope, 2))
    assert abs(u.values[1] + math.log(2) / 2) < 1e-9
    assert abs(-math.log(2) / 2 - (-0.34657)) < 5e-6


def brute_hull_2d(pts, vals, q):
    """Minimum of the linear interpolants over every triangle of input points containing q."""
    best = math.inf
    pts = np.asarray(pts, dtype=float)
    for i, j, k in itertools.combinations(range(len(pts)), 3):
        a, b, c = pts[i], pts[j], pts[k]
        m = np.column_stack([b - a, c - a])
        if abs(np.linalg.det(m)) < 1e-12:
            continue
        l1, l2 = np.linalg.solve(m, q - a)
        if min(l1, l2, 1 - l1 - l2) < -1e-12:
            continue
        best = min(best, (1 - l1 - l2) * vals[i] + l1 * vals[j] + l2 * vals[k])
    return best


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_2d_hull_against_triangle_enumeration(seed):
    rng = np.random.default_rng(seed)
    poly = LatticePolytope.rectangle(1, 1)
    corners = [(0, 0), (1, 0), (0, 1), (1, 1)]
    interior = [tuple(p) for p in rng.uniform(0, 1, size=(8, 2))]
    pts = corners + interior
    vals = rng.normal(size=len(pts))
    grid = Grid(poly, 6)
    h = lower_convex_hull(pts, vals, grid)
    for node, v in zip(grid.nodes, h.values):
        assert abs(v - brute_hull_2d(pts, vals, node)) < 1e-10


def test_nine_point_square_hull():
    pts = [(i / 2, j / 2) for i in range(3) for j in range(3)]
    vals = [x * x + y * y for x, y in pts]
    assert abs(brute_hull_2d(pts, vals, np.array([0.5, 0.5])) - 0.5) < 1e-15
