import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from okounkov_lab.convexlab import Grid, LatticePolytope, convexity_residual, legendre_transform
from okounkov_lab.hermitian import (
    ChebyshevLevel,
    CholeskyBreakdown,
    GramSystem,
    QuadratureRule,
    WeightFunction,
    chebyshev_level,
    chebyshev_levels,
    chebyshev_transform,
    convergence_profile,
    gram_exact_fs,
    gram_matrix,
)
from okounkov_lab.okounkov import FlagSpec, Variety, section_basis
from okounkov_lab.specs import parse_weight

P1, P2 = Variety.proj(1, 1), Variety.proj(2, 1)
# (1/128) log(32! 32! / 65!), evaluated from the exact rational
GOLDEN_K64_J32 = -0.36114584250239656


def fs_dual(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(x > 0, x * np.log(np.where(x > 0, x, 1)), 0.0)
        b = np.where(x < 1, (1 - x) * np.log(np.where(x < 1, 1 - x, 1)), 0.0)
    return 0.5 * (a + b)


def projection_levels(g: GramSystem) -> np.ndarray:
    """Minimum norm over each monic class by solving the normal equations directly."""
    m = g.matrix
    out = []
    for i in range(len(m)):
        if i == 0:
            best = np.real(m[0, 0])
        else:
            h = m[:i, :i]
            b = m[:i, i]
            coef = np.linalg.solve(h, b)
            best = np.real(m[i, i] - np.conj(b) @ coef)
        out.append(0.5 * math.log(best) / g.k)
    return np.array(out)


# --- exact Gram ----------------------------------------------------------------


def test_exact_fs_small_degrees():
    assert gram_exact_fs(1, P1).exact == (Fraction(1, 2), Fraction(1, 2))
    g2 = gram_exact_fs(2, P1)
    assert dict(zip(g2.basis.valuations, g2.exact))[(1,)] == Fraction(1, 6)


@pytest.mark.parametrize("k", [1, 2, 5, 13])
def test_exact_fs_sum_identity(k):
    g = gram_exact_fs(k, P1)
    f = math.factorial
    norms = dict(zip(g.basis.valuations, g.exact))
    assert sum((k + 1) * math.comb(k, j) * norms[(j,)] for j in range(k + 1)) == k + 1
    # each normalized term is one, so the binomially weighted variant sums to 2^k
    assert all(norms[(j,)] * Fraction(f(k + 1), f(j) * f(k - j)) == 1 for j in range(k + 1))


def test_exact_fs_p2_total_mass():
    # sum over a of multinomial(k; a) ||z^a||^2 integrates (1 + |z1|^2 + |z2|^2)^k e^{-2k phi} = 1
    for k in (1, 3, 4):
        g = gram_exact_fs(k, P2)
        f = math.factorial
        total = sum(
            Fraction(f(k), f(a[0]) * f(a[1]) * f(k - sum(a))) * q for a, q in zip(g.basis.valuations, g.exact)
        )
        assert total == 1


def test_exact_fs_unsupported():
    with pytest.raises(ValueError):
        gram_exact_fs(2, Variety.proj(1, 2))


# --- numerical Gram ------------------------------------------------------------


@pytest.mark.parametrize("variety,k", [(P1, 8), (P1, 128), (P2, 12)])
def test_gram_matches_exact(variety, k):
    fs = WeightFunction.fubini_study(variety)
    g = gram_matrix(k, section_basis(k, variety, FlagSpec.coordinate(variety.n)), fs)
    ref = gram_exact_fs(k, variety)
    assert np.max(np.abs(g.log_diag - ref.log_diag)) < 1e-10


def test_gram_weight_translation_scales_entries():
    k = 6
    basis = section_basis(k, P1, FlagSpec.coordinate(1))
    g = gram_matrix(k, basis, WeightFunction.fubini_study(P1, shift=0.7))
    exact = np.exp(gram_exact_fs(k, P1).log_diag)
    assert np.allclose(np.diag(g.matrix), math.exp(-1.4 * k) * exact, rtol=1e-10, atol=0)


def test_perturbed_weight_couples_neighbours():
    k = 4
    w = parse_weight("perturbed:0.05", P1)
    basis = section_basis(k, P1, FlagSpec.coordinate(1))
    g = gram_matrix(k, basis, w)
    assert abs(g.matrix[0, 1]) > 1e-4
    assert g.hermitian_defect() <= 1e-12
    fine = QuadratureRule.build(P1.polytope, order=24, panels=64, angular=128)
    g2 = gram_matrix(k, basis, w, fine)
    assert np.max(np.abs(g.matrix - g2.matrix)) < 1e-8


def test_general_weights_only_on_p1():
    with pytest.raises(ValueError, match="P\\^1"):
        WeightFunction.general(P2, lambda z: 0 * z.real)


def test_quadrature_weights_positive_and_normalized():
    for v in (P1, P2, Variety.hirzebruch(1, 2, 1)):
        rule = QuadratureRule.default(v, 8)
        assert np.all(rule.w > 0)
        assert math.isclose(rule.w.sum(), 1.0, rel_tol=1e-13)


# --- Chebyshev levels ----------------------------------------------------------


def test_diagonal_level_is_half_log_norm():
    g = gram_exact_fs(5, P1)
    lev = chebyshev_level(g)
    assert np.allclose(lev.values, 0.5 * g.log_diag / 5, rtol=0, atol=1e-15)


def test_golden_value():
    lev = chebyshev_level(gram_exact_fs(64, P1))
    assert abs(lev.as_dict()[(32,)] - GOLDEN_K64_J32) <= 1e-15
    num = chebyshev_levels([64], WeightFunction.fubini_study(P1))[0]
    assert abs(num.as_dict()[(32,)] - GOLDEN_K64_J32) <= 1e-12


def test_two_by_two_schur_complement():
    basis = section_basis(1, P1, FlagSpec.coordinate(1))
    g = np.array([[2.0, 1.0], [1.0, 1.0]])
    lev = chebyshev_level(GramSystem(1, basis, g, np.log(np.diag(g)), False))
    assert math.isclose(lev.values[1], math.log(math.sqrt(0.5)), rel_tol=1e-14)
    assert math.isclose(lev.values[0], 0.5 * math.log(2), rel_tol=1e-14)


def test_cholesky_breakdown_reports_index():
    basis = section_basis(1, P1, FlagSpec.coordinate(1))
    g = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(CholeskyBreakdown) as exc:
        chebyshev_level(GramSystem(1, basis, g, np.zeros(2), False))
    assert exc.value.index == 1


@pytest.mark.parametrize(
    "variety,weight,flag",
    [
        (P1, "perturbed:0.05", FlagSpec.coordinate(1)),
        (P1, "perturbed:0.2", FlagSpec.at_point([Fraction(1, 2)])),
        (P2, "fs", FlagSpec.at_point([1, -1])),
        (P2, "fs", FlagSpec.random(2, 3)),
    ],
)
def test_cholesky_matches_projection(variety, weight, flag):
    w = parse_weight(weight, variety)
    for k in range(1, 7 if variety.n == 1 else 5):
        g = gram_matrix(k, section_basis(k, variety, flag), w)
        lev = chebyshev_level(g)
        assert np.max(np.abs(lev.values - projection_levels(g))) < 1e-10


def test_monotone_in_weight():
    lo = chebyshev_levels([4, 16], WeightFunction.fubini_study(P1))
    hi = chebyshev_levels([4, 16], WeightFunction.fubini_study(P1, shift=0.3))
    for a, b in zip(lo, hi):
        assert np.all(a.values >= b.values)


@given(st.floats(-3, 3, allow_nan=False))
def test_translation_equivariance(c):
    w = parse_weight("perturbed:0.1", P1)
    base = chebyshev_levels([3, 8], w)
    moved = chebyshev_levels([3, 8], w.shifted(c))
    for a, b in zip(base, moved):
        assert np.max(np.abs(b.values - (a.values - c))) <= 1e-12


def test_level_requires_decreasing_order():
    basis = section_basis(2, P1, FlagSpec.coordinate(1))
    g = gram_exact_fs(2, P1)
    lev = chebyshev_level(g)
    assert list(lev.points) == sorted(lev.points, reverse=True)
    with pytest.raises(ValueError):
        ChebyshevLevel(2, ((0,), (1,)), np.array([0.0, np.inf]))


def test_level_csv():
    text = chebyshev_level(gram_exact_fs(1, P1)).to_csv()
    assert text.splitlines()[0] == "k,alpha1,value"
    assert len(text.splitlines()) == 3


# --- transforms and convergence ------------------------------------------------


def test_transform_fs_within_tolerance():
    grid = Grid(P1.polytope, 512)
    levels = chebyshev_levels([16, 32, 64], WeightFunction.fubini_study(P1))
    c = chebyshev_transform(levels, P1.polytope, grid)
    x = grid.nodes[:, 0]
    window = (x >= 0.1) & (x <= 0.9)
    assert np.max(np.abs(c.values - fs_dual(x))[window]) < 0.06
    assert convexity_residual(c) <= 1e-12


def test_transform_translation_is_exact():
    grid = Grid(P1.polytope, 128)
    w = WeightFunction.fubini_study(P1)
    a = chebyshev_transform(chebyshev_levels([8, 16], w), P1.polytope, grid)
    b = chebyshev_transform(chebyshev_levels([8, 16], w.shifted(0.7)), P1.polytope, grid)
    assert np.max(np.abs(b.values - (a.values - 0.7))) <= 1e-12


def test_transform_single_level_and_monotone_in_ladder():
    grid = Grid(P1.polytope, 64)
    lv = chebyshev_levels([8, 16, 32], WeightFunction.fubini_study(P1))
    one = chebyshev_transform(lv[:1], P1.polytope, grid)
    from okounkov_lab.convexlab import lower_convex_hull

    direct = lower_convex_hull(lv[0].normalized_points(), lv[0].values, grid)
    assert np.array_equal(one.values, direct.values)
    more = chebyshev_transform(lv, P1.polytope, grid)
    assert np.all(more.values <= one.values)


def test_transform_2d_is_convex():
    grid = Grid(P2.polytope, 16)
    lv = chebyshev_levels([4, 8], WeightFunction.fubini_study(P2))
    c = chebyshev_transform(lv, P2.polytope, grid)
    assert convexity_residual(c) <= 1e-12


def test_transform_rejects_points_outside_body():
    lev = chebyshev_level(gram_exact_fs(2, P1))
    with pytest.raises(ValueError, match="outside"):
        chebyshev_transform([lev], LatticePolytope.interval(0, Fraction(1, 2)), Grid(P1.polytope, 4))


def test_convergence_extrapolates_fs():
    grid = Grid(P1.polytope, 512)
    lv = chebyshev_levels([16, 32, 64, 128], WeightFunction.fubini_study(P1))
    ref = legendre_transform(WeightFunction.fubini_study(P1).symbol, grid)
    prof = convergence_profile(lv, grid, ref)
    assert abs(prof.a[256] - (-0.34657)) < 5e-3
    assert prof.sup_errors == sorted(prof.sup_errors, reverse=True)


def test_convergence_translated_ladder():
    grid = Grid(P1.polytope, 64)
    w = WeightFunction.fubini_study(P1)
    a = convergence_profile(chebyshev_levels([8, 16, 32], w), grid)
    b = convergence_profile(chebyshev_levels([8, 16, 32], w.shifted(0.4)), grid)
    assert np.max(np.abs(b.b - a.b)) < 1e-9
    assert np.max(np.abs(b.a - (a.a - 0.4))) < 1e-9


def test_convergence_recovers_exact_model():
    grid = Grid(LatticePolytope.interval(0, 1), 32)
    a0, slope, b0 = -0.2, 0.3, 1.7
    levels = []
    for k in (8, 16, 32, 64):
        pts = tuple((j,) for j in range(k, -1, -1))
        vals = np.array([a0 + slope * j / k + b0 * math.log(k) / k for (j,) in pts])
        levels.append(ChebyshevLevel(k, pts, vals))
    prof = convergence_profile(levels, grid)
    x = grid.nodes[:, 0]
    assert np.max(np.abs(prof.a - (a0 + slope * x))) <= 1e-12
    assert np.max(np.abs(prof.b - b0)) <= 1e-12


def test_convergence_needs_three_levels():
    lv = [chebyshev_level(gram_exact_fs(k, P1)) for k in (2, 4)]
    with pytest.raises(ValueError):
        convergence_profile(lv, Grid(P1.polytope, 8))
