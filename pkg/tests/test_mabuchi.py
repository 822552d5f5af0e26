import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from okounkov_lab.convexlab import ConvexGridFunction, Grid, GridMismatch, LatticePolytope, convexity_residual
from okounkov_lab.convexlab import affine_functional
from okounkov_lab.mabuchi import (
    ModelSpace,
    NotSeparated,
    _separator_affinity,
    bicombing_check,
    busemann_test,
    cat0_flatness_test,
    d1_alternative_geodesic,
    energy_and_rooftop,
    finsler_length,
    hinge_selector,
    mabuchi_geodesic,
    mabuchi_selector,
    model_distance,
    separator_search,
    certify_flatness,
)
from okounkov_lab.okounkov import Variety
from okounkov_lab.specs import parse_dual, parse_symbol

UNIT = LatticePolytope.interval(0, 1)
G = Grid(UNIT, 1024)
X = G.nodes[:, 0]


def gf(values, grid=G):
    return ConvexGridFunction(grid, values)


ZERO, LIN, QUAD = gf(np.zeros(G.size)), gf(X), gf(0.5 * X**2)


# --- geodesics and distances ---------------------------------------------------


def test_mabuchi_geodesic_examples():
    assert np.all(mabuchi_geodesic(ZERO, ZERO).at(0.3).values == 0)
    assert np.allclose(mabuchi_geodesic(ZERO, LIN).at(0.5).values, X / 2, rtol=0, atol=0)
    fs = parse_dual("fs", G)
    mid = mabuchi_geodesic(fs, QUAD).at(0.5)
    assert abs(mid.values[512] - (-0.34657 + 0.125) / 2) < 1e-5
    assert mabuchi_geodesic(fs, QUAD).convexity_defect() <= 1e-9


def test_geodesic_grid_mismatch():
    with pytest.raises(GridMismatch):
        mabuchi_geodesic(ZERO, ConvexGridFunction.constant(Grid(UNIT, 8), 0.0))


def test_model_distance_examples():
    for p in (1, 2, 3, 1.5):
        assert math.isclose(model_distance(QUAD, QUAD + 0.25, p), 0.25, rel_tol=1e-14)
    assert math.isclose(model_distance(ZERO, LIN, 1), 0.5, rel_tol=1e-14)
    assert math.isclose(model_distance(ZERO, LIN, 2), 1 / math.sqrt(3), rel_tol=1e-9)


def test_model_space_validates():
    with pytest.raises(ValueError):
        ModelSpace(UNIT, G, 0.5)
    assert math.isclose(ModelSpace(UNIT, G, 1).distance(ZERO, LIN), 0.5)


def test_distance_is_normalized_by_volume():
    poly = LatticePolytope.interval(0, 2)
    g = Grid(poly, 64)
    a = ConvexGridFunction.constant(g, 0.0)
    assert math.isclose(model_distance(a, a + 1.0, 2), 1.0, rel_tol=1e-14)


def test_finsler_length_examples():
    path = mabuchi_geodesic(ZERO, LIN)
    assert abs(finsler_length(path, 2) - 1 / math.sqrt(3)) < 1e-3
    assert finsler_length(mabuchi_geodesic(LIN, LIN), 2) == 0
    assert abs(finsler_length(path.reparametrized(lambda t: t * t), 2) - 1 / math.sqrt(3)) < 1e-3


def test_busemann_examples():
    a = mabuchi_geodesic(ZERO, LIN)
    assert busemann_test(a, a, 2) == 0
    assert busemann_test(a, mabuchi_geodesic(ZERO, ZERO), 2) >= -1e-12
    assert busemann_test(a, mabuchi_geodesic(ZERO, gf(X**2)), 2) >= -1e-9


def test_cat0_examples():
    assert abs(cat0_flatness_test(ZERO, LIN, mabuchi_geodesic(ZERO, LIN).at(0.3))) <= 1e-9
    assert abs(cat0_flatness_test(ZERO, LIN, QUAD)) <= 1e-9
    b, c = gf(X - 0.5), gf(np.full(G.size, 0.3))
    ab, ac, bc = model_distance(ZERO, b, 2), model_distance(ZERO, c, 2), model_distance(b, c, 2)
    assert abs(ab**2 + ac**2 - bc**2) <= 1e-12


def test_cat0_needs_p2():
    with pytest.raises(ValueError):
        cat0_flatness_test(ZERO, LIN, QUAD, p=1)


# --- separators ----------------------------------------------------------------


def test_separator_examples():
    s = separator_search(QUAD, QUAD + 0.5)
    assert s.density_id == "x^0" and math.isclose(s.gap, 0.5, rel_tol=1e-14)
    s = separator_search(LIN, gf(X**2))
    assert s.density_id == "x^0" and abs(s.gap - 1 / 6) < 1e-6


def test_separator_equal_mean_needs_first_moment():
    # x - 1/2 has mean zero but first moment 1/12
    s = separator_search(ZERO, gf(X - 0.5))
    assert s.density_id == "x^1"
    assert abs(s.gap - 1 / 12) < 1e-9


def test_separator_equal_inputs():
    with pytest.raises(NotSeparated, match="inputs equal"):
        separator_search(QUAD, QUAD)


# --- d_1 geometry --------------------------------------------------------------


def test_hinge_family():
    path = d1_alternative_geodesic(G)
    assert np.all(path.at(0).values == 0)
    assert np.array_equal(path.at(1).values, X)
    quarter = path.at(0.25)
    assert np.allclose(quarter.values, np.maximum(0, X - 0.5), rtol=0, atol=1e-15)
    assert abs(np.sum(G.weights * quarter.values) - 1 / 8) < 1e-12
    sep = model_distance(path.at(0.5), mabuchi_geodesic(ZERO, LIN).at(0.5), 1)
    assert sep >= 0.03
    assert path.convexity_defect() <= 1e-9


def test_hinge_unit_speed_on_panel_aligned_times():
    ts = [0.0, 1 / 16, 1 / 4, 9 / 16, 1.0]
    report = bicombing_check(hinge_selector, [(ZERO, LIN)], p=1, ts=ts)
    assert report["unit_speed_residual"] <= 1e-9
    assert not report["symmetric"]


def test_mabuchi_bicombing():
    fs = parse_dual("fs", G)
    pairs = [(ZERO, LIN), (fs, QUAD), (ZERO, parse_dual("hinge:0.5", G))]
    rep = bicombing_check(mabuchi_selector, pairs, p=1, ts=[0.0, 0.25, 0.5, 0.75, 1.0])
    assert rep["symmetry_defect"] == 0
    assert rep["selects_linear"]
    assert rep["unit_speed_residual"] <= 1e-12


def test_energy_examples():
    assert energy_and_rooftop(QUAD, QUAD)[3] == 0
    assert math.isclose(energy_and_rooftop(ZERO, LIN)[3], 0.5, rel_tol=1e-14)
    assert math.isclose(energy_and_rooftop(LIN, gf(1 - X))[3], 0.5, rel_tol=1e-12)


# --- flatness certifier --------------------------------------------------------


def test_certify_equal_and_translation_pairs():
    p1 = Variety.proj(1, 1)
    fs = parse_symbol("fs", p1)
    rep = certify_flatness(
        [("same", fs, fs), ("shift", fs, parse_symbol("fs+0.7", p1))],
        p1,
        ks=(8, 16),
        ts=(0.0, 0.5, 1.0),
        resolution=128,
        distance_samples=21,
    )
    same, shift = rep.pairs
    assert max(same["affinity"]["per_k"].values()) == 0
    assert same["separator"]["density_id"] is None
    assert shift["translation"] and max(shift["affinity"]["per_k"].values()) <= 1e-12
    assert shift["separator"]["density_id"] == "x^0"
    assert rep.verdict == "pass"
    assert rep.to_csv().count("\n") == 3


def test_certify_rejects_foreign_symbol():
    p1 = Variety.proj(1, 1)
    with pytest.raises(ValueError, match="body"):
        certify_flatness([("bad", parse_symbol("fs", p1), parse_symbol("fs", Variety.proj(1, 2)))], p1, ks=(4,))


# --- invariants ----------------------------------------------------------------

GS = Grid(UNIT, 64)
XS = GS.nodes[:, 0]
G2 = Grid(LatticePolytope.simplex(2), 12)


@st.composite
def convex_functions(draw, grid=GS):
    x = grid.nodes
    pieces = draw(st.lists(st.tuples(*[st.floats(-2, 2)] * (x.shape[1] + 1)), min_size=1, max_size=4))
    curv = draw(st.floats(0, 3))
    vals = curv * np.sum(x**2, axis=1)
    aff = np.max([x @ np.array(p[:-1]) + p[-1] for p in pieces], axis=0)
    return ConvexGridFunction(grid, vals + aff)


@given(convex_functions(), convex_functions(), st.sampled_from([1, 2, 3]))
def test_constant_speed(u0, u1, p):
    path = mabuchi_geodesic(u0, u1)
    total = model_distance(u0, u1, p)
    for s, t in [(0.0, 0.3), (0.25, 0.5), (0.1, 0.9), (0.6, 1.0)]:
        assert abs(model_distance(path.at(s), path.at(t), p) - (t - s) * total) <= 1e-12 * (1 + total)


@given(convex_functions(), convex_functions(), convex_functions(), convex_functions(), st.sampled_from([1, 2, 3]))
def test_busemann_convexity(a0, a1, b0, b1, p):
    assert busemann_test(mabuchi_geodesic(a0, a1), mabuchi_geodesic(b0, b1), p, samples=41) >= -1e-9


@given(convex_functions(G2), convex_functions(G2), convex_functions(G2))
def test_cat0_equality(a, b, c):
    assert abs(cat0_flatness_test(a, b, c)) <= 1e-9


@given(convex_functions(), convex_functions())
def test_separator_is_affine_along_geodesics(u0, u1):
    if np.max(np.abs(u0.values - u1.values)) <= 1e-12:
        return
    try:
        sep = separator_search(u0, u1)
    except NotSeparated:
        return
    assert _separator_affinity(sep, mabuchi_geodesic(u0, u1), np.linspace(0, 1, 41)) <= 1e-12


@given(convex_functions(), convex_functions())
def test_mabuchi_symmetry_exact(u0, u1):
    assert bicombing_check(mabuchi_selector, [(u0, u1)], p=2)["symmetry_defect"] == 0


@given(convex_functions(G2), convex_functions(G2))
def test_rooftop_identity(u0, u1):
    d1 = energy_and_rooftop(u0, u1)[3]
    assert abs(d1 - model_distance(u0, u1, 1)) <= 1e-12 * (1 + abs(d1))
    assert convexity_residual(u0.maximum(u1)) <= 1e-9


@given(convex_functions(), st.floats(-2, 2))
def test_separator_gap_is_functional_difference(u0, c):
    if abs(c) < 1e-3:
        return
    sep = separator_search(u0, u0 + c)
    diff = affine_functional(sep.density, u0) - affine_functional(sep.density, u0 + c)
    assert math.isclose(sep.gap, abs(diff))
