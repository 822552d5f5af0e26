"""The toric model of the space of continuous psh metrics.

A torus-invariant metric is represented by the Legendre dual ``u`` of its
symbol, a convex function on the moment polytope. In this model Mabuchi
geodesics are straight segments ``u_t = (1-t) u_0 + t u_1`` and the
``d_p`` distance is the normalized ``L^p`` distance of duals. The functions
here compute those distances and test the curvature, bicombing and
separation properties that a flat model must satisfy. They also run the
Chebyshev pipeline along model geodesics.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .convexlab import (
    ConvexGridFunction,
    Grid,
    GridMismatch,
    LatticePolytope,
    SymbolFunction,
    affine_functional,
    convexity_residual,
    legendre_back,
    legendre_transform,
)
from .hermitian import WeightFunction, chebyshev_levels
from .okounkov import FlagSpec, Variety, okounkov_body

__all__ = [
    "ModelSpace",
    "GeodesicPath",
    "BicombingSelector",
    "FlatnessReport",
    "NotSeparated",
    "Separator",
    "mabuchi_geodesic",
    "hinge_geodesic",
    "model_distance",
    "finsler_length",
    "busemann_test",
    "cat0_flatness_test",
    "separator_search",
    "certify_flatness",
    "theorem_a_certify",
    "d1_alternative_geodesic",
    "mabuchi_selector",
    "hinge_selector",
    "bicombing_check",
    "energy_and_rooftop",
    "TOL",
]

# tolerances applied by the certifier and the bicombing check
TOL = {
    "linearity": 1e-12,
    "affinity_extrapolated": 1e-2,
    "affinity_translation": 1e-12,
    "busemann": -1e-9,
    "cat0": 1e-9,
    "separator_gap": 1e-6,
    "separator_affinity": 1e-12,
    "symmetry": 0.0,
    "unit_speed": 1e-9,
}


@dataclass(frozen=True)
class ModelSpace:
    """``Conv(body)`` with the normalized ``L^p`` norm."""

    body: LatticePolytope
    grid: Grid
    p: float = 2.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("exponent p must be >= 1")
        if self.grid.polytope != self.body:
            raise GridMismatch("grid does not discretize the model body")

    @property
    def V(self) -> float:
        return float(self.body.volume)

    def distance(self, u0: ConvexGridFunction, u1: ConvexGridFunction) -> float:
        return model_distance(u0, u1, self.p)


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """A path ``t -> u_t`` in the convex-function model, ``t`` in [0, 1]."""

    u0: ConvexGridFunction
    u1: ConvexGridFunction
    rule: str = "mabuchi-linear"
    evaluator: Callable[[float], ConvexGridFunction] | None = None
    times: tuple[float, ...] = tuple(np.linspace(0.0, 1.0, 41))

    def __post_init__(self):
        if self.u0.grid != self.u1.grid:
            raise GridMismatch("geodesic endpoints live on different grids")
        if self.rule != "mabuchi-linear" and self.evaluator is None:
            raise ValueError("custom paths need an evaluator")
        # degenerate pairs give the constant path exactly, not up to roundoff
        object.__setattr__(self, "_constant", bool(np.array_equal(self.u0.values, self.u1.values)))

    @property
    def grid(self) -> Grid:
        return self.u0.grid

    def at(self, t: float) -> ConvexGridFunction:
        if self.rule == "mabuchi-linear":
            if t == 0 or self._constant:
                return self.u0
            if t == 1:
                return self.u1
            return ConvexGridFunction(self.grid, (1.0 - t) * self.u0.values + t * self.u1.values)
        return self.evaluator(float(t))

    def reparametrized(self, f: Callable[[float], float]) -> "GeodesicPath":
        return GeodesicPath(self.u0, self.u1, "custom", lambda t: self.at(f(t)), self.times)

    def convexity_defect(self) -> float:
        return max(convexity_residual(self.at(t)) for t in self.times)


def mabuchi_geodesic(u0: ConvexGridFunction, u1: ConvexGridFunction) -> GeodesicPath:
    return GeodesicPath(u0, u1)


def model_distance(u0: ConvexGridFunction, u1: ConvexGridFunction, p: float) -> float:
    """``(V^{-1} sum w |u0 - u1|^p)^{1/p}``."""
    if p < 1:
        raise ValueError("exponent p must be >= 1")
    if u0.grid != u1.grid:
        raise GridMismatch("distance between functions on different grids")
    g = u0.grid
    diff = np.abs(u0.values - u1.values)
    if p == 1:
        return float(np.sum(g.weights * diff) / g.volume)
    scale = diff.max()
    if scale == 0:
        return 0.0
    return float(scale * (np.sum(g.weights * (diff / scale) ** p) / g.volume) ** (1.0 / p))


def finsler_length(path: GeodesicPath, p: float, resolution: int = 200, width: float = 1.0 / 400) -> float:
    """``int_0^1 (V^{-1} int |d/dt u_t|^p)^{1/p} dt`` by central differences and the midpoint rule."""
    ts = (np.arange(resolution) + 0.5) / resolution
    speeds = np.empty(resolution)
    g = path.grid
    for i, t in enumerate(ts):
        lo, hi = max(0.0, t - width / 2), min(1.0, t + width / 2)
        du = (path.at(hi).values - path.at(lo).values) / (hi - lo)
        speeds[i] = model_distance(ConvexGridFunction(g, du), ConvexGridFunction(g, np.zeros_like(du)), p)
    med = float(np.median(speeds))
    if med > 0 and speeds.max() > 50 * med:
        i = int(np.argmax(speeds))
        warnings.warn(
            f"path speed is not Lipschitz-like near t in [{i / resolution:.4f}, {(i + 1) / resolution:.4f}]",
            RuntimeWarning,
            stacklevel=2,
        )
    return float(np.mean(speeds))


def _distance_profile(pathA: GeodesicPath, pathB: GeodesicPath, p: float, ts: np.ndarray) -> np.ndarray:
    return np.array([model_distance(pathA.at(t), pathB.at(t), p) for t in ts])


def busemann_test(pathA: GeodesicPath, pathB: GeodesicPath, p: float, samples: int = 101) -> float:
    """Minimum centered second difference of ``t -> d_p(A_t, B_t)`` over interior samples."""
    ts = np.linspace(0.0, 1.0, samples)
    d = _distance_profile(pathA, pathB, p, ts)
    return float(np.min(d[:-2] - 2.0 * d[1:-1] + d[2:]))


def cat0_flatness_test(ua: ConvexGridFunction, ub: ConvexGridFunction, uc: ConvexGridFunction, p: float = 2) -> float:
    """``d(m_ab, c)`` minus its Euclidean comparison value (median length formula).

    Nonpositive in a CAT(0) space, zero in a flat one. Collinear triples are
    handled by the same formula, which degenerates correctly.
    """
    if p != 2:
        raise ValueError("the CAT(0) comparison is defined for p = 2 only")
    dab, dac, dbc = model_distance(ua, ub, 2), model_distance(ua, uc, 2), model_distance(ub, uc, 2)
    comparison = math.sqrt(max(0.0, 0.5 * dac**2 + 0.5 * dbc**2 - 0.25 * dab**2))
    mid = ConvexGridFunction(ua.grid, 0.5 * (ua.values + ub.values))
    return model_distance(mid, uc, 2) - comparison


# ---------------------------------------------------------------------------
# Separating functionals
# ---------------------------------------------------------------------------


class NotSeparated(ValueError):
    pass


@dataclass(frozen=True)
class Separator:
    density_id: str
    density: np.ndarray
    gap: float


def _probe_densities(grid: Grid, degree: int):
    x = grid.nodes
    if grid.dimension == 1:
        for m in range(degree + 1):
            yield f"x^{m}", x[:, 0] ** m
    else:
        for total in range(degree + 1):
            for a in range(total, -1, -1):
                yield f"x1^{a}*x2^{total - a}", x[:, 0] ** a * x[:, 1] ** (total - a)


def separator_search(u0: ConvexGridFunction, u1: ConvexGridFunction, size: int = 4, *, threshold: float = 1e-6) -> Separator:
    """First probe density ``rho`` with ``|E_rho(u0) - E_rho(u1)| >= threshold``.

    Probes are the monomials up to degree ``size`` followed by a smoothed
    sign of ``u0 - u1``. Each ``E_rho`` is linear, hence affine along model
    geodesics.
    """
    if u0.grid != u1.grid:
        raise GridMismatch("separator search across different grids")
    diff = u0.values - u1.values
    if np.max(np.abs(diff)) <= 1e-12:
        raise NotSeparated("not separated - inputs equal")
    probes = list(_probe_densities(u0.grid, size))
    eps = 1e-3 * np.max(np.abs(diff))
    probes.append(("smoothed-sign", np.tanh(diff / eps)))
    for ident, dens in probes:
        gap = abs(affine_functional(dens, u0) - affine_functional(dens, u1))
        if gap >= threshold:
            return Separator(ident, dens, float(gap))
    raise NotSeparated("no probe separates the inputs above threshold")


def _separator_affinity(sep: Separator, path: GeodesicPath, ts) -> float:
    e0 = affine_functional(sep.density, path.u0)
    e1 = affine_functional(sep.density, path.u1)
    return float(max(abs(affine_functional(sep.density, path.at(t)) - ((1 - t) * e0 + t * e1)) for t in ts))


# ---------------------------------------------------------------------------
# d_1 geometry and bicombings
# ---------------------------------------------------------------------------


def hinge_geodesic(u0: ConvexGridFunction, u1: ConvexGridFunction) -> GeodesicPath:
    """Hinge family ``u_0 + s * max(0, |u_1 - u_0| - (1 - sqrt t) M)``, ``M = max |u_1 - u_0|``.

    Defined for comparable pairs (``u_1 - u_0`` of one sign); ``s`` is that
    sign. Each step moves pointwise monotonically, so it is a ``d_1`` geodesic.
    """
    delta = u1.values - u0.values
    if delta.min() < 0 < delta.max():
        raise ValueError("hinge family needs comparable endpoints")
    sign = 1.0 if delta.max() > 0 else -1.0
    mag = np.abs(delta)
    top = mag.max()

    def at(t: float) -> ConvexGridFunction:
        if t >= 1:
            return u1
        return ConvexGridFunction(u0.grid, u0.values + sign * np.maximum(0.0, mag - (1.0 - math.sqrt(t)) * top))

    return GeodesicPath(u0, u1, "hinge", at)


def d1_alternative_geodesic(grid: Grid) -> GeodesicPath:
    """``u_t(x) = max(0, x - 1 + sqrt t)`` between ``0`` and ``x`` on [0, 1]."""
    if grid.polytope != LatticePolytope.interval(0, 1):
        raise ValueError("the hinge demonstration lives on [0, 1]")
    u0 = ConvexGridFunction.constant(grid, 0.0)
    u1 = ConvexGridFunction(grid, grid.nodes[:, 0])
    return hinge_geodesic(u0, u1)


@dataclass(frozen=True)
class BicombingSelector:
    """A rule choosing one unit-parametrized geodesic per ordered pair."""

    name: str
    select: Callable[[ConvexGridFunction, ConvexGridFunction], GeodesicPath]

    def __call__(self, u0, u1) -> GeodesicPath:
        return self.select(u0, u1)


mabuchi_selector = BicombingSelector("mabuchi", mabuchi_geodesic)
hinge_selector = BicombingSelector("hinge", hinge_geodesic)


def _unit_speed_residual(path: GeodesicPath, p: float, ts) -> float:
    total = model_distance(path.u0, path.u1, p)
    worst = 0.0
    for i, s in enumerate(ts):
        us = path.at(s)
        for t in ts[i + 1 :]:
            worst = max(worst, abs(model_distance(us, path.at(t), p) - (t - s) * total))
    return worst


def bicombing_check(
    selector: BicombingSelector,
    pairs: Sequence[tuple[ConvexGridFunction, ConvexGridFunction]],
    p: float = 1,
    ts: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
) -> dict:
    """Symmetry ``x_t^{01} = x_{1-t}^{10}`` and unit speed for each selected path.

    For the Mabuchi selector at ``p = 1`` also confirms the selected path is
    the linear one and differs from the hinge alternative where that exists.
    """
    sym = 0.0
    speed = 0.0
    linear_ok = True
    for u0, u1 in pairs:
        fwd, bwd = selector(u0, u1), selector(u1, u0)
        for t in ts:
            sym = max(sym, float(np.max(np.abs(fwd.at(t).values - bwd.at(1.0 - t).values))))
        speed = max(speed, _unit_speed_residual(fwd, p, list(ts)))
        if selector.name == "mabuchi" and p == 1:
            lin = mabuchi_geodesic(u0, u1)
            linear_ok &= all(np.array_equal(fwd.at(t).values, lin.at(t).values) for t in ts)
            if not np.array_equal(u0.values, u1.values):
                try:
                    linear_ok &= model_distance(hinge_geodesic(u0, u1).at(0.5), fwd.at(0.5), 1) > 0
                except ValueError:
                    pass  # incomparable pair: no hinge alternative
    return {
        "selector": selector.name,
        "symmetry_defect": sym,
        "symmetric": sym <= TOL["symmetry"],
        "unit_speed_residual": speed,
        "unit_speed": speed <= TOL["unit_speed"],
        "selects_linear": linear_ok if selector.name == "mabuchi" else None,
    }


def energy_and_rooftop(u0: ConvexGridFunction, u1: ConvexGridFunction) -> tuple[float, float, float, float]:
    """``(E(u0), E(u1), E(max(u0, u1)), d_1)`` with ``E(u) = -V^{-1} int u``.

    The rooftop envelope of two metrics is dual to the pointwise maximum of
    their duals, so ``d_1 = E(u0) + E(u1) - 2 E(max)``.
    """
    if u0.grid != u1.grid:
        raise GridMismatch("energies on different grids")
    g = u0.grid

    def energy(v):
        return -float(np.sum(g.weights * v) / g.volume)

    e0, e1, em = energy(u0.values), energy(u1.values), energy(np.maximum(u0.values, u1.values))
    return e0, e1, em, e0 + e1 - 2.0 * em


# ---------------------------------------------------------------------------
# Flatness certification
# ---------------------------------------------------------------------------


@dataclass
class FlatnessReport:
    """Empirical witness record for flatness of a family of toric metrics."""

    pairs: list[dict]
    tolerances: dict
    model: str
    verdict: str = "fail"

    def __post_init__(self):
        self.verdict = "pass" if all(p["pass"] for p in self.pairs) else "fail"

    def to_json(self) -> dict:
        return {
            "pairs": self.pairs,
            "tolerances": self.tolerances,
            "model": self.model,
            "statement": "results are consistent with an isometric embedding into the stated L^p model; they do not prove equality",
            "verdict": self.verdict,
        }

    def to_csv(self) -> str:
        rows = ["id,affinity_extrapolated,affinity_max_k,linearity,busemann_min,cat0_gap,separator,separator_gap,pass"]
        for p in self.pairs:
            aff = p["affinity"]
            sep = p["separator"]
            rows.append(
                ",".join(
                    [
                        p["id"],
                        repr(float(aff["extrapolated"])),
                        repr(float(max(aff["per_k"].values())) if aff["per_k"] else 0.0),
                        repr(float(max(p["linearity"].values()))),
                        repr(float(p["busemann_min"])),
                        repr(float(p["cat0_gap"])),
                        str(sep["density_id"]),
                        repr(float(sep["gap"])),
                        "1" if p["pass"] else "0",
                    ]
                )
            )
        return "\n".join(rows) + "\n"


def _affinity_fit(ks: Sequence[int], residuals: Sequence[float]) -> float:
    kk = np.array(ks, dtype=float)
    r = np.array(residuals, dtype=float)
    if len(kk) == 1:
        return float(r[0])
    design = np.column_stack([np.ones_like(kk), np.log(kk) / kk])
    coef, *_ = np.linalg.lstsq(design, r, rcond=None)
    return float(coef[0])


def chebyshev_affinity(
    u0: ConvexGridFunction,
    u1: ConvexGridFunction,
    variety: Variety,
    flag: FlagSpec,
    ks: Sequence[int],
    ts: Sequence[float],
    *,
    threads: int = 1,
) -> dict[int, float]:
    """``max_t max_alpha |c_k[phi_t] - ((1-t) c_k[phi_0] + t c_k[phi_1])|`` per ``k``.

    ``phi_t`` is the toric metric whose symbol is the back-transform of the
    model geodesic ``u_t``, including the endpoints.
    """

    def levels(u):
        weight = WeightFunction.toric(variety, legendre_back(u))
        return chebyshev_levels(ks, weight, flag, threads=threads)

    path = mabuchi_geodesic(u0, u1)
    lev0, lev1 = levels(u0), levels(u1)
    out = {k: 0.0 for k in ks}
    for t in ts:
        if t in (0.0, 1.0):
            continue
        levt = levels(path.at(t))
        for k, a, b, c in zip(ks, lev0, lev1, levt):
            out[k] = max(out[k], float(np.max(np.abs(c.values - ((1 - t) * a.values + t * b.values)))))
    return out


def certify_flatness(
    pairs: Sequence[tuple[str, SymbolFunction, SymbolFunction]],
    variety: Variety,
    flag: FlagSpec | None = None,
    ks: Sequence[int] = (16, 32, 64, 128),
    ts: Sequence[float] = tuple(np.linspace(0.0, 1.0, 41)),
    ps: Sequence[float] = (1, 2, 3),
    *,
    resolution: int = 512,
    distance_samples: int = 201,
    threads: int = 1,
) -> FlatnessReport:
    """Check the hypothesis and the conclusion of the flatness criterion on symbol pairs.

    Per pair: (1) Chebyshev affinity along the model geodesic, per ``k`` and
    extrapolated in ``log k / k``; (2) linearity of ``d_p`` along the
    geodesic; (3) a separating linear functional and its affinity along the
    geodesic; plus a Busemann and a CAT(0) probe against a third convex
    function off the segment.
    """
    flag = flag or FlagSpec.coordinate(variety.n)
    body = okounkov_body(variety, flag, 2)
    grid = Grid(body, resolution)
    dts = np.linspace(0.0, 1.0, distance_samples)
    reports = []
    for ident, psi0, psi1 in pairs:
        for psi in (psi0, psi1):
            if psi.polytope != body:
                raise ValueError(f"pair {ident}: symbol gradient range differs from the flag's Okounkov body")
        u0, u1 = legendre_transform(psi0, grid), legendre_transform(psi1, grid)
        reports.append(_certify_pair(ident, u0, u1, variety, flag, ks, ts, ps, dts, threads))
    return FlatnessReport(reports, dict(TOL), f"Conv(body) with normalized L^p norms, p in {list(ps)}")


# name used by the operation contract
theorem_a_certify = certify_flatness


def _certify_pair(ident, u0, u1, variety, flag, ks, ts, ps, dts, threads) -> dict:
    diff = u1.values - u0.values
    equal = np.max(np.abs(diff)) <= 1e-12
    translation = bool(np.ptp(diff) <= 1e-12)
    path = mabuchi_geodesic(u0, u1)
    if equal:
        per_k = {k: 0.0 for k in ks}
    else:
        per_k = chebyshev_affinity(u0, u1, variety, flag, ks, ts, threads=threads)
    extrap = _affinity_fit(ks, [per_k[k] for k in ks])

    linearity = {}
    for p in ps:
        total = model_distance(u0, u1, p)
        worst = 0.0
        sub = dts[:: max(1, len(dts) // 20)]
        for s in sub:
            us = path.at(s)
            for t in dts:
                worst = max(worst, abs(model_distance(us, path.at(t), p) - abs(t - s) * total))
        linearity[str(p)] = float(worst)

    # third vertex off the segment: rooftop dual of u0 and the mean-matched u1
    roof = u0.maximum(u1 - affine_functional(np.ones(u0.grid.size), u1 - u0))
    busemann = min(busemann_test(path, mabuchi_geodesic(roof, u0), p) for p in ps)
    cat0 = cat0_flatness_test(u0, u1, roof, 2)

    if equal:
        sep = {"density_id": None, "gap": 0.0, "affinity": 0.0, "note": "not separated - inputs equal"}
        sep_ok = True
    else:
        s = separator_search(u0, u1)
        aff = _separator_affinity(s, path, ts)
        sep = {"density_id": s.density_id, "gap": s.gap, "affinity": aff}
        sep_ok = s.gap >= TOL["separator_gap"] and aff <= TOL["separator_affinity"]

    if translation:
        aff_ok = max(per_k.values()) <= TOL["affinity_translation"]
    else:
        aff_ok = extrap <= TOL["affinity_extrapolated"]
    ok = (
        aff_ok
        and max(linearity.values()) <= TOL["linearity"]
        and busemann >= TOL["busemann"]
        and abs(cat0) <= TOL["cat0"]
        and sep_ok
    )
    return {
        "id": ident,
        "translation": translation,
        "affinity": {"per_k": {str(k): v for k, v in per_k.items()}, "extrapolated": extrap},
        "linearity": linearity,
        "busemann_min": busemann,
        "cat0_gap": cat0,
        "separator": sep,
        "pass": bool(ok),
    }
