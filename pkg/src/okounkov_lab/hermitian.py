"""Weighted L2 norms of sections and the Chebyshev transform.

The fixed volume form is the pushforward of normalized Lebesgue measure on
the moment polytope under the inverse of the Guillemin moment map
``x -> rho = grad u_G(x)``. For P^1 and P^2 this is the normalized
Fubini-Study volume form, and on P^1 the moment coordinate is the classical
substitution ``x = r^2 / (1 + r^2)``. All quadrature therefore runs in
moment coordinates ``x``, where the integrands are bounded.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .convexlab import (
    ConvexGridFunction,
    Grid,
    LatticePolytope,
    LowerHull,
    SymbolFunction,
    fubini_study_symbol,
    guillemin_gradient,
    guillemin_potential,
    lower_convex_hull,
)
from .okounkov import FlagSpec, SectionBasis, Variety, section_basis

__all__ = [
    "REFERENCE_FORM",
    "CholeskyBreakdown",
    "QuadratureRule",
    "WeightFunction",
    "GramSystem",
    "ChebyshevLevel",
    "ConvergenceProfile",
    "guillemin_symbol",
    "gram_exact_fs",
    "gram_matrix",
    "chebyshev_level",
    "chebyshev_levels",
    "chebyshev_transform",
    "convergence_profile",
]

REFERENCE_FORM = "moment-uniform (normalized Fubini-Study on P^n, product/induced Guillemin form on toric surfaces)"


class CholeskyBreakdown(np.linalg.LinAlgError):
    def __init__(self, index: int, pivot: float):
        super().__init__(
            f"non-positive Cholesky pivot {pivot:.3e} at index {index}; "
            "the quadrature rule is probably under-resolved, increase its order or panels"
        )
        self.index = index


# ---------------------------------------------------------------------------
# Quadrature in moment coordinates
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and positive weights (summing to 1) for the reference measure.

    ``theta`` holds uniform angular nodes for non-invariant weights on P^1;
    it is empty for torus-invariant integrands, where the angular integral
    is exact. ``degree_cap`` is the polynomial degree in ``x`` integrated
    exactly, which covers the Fubini-Study integrands up to ``k = degree_cap``.
    """

    polytope: LatticePolytope
    x: np.ndarray
    w: np.ndarray
    theta: np.ndarray
    degree_cap: int
    order: int
    panels: int

    @classmethod
    def build(cls, polytope: LatticePolytope, order: int, panels: int = 1, angular: int = 0) -> "QuadratureRule":
        g, gw = np.polynomial.legendre.leggauss(order)
        g, gw = 0.5 * (g + 1.0), 0.5 * gw
        if polytope.dimension == 1:
            a, b = (float(v[0]) for v in polytope.vertices)
            edges = np.linspace(a, b, panels + 1)
            x = (edges[:-1, None] + np.outer(np.diff(edges), g)).reshape(-1, 1)
            w = (np.diff(edges)[:, None] * gw[None, :]).reshape(-1) / (b - a)
            cap = 2 * order - 1
        else:
            verts = polytope.vertex_array()
            xs, ws = [], []
            edges = np.linspace(0.0, 1.0, panels + 1)
            sub = (edges[:-1, None] + np.outer(np.diff(edges), g)).reshape(-1)
            subw = (np.diff(edges)[:, None] * gw[None, :]).reshape(-1)
            xi, eta = np.meshgrid(sub, sub, indexing="ij")
            wxi, weta = np.meshgrid(subw, subw, indexing="ij")
            for i in range(1, len(verts) - 1):
                A, B, C = verts[0], verts[i], verts[i + 1]
                area2 = abs((B[0] - A[0]) * (C[1] - A[1]) - (B[1] - A[1]) * (C[0] - A[0]))
                # Duffy map of the unit square onto triangle ABC, Jacobian area2 * xi
                pts = A + xi[..., None] * (B - A) + (xi * eta)[..., None] * (C - B)
                xs.append(pts.reshape(-1, 2))
                ws.append((wxi * weta * xi * area2).reshape(-1))
            x = np.concatenate(xs)
            w = np.concatenate(ws)
            w = w / w.sum()
            cap = 2 * order - 2
        theta = 2.0 * np.pi * np.arange(angular) / angular if angular else np.zeros(0)
        x.setflags(write=False)
        w.setflags(write=False)
        theta.setflags(write=False)
        return cls(polytope, x, w, theta, cap, order, panels)

    @classmethod
    def default(cls, variety: Variety, k: int, *, general: bool = False, panels: int | None = None) -> "QuadratureRule":
        kd = k * variety.degree
        if variety.n == 1:
            return cls.build(
                variety.polytope,
                order=max(24, kd // 2 + 12),
                panels=32 if panels is None else panels,
                angular=max(64, 4 * kd) if general else 0,
            )
        return cls.build(variety.polytope, order=max(12, kd // 2 + 4), panels=2 if panels is None else panels)

    @property
    def size(self) -> int:
        return len(self.w)


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


def guillemin_symbol(polytope: LatticePolytope) -> SymbolFunction:
    """Legendre dual of the Guillemin potential, evaluated by damped Newton.

    The returned symbol also exposes ``at_moment(x)`` which evaluates it at
    ``rho = grad u_G(x)`` without solving anything.
    """
    u = guillemin_potential(polytope)
    grad = guillemin_gradient(polytope)
    facets = [(np.array([float(a) for a in nv]), float(c)) for nv, c in polytope.facets()]
    center = polytope.vertex_array().mean(axis=0)

    def hess(x):
        h = np.zeros((len(x), polytope.dimension, polytope.dimension))
        for nv, c in facets:
            h += 0.5 * np.einsum("m,i,j->mij", 1.0 / (x @ nv - c), nv, nv)
        return h

    def inside(x):
        return np.all(np.stack([x @ nv - c for nv, c in facets]) > 0, axis=0)

    def func(r):
        x = np.tile(center, (len(r), 1))
        for _ in range(200):
            g = r - grad(x)
            step = np.linalg.solve(hess(x), g[..., None])[..., 0]
            t = np.ones(len(r))
            for _ in range(60):
                ok = inside(x + t[:, None] * step)
                if ok.all():
                    break
                t = np.where(ok, t, 0.5 * t)
            x = x + t[:, None] * step
            if np.max(np.abs(g)) < 1e-13 * (1 + np.max(np.abs(r))):
                break
        return np.sum(x * r, axis=1) - u(x)

    sym = SymbolFunction(func, polytope, name="guillemin")
    sym.at_moment = lambda x: np.sum(x * grad(x), axis=1) - u(x)
    return sym


class WeightFunction:
    """A continuous metric ``phi`` on ``L`` in chart coordinates.

    ``toric`` weights are ``phi(z) = psi(log|z_1|, ...)`` for a symbol ``psi``.
    ``general`` weights (P^1 only) are ``phi = phi_FS + relative(z)`` with a
    bounded continuous ``relative`` evaluated on complex arrays.
    """

    def __init__(
        self,
        variety: Variety,
        kind: str,
        *,
        symbol: SymbolFunction | None = None,
        relative: Callable[[np.ndarray], np.ndarray] | None = None,
        shift: float = 0.0,
        name: str = "weight",
    ):
        if kind not in ("toric", "general"):
            raise ValueError("weight kind must be 'toric' or 'general'")
        if kind == "general" and not (variety.kind == "proj" and variety.n == 1):
            raise ValueError("general (non-invariant) weights are supported on P^1 only")
        if kind == "toric" and symbol is None:
            raise ValueError("toric weights need a symbol")
        if kind == "toric" and symbol.polytope != variety.polytope:
            raise ValueError("symbol polytope differs from the variety's moment polytope")
        if kind == "general" and relative is None:
            raise ValueError("general weights need a relative potential")
        self.variety = variety
        self.kind = kind
        self.symbol = symbol
        self.relative = relative
        self.shift = float(shift)
        self.name = name
        self._rho = guillemin_gradient(variety.polytope)

    @classmethod
    def toric(cls, variety: Variety, symbol: SymbolFunction, *, shift: float = 0.0, name: str | None = None) -> "WeightFunction":
        return cls(variety, "toric", symbol=symbol, shift=shift, name=name or symbol.name)

    @classmethod
    def fubini_study(cls, variety: Variety, *, shift: float = 0.0) -> "WeightFunction":
        if variety.kind == "proj":
            sym = fubini_study_symbol(variety.n, variety.degree)
        else:
            sym = guillemin_symbol(variety.polytope)
        return cls(variety, "toric", symbol=sym, shift=shift, name="fs" if shift == 0 else f"fs{shift:+g}")

    @classmethod
    def general(cls, variety: Variety, relative, *, shift: float = 0.0, name: str = "general") -> "WeightFunction":
        return cls(variety, "general", relative=relative, shift=shift, name=name)

    def shifted(self, c: float) -> "WeightFunction":
        return WeightFunction(
            self.variety, self.kind, symbol=self.symbol, relative=self.relative,
            shift=self.shift + float(c), name=f"{self.name}{float(c):+g}",
        )

    def symbol_at(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(rho(x), psi(rho(x)) + shift)`` at moment-coordinate points."""
        rho = self._rho(x)
        if self.kind == "toric":
            if hasattr(self.symbol, "at_moment"):
                val = self.symbol.at_moment(x)
            else:
                val = self.symbol(rho)
        else:
            val = fubini_study_symbol(1, self.variety.degree)(rho)
        return rho, val + self.shift

    def boundedness(self, rule: QuadratureRule) -> float:
        """Estimate of ``sup |phi - phi_ref|`` over the rule's nodes (angular nodes for general weights)."""
        rho, val = self.symbol_at(rule.x)
        ref = np.sum(rule.x * rho, axis=1) - guillemin_potential(self.variety.polytope)(rule.x)
        gap = val - ref
        if self.kind == "general":
            theta = rule.theta if len(rule.theta) else np.array([0.0])
            z = np.exp(rho[:, 0])[:, None] * np.exp(1j * theta)[None, :]
            gap = gap[:, None] + np.asarray(self.relative(z), dtype=float)
        return float(np.max(np.abs(gap)))


# ---------------------------------------------------------------------------
# Gram systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GramSystem:
    """Gram matrix of a leaf-adapted basis under ``||s||^2 = int |s|^2 e^{-2k phi} omega^n``.

    ``log_diag`` holds ``log G_ii`` computed directly in log space; for
    diagonal systems it is the authoritative data. ``exact`` carries the
    exact rational diagonal when the system comes from a closed formula.
    """

    k: int
    basis: SectionBasis
    matrix: np.ndarray
    log_diag: np.ndarray
    diagonal: bool
    reference: str = REFERENCE_FORM
    exact: tuple[Fraction, ...] | None = None

    def hermitian_defect(self) -> float:
        g = self.matrix
        scale = np.sqrt(np.outer(np.abs(np.diag(g)), np.abs(np.diag(g))))
        return float(np.max(np.abs(g - g.conj().T) / scale))


def gram_exact_fs(k: int, variety: Variety) -> GramSystem:
    """Exact diagonal Gram of the monomial basis for Fubini-Study on P^1 or P^2 with O(1).

    ``||z^j||^2 = j! (k-j)! / (k+1)!`` on P^1 and
    ``||z^a||^2 = 2 a1! a2! (k-|a|)! / (k+2)!`` on P^2, both from Beta/Dirichlet integrals.
    """
    if k < 1:
        raise ValueError("degree k must be >= 1")
    if variety.kind != "proj" or variety.degree != 1:
        raise ValueError("exact Fubini-Study Gram is available for P^1 and P^2 with O(1) only")
    basis = section_basis(k, variety, FlagSpec.coordinate(variety.n))
    f = math.factorial
    if variety.n == 1:
        exact = tuple(Fraction(f(a[0]) * f(k - a[0]), f(k + 1)) for a in basis.valuations)
    else:
        exact = tuple(Fraction(2 * f(a[0]) * f(a[1]) * f(k - a[0] - a[1]), f(k + 2)) for a in basis.valuations)
    logd = np.array([math.log(q.numerator) - math.log(q.denominator) for q in exact])
    return GramSystem(k, basis, np.diag(np.exp(logd)), logd, True, exact=exact)


def _transform_matrix(basis: SectionBasis) -> np.ndarray:
    t = np.zeros((basis.size, basis.size))
    for i, row in enumerate(basis.transform):
        for j, c in row.items():
            t[i, j] = float(c)
    return t


def _monomial_log_norms(k: int, basis: SectionBasis, weight: WeightFunction, rule: QuadratureRule) -> np.ndarray:
    """``log ||z^m||^2`` for every chart monomial (torus-invariant weights)."""
    rho, psi = weight.symbol_at(rule.x)
    logw = np.log(rule.w)
    exps = np.array(basis.monomials, dtype=float)
    out = np.empty(len(exps))
    for s in range(0, len(exps), 64):
        e = exps[s : s + 64]
        out[s : s + 64] = logsumexp(2.0 * (e @ rho.T) - 2.0 * k * psi[None, :] + logw[None, :], axis=1)
    return out


def _general_gram(k: int, basis: SectionBasis, weight: WeightFunction, rule: QuadratureRule) -> np.ndarray:
    """Hermitian Gram of chart monomials ``z^a`` on P^1 for a non-invariant weight."""
    if not len(rule.theta):
        raise ValueError("general weights need a rule with angular nodes")
    rho, psi = weight.symbol_at(rule.x)
    a = np.array([m[0] for m in basis.monomials], dtype=float)
    r = rho[:, 0]
    half = a[:, None] * r[None, :] - k * psi[None, :]
    z = np.exp(r)[:, None] * np.exp(1j * rule.theta)[None, :]
    f = np.exp(-2.0 * k * np.asarray(weight.relative(z), dtype=float))
    # fhat[m, l] = mean_t f(m, t) exp(i l theta_t), by FFT along theta
    fhat = np.fft.ifft(f, axis=1)
    nb = len(a)
    if nb > len(rule.theta):
        raise ValueError("angular resolution below the number of basis monomials")
    e = np.exp(half) * np.sqrt(rule.w)[None, :]
    g = np.zeros((nb, nb), dtype=complex)
    for lag in range(nb):
        # upper triangle: G[b, b+lag] = int z^b zbar^(b+lag) ... picks exp(-i lag theta)
        vals = np.sum(e[: nb - lag] * e[lag:] * np.conj(fhat[:, lag])[None, :], axis=1)
        idx = np.arange(nb - lag)
        g[idx, idx + lag] = vals
        g[idx + lag, idx] = np.conj(vals)
    g[np.diag_indices(nb)] = g[np.diag_indices(nb)].real
    return g


def gram_matrix(k: int, basis: SectionBasis, weight: WeightFunction, rule: QuadratureRule | None = None) -> GramSystem:
    """Numerical Gram matrix of the ordered adapted basis by quadrature."""
    if k < 1 or basis.k != k:
        raise ValueError("basis degree does not match k")
    if rule is None:
        rule = QuadratureRule.default(weight.variety, k, general=weight.kind == "general")
    if weight.kind == "toric":
        lognorm = _monomial_log_norms(k, basis, weight, rule)
        if basis.is_monomial():
            logd = lognorm[list(basis.ordering())]
            return GramSystem(k, basis, np.diag(np.exp(logd)), logd, True)
        t = _transform_matrix(basis)
        g = (t * np.exp(lognorm)[None, :]) @ t.T
    else:
        gm = _general_gram(k, basis, weight, rule)
        t = _transform_matrix(basis)
        g = t @ gm @ t.T
        g = np.triu(g) + np.triu(g, 1).conj().T
    d = np.real(np.diag(g))
    if np.any(d <= 0):
        raise CholeskyBreakdown(int(np.flatnonzero(d <= 0)[0]), float(d.min()))
    return GramSystem(k, basis, g, np.log(d), False)


# ---------------------------------------------------------------------------
# Chebyshev levels and transform
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChebyshevLevel:
    """Values ``(1/k) log inf_{s in [z^{k alpha}]} ||s||_{k phi}`` keyed by graded point."""

    k: int
    points: tuple[tuple[int, ...], ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if len(vals) != len(self.points):
            raise ValueError("one value per graded point is required")
        if not np.all(np.isfinite(vals)):
            raise ValueError("Chebyshev level values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def normalized_points(self) -> list[tuple[Fraction, ...]]:
        return [tuple(Fraction(a, self.k) for a in p) for p in self.points]

    def as_dict(self) -> dict:
        return dict(zip(self.points, self.values.tolist()))

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        n = len(self.points[0])
        if header:
            writer.writerow(["k"] + [f"alpha{i + 1}" for i in range(n)] + ["value"])
        for p, v in zip(self.points, self.values):
            writer.writerow([self.k, *p, repr(float(v))])
        return buf.getvalue()


def _cholesky_log_pivots(g: np.ndarray) -> np.ndarray:
    """``log L_ii`` of ``G = L L^*`` after symmetric diagonal scaling."""
    d = np.real(np.diag(g)).copy()
    s = 1.0 / np.sqrt(d)
    a = g * s[:, None] * s[None, :]
    n = len(a)
    low = np.zeros_like(a)
    logp = np.empty(n)
    for i in range(n):
        row = low[i, :i]
        piv = np.real(a[i, i] - np.vdot(row, row))
        if not piv > 0:
            raise CholeskyBreakdown(i, float(piv))
        lii = math.sqrt(piv)
        low[i, i] = lii
        if i + 1 < n:
            low[i + 1 :, i] = (a[i + 1 :, i] - low[i + 1 :, :i] @ row.conj()) / lii
        logp[i] = math.log(lii)
    return logp + 0.5 * np.log(d)


def chebyshev_level(g: GramSystem) -> ChebyshevLevel:
    """Cholesky pivots in decreasing-valuation order give every ``c_k`` value at once.

    ``L_ii`` is the distance from the ``i``-th adapted section to the span of
    the sections of strictly higher valuation, which is the minimum norm over
    its monic class.
    """
    vals = g.basis.valuations
    if any(not a > b for a, b in zip(vals, vals[1:])):
        raise ValueError("basis must be ordered by strictly decreasing valuation")
    if g.diagonal:
        logp = 0.5 * g.log_diag
    else:
        logp = _cholesky_log_pivots(g.matrix)
    return ChebyshevLevel(g.k, tuple(vals), logp / g.k)


def chebyshev_levels(
    ks: Sequence[int],
    weight: WeightFunction,
    flag: FlagSpec | None = None,
    *,
    rules: dict | None = None,
    threads: int = 1,
) -> list[ChebyshevLevel]:
    """``chebyshev_level`` for each degree in ``ks`` (independent, optionally threaded)."""
    variety = weight.variety
    flag = flag or FlagSpec.coordinate(variety.n)

    def one(k):
        rule = (rules or {}).get(k)
        return chebyshev_level(gram_matrix(k, section_basis(k, variety, flag), weight, rule))

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, ks))
    return [one(k) for k in ks]


def chebyshev_transform(levels: Sequence[ChebyshevLevel], body: LatticePolytope, target: Grid) -> ConvexGridFunction:
    """Lower convex hull of all points ``(alpha / k, c_k(alpha))`` on ``target``."""
    if not levels:
        raise ValueError("at least one Chebyshev level is required")
    xs, vs = [], []
    for lev in levels:
        for p, v in zip(lev.normalized_points(), lev.values):
            if not body.contains_exact(p):
                raise ValueError(f"normalized point {tuple(map(str, p))} at k={lev.k} lies outside the body")
            xs.append(p)
            vs.append(v)
    return lower_convex_hull(xs, vs, target)


@dataclass
class ConvergenceProfile:
    """Per-node least-squares fit ``c_k(x) ~ a(x) + b(x) log(k) / k``."""

    ks: tuple[int, ...]
    grid: Grid
    samples: np.ndarray  # (len(ks), nodes)
    a: np.ndarray
    b: np.ndarray
    residual: float
    nonmonotone: np.ndarray
    sup_errors: list[float] | None = None
    extrapolated_error: float | None = None
    warnings: list[str] = field(default_factory=list)


def convergence_profile(
    levels: Sequence[ChebyshevLevel],
    grid: Grid,
    reference: ConvexGridFunction | None = None,
    *,
    mask: np.ndarray | None = None,
) -> ConvergenceProfile:
    """Fit ``a + b log k / k`` per grid node to single-level hulls along a k-ladder."""
    if len(levels) < 3:
        raise ValueError("convergence profile needs a ladder of at least three k values")
    ks = tuple(lev.k for lev in levels)
    samples = np.array([LowerHull(lev.normalized_points(), lev.values)(grid.nodes) for lev in levels])
    kk = np.array(ks, dtype=float)
    design = np.column_stack([np.ones_like(kk), np.log(kk) / kk])
    coef, *_ = np.linalg.lstsq(design, samples, rcond=None)
    fitted = design @ coef
    residual = float(np.max(np.abs(fitted - samples)))
    d = np.diff(samples, axis=0)
    nonmono = np.any(d > 0, axis=0) & np.any(d < 0, axis=0)
    notes = []
    if nonmono.any():
        msg = f"non-monotone c_k sequence at {int(nonmono.sum())} node(s)"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    prof = ConvergenceProfile(ks, grid, samples, coef[0], coef[1], residual, nonmono, warnings=notes)
    if reference is not None:
        if reference.grid != grid:
            raise ValueError("reference lives on a different grid")
        sel = np.ones(grid.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        prof.sup_errors = [float(np.max(np.abs(s - reference.values)[sel])) for s in samples]
        prof.extrapolated_error = float(np.max(np.abs(coef[0] - reference.values)[sel]))
    return prof
