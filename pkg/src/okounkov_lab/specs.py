"""String specs for weights, symbols and convex duals used by configs and the CLI.

Weights (metrics fed to the Chebyshev pipeline):

* ``fs``, ``fs+0.7``   Fubini-Study (Guillemin metric on toric surfaces), optional shift
* ``quadratic[+c]``    toric metric whose dual is ``|x|^2 / 2``
* ``support[+c]``      the support function of the body (non-smooth, bounded)
* ``perturbed:eps``    ``phi_FS + eps Re(z) / (1 + |z|^2)`` on P^1 (not torus-invariant)

Duals (convex functions on the body, for model-geometry experiments):

* ``zero``, ``const:c``, ``linear``, ``centered``, ``quadratic``,
  ``fs`` (the Guillemin potential, which is the Fubini-Study dual in degree one),
  ``hinge:a`` (``max(0, x1 - a)``), each optionally followed by ``+c``.
"""
from __future__ import annotations

import numpy as np

from .convexlab import (
    ConvexGridFunction,
    Grid,
    LatticePolytope,
    SymbolFunction,
    guillemin_potential,
    legendre_back,
    support_symbol,
)
from .hermitian import WeightFunction, guillemin_symbol
from .okounkov import Variety

__all__ = ["parse_weight", "parse_symbol", "parse_dual", "SpecError"]


class SpecError(ValueError):
    pass


def _split(spec: str) -> tuple[str, float]:
    """``"fs+0.7" -> ("fs", 0.7)``; negative shifts are written ``+-0.7``."""
    spec = spec.strip()
    head, sep, tail = spec.rpartition("+")
    if sep and head and not head[-1] in "eE:":
        try:
            return head, float(tail)
        except ValueError:
            pass
    if not spec:
        raise SpecError("empty spec")
    return spec, 0.0


def _quadratic_symbol(polytope: LatticePolytope) -> SymbolFunction:
    """Legendre dual of ``|x|^2 / 2``; closed form on an interval."""
    if polytope.dimension == 1:
        a, b = (float(v[0]) for v in polytope.vertices)
        lo, hi = min(a, b), max(a, b)

        def func(r):
            x = np.clip(r[:, 0], lo, hi)
            return r[:, 0] * x - 0.5 * x * x

        return SymbolFunction(func, polytope, name="quadratic")
    grid = Grid(polytope, 64)
    u = ConvexGridFunction.from_callable(grid, lambda x: 0.5 * np.sum(x * x, axis=1))
    sym = legendre_back(u)
    return SymbolFunction(sym.func, polytope, name="quadratic")


def parse_symbol(spec: str, variety: Variety) -> SymbolFunction:
    head, shift = _split(spec)
    if head == "fs":
        sym = WeightFunction.fubini_study(variety).symbol
    elif head == "guillemin":
        sym = guillemin_symbol(variety.polytope)
    elif head == "quadratic":
        sym = _quadratic_symbol(variety.polytope)
    elif head == "support":
        sym = support_symbol(variety.polytope)
    else:
        raise SpecError(f"unknown symbol spec {spec!r}")
    return sym.shifted(shift) if shift else sym


def parse_weight(spec: str, variety: Variety) -> WeightFunction:
    head, shift = _split(spec)
    if head.startswith("perturbed:"):
        eps = float(head.split(":", 1)[1])

        def relative(z):
            return eps * z.real / (1.0 + np.abs(z) ** 2)

        return WeightFunction.general(variety, relative, shift=shift, name=f"perturbed:{eps:g}")
    if head == "fs":
        return WeightFunction.fubini_study(variety, shift=shift)
    return WeightFunction.toric(variety, parse_symbol(head, variety), shift=shift)


def parse_dual(spec: str, grid: Grid) -> ConvexGridFunction:
    head, shift = _split(spec)
    x = grid.nodes
    poly = grid.polytope
    name, _, arg = head.partition(":")
    if name == "zero":
        vals = np.zeros(grid.size)
    elif name == "const":
        vals = np.full(grid.size, float(arg))
    elif name == "linear":
        vals = x[:, 0].copy()
    elif name == "centered":
        centroid = np.sum(grid.weights[:, None] * x, axis=0) / grid.volume
        vals = x[:, 0] - centroid[0]
    elif name == "quadratic":
        vals = 0.5 * np.sum(x * x, axis=1)
    elif name == "fs":
        vals = guillemin_potential(poly)(x)
    elif name == "hinge":
        vals = np.maximum(0.0, x[:, 0] - float(arg))
    else:
        raise SpecError(f"unknown dual spec {spec!r}")
    return ConvexGridFunction(grid, vals + shift)
