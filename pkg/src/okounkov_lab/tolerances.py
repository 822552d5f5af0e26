"""Tolerance table shipped with the artifact version.

Runs record raw residuals. The verdict is always computed against this
table, never against a number stored in a config or a report.
"""
from __future__ import annotations

import math

TOLERANCE_VERSION = "2026.1"

# (experiment, check name) -> (operator, bound)
TABLE: dict[tuple[str, str], tuple[str, float]] = {
    ("body", "volume_mismatches"): ("==", 0),
    ("body", "leaf_mismatches"): ("==", 0),
    ("body", "expected_mismatches"): ("==", 0),
    ("chebyshev", "gram_rel_err"): ("<=", 1e-10),
    ("chebyshev", "golden_err"): ("<=", 1e-12),
    ("chebyshev", "sup_err_k64"): ("<=", 0.06),
    ("chebyshev", "sup_err_decreasing"): ("==", 1),
    ("chebyshev", "extrapolated_err"): ("<=", 5e-3),
    ("chebyshev", "translation_err"): ("<=", 1e-12),
    ("chebyshev", "transform_convexity"): ("<=", 1e-9),
    ("geodesic", "linearity"): ("<=", 1e-12),
    ("geodesic", "finsler_err"): ("<=", 1e-3),
    ("geodesic", "reparam_finsler_err"): ("<=", 1e-3),
    ("busemann", "busemann_min"): (">=", -1e-9),
    ("busemann", "cat0_gap"): ("abs<=", 1e-9),
    ("busemann", "pythagoras_err"): ("<=", 1e-12),
    ("d1demo", "unit_speed"): ("<=", 1e-9),
    ("d1demo", "hinge_mass_err"): ("<=", 1e-12),
    ("d1demo", "separation"): (">=", 0.03),
    ("d1demo", "hinge_symmetry_defect"): (">", 0),
    ("d1demo", "mabuchi_symmetry_defect"): ("==", 0),
    ("d1demo", "mabuchi_selects_linear"): ("==", 1),
    ("d1demo", "rooftop_identity_err"): ("<=", 1e-12),
    ("flatness", "affinity_extrapolated"): ("<=", 1e-2),
    ("flatness", "affinity_translation"): ("<=", 1e-12),
    ("flatness", "linearity"): ("<=", 1e-12),
    ("flatness", "busemann_min"): (">=", -1e-9),
    ("flatness", "cat0_gap"): ("abs<=", 1e-9),
    ("flatness", "separator_gap_min"): (">=", 1e-6),
    ("flatness", "separator_affinity"): ("<=", 1e-12),
    ("flatness", "separator_failures"): ("==", 0),
}

# acceptance labels attached to checks when a config runs in acceptance mode
CRITERIA: dict[tuple[str, str], str] = {
    ("body", "volume_mismatches"): "AC1",
    ("body", "leaf_mismatches"): "AC1",
    ("body", "expected_mismatches"): "AC1",
    ("chebyshev", "gram_rel_err"): "AC2",
    ("chebyshev", "golden_err"): "AC3",
    ("chebyshev", "sup_err_k64"): "AC3",
    ("chebyshev", "sup_err_decreasing"): "AC3",
    ("chebyshev", "extrapolated_err"): "AC3",
    ("chebyshev", "translation_err"): "AC4",
    ("flatness", "affinity_extrapolated"): "AC5",
    ("flatness", "affinity_translation"): "AC5",
    ("geodesic", "linearity"): "AC6",
    ("geodesic", "finsler_err"): "AC6",
    ("geodesic", "reparam_finsler_err"): "AC6",
    ("busemann", "busemann_min"): "AC6",
    ("busemann", "cat0_gap"): "AC6",
    ("busemann", "pythagoras_err"): "AC6",
    ("d1demo", "unit_speed"): "AC7",
    ("d1demo", "hinge_mass_err"): "AC7",
    ("d1demo", "separation"): "AC7",
    ("d1demo", "hinge_symmetry_defect"): "AC7",
    ("d1demo", "mabuchi_symmetry_defect"): "AC7",
    ("d1demo", "mabuchi_selects_linear"): "AC7",
    ("flatness", "separator_gap_min"): "AC8",
    ("flatness", "separator_affinity"): "AC8",
    ("flatness", "separator_failures"): "AC8",
}


def bound_for(experiment: str) -> dict[str, list]:
    """Table rows for one experiment, in a JSON-friendly form."""
    return {name: [op, b] for (exp, name), (op, b) in sorted(TABLE.items()) if exp == experiment}


def satisfied(op: str, value, bound) -> bool:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return False
    if op == "<=":
        return value <= bound
    if op == ">=":
        return value >= bound
    if op == ">":
        return value > bound
    if op == "==":
        return value == bound
    if op == "abs<=":
        return abs(value) <= bound
    raise ValueError(f"unknown comparison {op!r}")


def evaluate(check: dict) -> tuple[bool, str]:
    """``(ok, message)`` for one recorded check ``{experiment, name, value}``."""
    key = (check.get("experiment"), check.get("name"))
    if key not in TABLE:
        return False, f"{key[0]}.{key[1]}: no tolerance in table {TOLERANCE_VERSION}"
    op, bound = TABLE[key]
    ok = satisfied(op, check.get("value"), bound)
    return ok, f"{key[1]}={check.get('value')!r} {'meets' if ok else 'violates'} {op} {bound!r}"
