"""Experiment pipelines behind the CLI subcommands.

A pipeline computes everything in memory and returns an ``Outcome``; the
runner in ``cli`` is the only writer. Checks carry raw residuals and are
judged against ``tolerances.TABLE``.
"""
from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import plotting
from .config import ExperimentConfig
from .convexlab import (
    ConvexGridFunction,
    Grid,
    LatticePolytope,
    LowerHull,
    convexity_residual,
    guillemin_potential,
    legendre_transform,
)
from .hermitian import (
    chebyshev_level,
    chebyshev_transform,
    convergence_profile,
    gram_exact_fs,
    gram_matrix,
)
from .mabuchi import (
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
from .okounkov import (
    FlagSpec,
    Variety,
    body_volume_check,
    enumerate_graded_points,
    graded_points_csv,
    okounkov_body,
    section_basis,
)
from .specs import parse_dual, parse_symbol, parse_weight
from .tolerances import CRITERIA

__all__ = ["Outcome", "PIPELINES", "execute"]


@dataclass
class Outcome:
    report: dict
    tables: dict[str, str] = field(default_factory=dict)
    documents: dict[str, dict] = field(default_factory=dict)
    checks: list[dict] = field(default_factory=list)
    figures: list[tuple[str, Callable[[str], None]]] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


class _Recorder:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.checks: list[dict] = []
        self.timings: dict[str, float] = {}

    def check(self, name: str, value) -> None:
        if isinstance(value, (bool, np.bool_)):
            value = int(value)
        elif isinstance(value, (np.floating, np.integer)):
            value = value.item()
        crit = CRITERIA.get((self.cfg.kind, name)) if self.cfg.acceptance else None
        self.checks.append({"criterion": crit, "experiment": self.cfg.kind, "name": name, "value": value})

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def outcome(self, report, **kw) -> Outcome:
        return Outcome(report, checks=self.checks, timings=self.timings, **kw)


def _variety_and_flag(spec: str, flag_spec, seed: int) -> tuple[Variety, FlagSpec]:
    variety = Variety.parse(spec)
    # torus-invariant metrics are only invariant under affine coordinate changes on toric charts
    flag = FlagSpec.parse(flag_spec, variety.n, seed=seed, affine=variety.kind == "toric")
    return variety, flag


def _pmap(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# ---------------------------------------------------------------------------
# body
# ---------------------------------------------------------------------------


def run_body(cfg: ExperimentConfig) -> Outcome:
    rec = _Recorder(cfg)
    cases, tables, figures = [], {}, []
    vol_bad = leaf_bad = expect_bad = 0
    for i, case in enumerate(cfg.get("cases")):
        with rec.stage(f"case{i}"):
            variety, flag = _variety_and_flag(case["variety"], case["flag"], cfg.seed)
            kmax = case["kmax"]
            by_k = {k: enumerate_graded_points(k, variety, flag) for k in range(1, kmax + 1)}
            body = okounkov_body(variety, flag, kmax)
            vol, expected = body_volume_check(variety, body)
        sizes = {str(k): len(pts) for k, pts in by_k.items()}
        leaf = [k for k, pts in by_k.items() if len(set(pts)) != variety.h0(k)]
        vol_bad += vol != expected
        leaf_bad += len(leaf)
        entry = {
            "variety": case["variety"],
            "flag": flag.to_json(),
            "kmax": kmax,
            "body": body.to_json(),
            "volume": str(vol),
            "expected_volume": str(expected),
            "graded_sizes": sizes,
            "leaf_failures": leaf,
        }
        if "expect" in case:
            want = LatticePolytope.from_points(case["expect"])
            entry["matches_expected"] = want == body
            expect_bad += want != body
        cases.append(entry)
        tables[f"graded_points_{i}.csv"] = graded_points_csv(by_k)
        figures.append((f"body_{i}", _bind(plotting.plot_body, body, by_k, case["variety"])))
    rec.check("volume_mismatches", vol_bad)
    rec.check("leaf_mismatches", leaf_bad)
    rec.check("expected_mismatches", expect_bad)
    return rec.outcome({"cases": cases}, tables=tables, figures=figures)


def _bind(fn, *args):
    return lambda path: fn(path, *args)


# ---------------------------------------------------------------------------
# chebyshev
# ---------------------------------------------------------------------------


def _interior_mask(grid: Grid, window) -> np.ndarray:
    lo, hi = window
    x = grid.nodes
    if grid.dimension == 1:
        return (x[:, 0] >= lo - 1e-12) & (x[:, 0] <= hi + 1e-12)
    ell = np.min(
        [x @ np.array([float(c) for c in nv]) - float(c0) for nv, c0 in grid.polytope.facets()], axis=0
    )
    return ell >= lo - 1e-12


def _reference_dual(weight, variety: Variety, grid: Grid, spec_head: str):
    """Closed-form or numerical Legendre dual of a torus-invariant weight's symbol."""
    if weight.kind != "toric":
        return None
    if spec_head == "fs":
        vals = guillemin_potential(variety.polytope)(grid.nodes)
        if variety.kind == "proj":
            vals = vals - 0.5 * variety.degree * math.log(variety.degree)
        return ConvexGridFunction(grid, vals - weight.shift)
    u = legendre_transform(weight.symbol, grid)
    return ConvexGridFunction(grid, u.values - weight.shift)


def _gram_relative_error(k: int, variety: Variety, flag: FlagSpec, weight) -> float:
    exact = gram_exact_fs(k, variety)
    numeric = gram_matrix(k, section_basis(k, variety, flag), weight)
    return float(np.max(np.abs(np.expm1(numeric.log_diag - exact.log_diag))))


def run_chebyshev(cfg: ExperimentConfig) -> Outcome:
    rec = _Recorder(cfg)
    variety, flag = _variety_and_flag(cfg.get("variety"), cfg.get("flag"), cfg.seed)
    weight = parse_weight(cfg.get("weight"), variety)
    head = cfg.get("weight").split("+")[0]
    ks = list(cfg.get("kladder"))
    threads = cfg.threads

    def level(w):
        return lambda k: chebyshev_level(gram_matrix(k, section_basis(k, variety, flag), w))

    with rec.stage("levels"):
        levels = _pmap(level(weight), ks, threads)
    with rec.stage("transform"):
        body = okounkov_body(variety, flag, 2)
        res = cfg.get("resolution") or (512 if variety.n == 1 else 32)
        grid = Grid(body, res)
        transform = chebyshev_transform(levels, body, grid)
        rec.check("transform_convexity", convexity_residual(transform))

    exact_fs = (
        variety.kind == "proj" and variety.degree == 1 and weight.kind == "toric"
        and head == "fs" and weight.shift == 0 and flag.is_coordinate()
    )
    if cfg.get("gram_check") and exact_fs:
        with rec.stage("gram_check"):
            errs = _pmap(lambda k: _gram_relative_error(k, variety, flag, weight), ks, threads)
        rec.check("gram_rel_err", max(errs))
    if exact_fs and variety.n == 1 and 64 in ks:
        lev = levels[ks.index(64)]
        golden = (2 * math.log(math.factorial(32)) - math.log(math.factorial(65))) / 128
        rec.check("golden_err", abs(lev.as_dict()[(32,)] - golden))

    convergence = {"ks": ks}
    reference = None
    if flag.is_coordinate():
        with rec.stage("reference"):
            reference = _reference_dual(weight, variety, grid, head)
    mask = _interior_mask(grid, cfg.get("window"))
    if len(ks) >= 3:
        with rec.stage("convergence"):
            prof = convergence_profile(levels, grid, reference, mask=mask)
        convergence.update(
            {
                "fit_residual": prof.residual,
                "nonmonotone_nodes": int(prof.nonmonotone.sum()),
                "warnings": prof.warnings,
                "window": cfg.get("window"),
            }
        )
        if reference is not None:
            convergence["sup_errors"] = dict(zip(map(str, ks), prof.sup_errors))
            convergence["extrapolated_error"] = prof.extrapolated_error
            if 64 in ks:
                rec.check("sup_err_k64", prof.sup_errors[ks.index(64)])
            rec.check("sup_err_decreasing", all(a > b for a, b in zip(prof.sup_errors, prof.sup_errors[1:])))
            rec.check("extrapolated_err", prof.extrapolated_error)

    if cfg.get("translation") is not None:
        c = float(cfg.get("translation"))
        with rec.stage("translation"):
            shifted = _pmap(level(weight.shifted(c)), ks, threads)
        err = max(float(np.max(np.abs(b.values - (a.values - c)))) for a, b in zip(levels, shifted))
        convergence["translation"] = {"shift": c, "max_error": err}
        rec.check("translation_err", err)

    table = "".join(lev.to_csv(header=i == 0) for i, lev in enumerate(levels))
    report = {
        "variety": cfg.get("variety"),
        "flag": flag.to_json(),
        "weight": weight.name,
        "kladder": ks,
        "body": body.to_json(),
        "levels": {str(lev.k): len(lev.points) for lev in levels},
    }
    figures = []
    if grid.dimension == 1:
        samples = [LowerHull(lev.normalized_points(), lev.values)(grid.nodes) for lev in levels]
        figures.append(("chebyshev_levels", _bind(plotting.plot_levels, grid.nodes[:, 0], ks, samples, reference)))
    if "sup_errors" in convergence:
        figures.append(("convergence", _bind(plotting.plot_convergence, ks, [convergence["sup_errors"][str(k)] for k in ks])))
    return rec.outcome(
        report,
        tables={"cheb.csv": table},
        documents={"convergence.json": convergence, "transform.json": transform.to_json()},
        figures=figures,
    )


# ---------------------------------------------------------------------------
# geodesic, busemann, d1demo: model geometry
# ---------------------------------------------------------------------------


def _model_grid(cfg: ExperimentConfig) -> Grid:
    return Grid(Variety.parse(cfg.get("body")).polytope, cfg.get("resolution"))


def run_geodesic(cfg: ExperimentConfig) -> Outcome:
    rec = _Recorder(cfg)
    grid = _model_grid(cfg)
    ps = cfg.get("ps")
    ts = np.linspace(0.0, 1.0, cfg.get("samples"))
    rows = ["pair,p,t,distance"]
    results, curves = [], {}
    lin_worst = fin_worst = rep_worst = 0.0
    with rec.stage("geodesics"):
        for pair in cfg.get("pairs"):
            u0, u1 = parse_dual(pair["u0"], grid), parse_dual(pair["u1"], grid)
            path = mabuchi_geodesic(u0, u1)
            slow = path.reparametrized(lambda t: t * t)
            states = [path.at(t) for t in ts]
            entry = {"id": pair["id"], "distance": {}, "linearity": {}, "finsler_error": {}, "reparam_finsler_error": {}}
            for p in ps:
                total = model_distance(u0, u1, p)
                worst = 0.0
                for i, s in enumerate(ts):
                    for j in range(i + 1, len(ts)):
                        worst = max(worst, abs(model_distance(states[i], states[j], p) - (ts[j] - s) * total))
                fin = abs(finsler_length(path, p, cfg.get("finsler_samples")) - total)
                rep = abs(finsler_length(slow, p, cfg.get("finsler_samples")) - total)
                key = f"{p:g}"
                entry["distance"][key] = total
                entry["linearity"][key] = worst
                entry["finsler_error"][key] = fin
                entry["reparam_finsler_error"][key] = rep
                lin_worst, fin_worst, rep_worst = max(lin_worst, worst), max(fin_worst, fin), max(rep_worst, rep)
                dist = [model_distance(u0, st, p) for st in states]
                curves[(pair["id"], key)] = dist
                rows.extend(f"{pair['id']},{key},{t!r},{d!r}" for t, d in zip(ts.tolist(), dist))
            results.append(entry)
    rec.check("linearity", lin_worst)
    rec.check("finsler_err", fin_worst)
    rec.check("reparam_finsler_err", rep_worst)
    return rec.outcome(
        {"body": cfg.get("body"), "resolution": grid.resolution, "pairs": results},
        tables={"distances.csv": "\n".join(rows) + "\n"},
        figures=[("distances", _bind(plotting.plot_distances, ts, curves))],
    )


def run_busemann(cfg: ExperimentConfig) -> Outcome:
    rec = _Recorder(cfg)
    grid = _model_grid(cfg)
    ps = cfg.get("ps")
    samples = cfg.get("samples")
    dual = lambda s: parse_dual(s, grid)  # noqa: E731
    geo_rows, tri_rows = ["id,p,min_second_difference"], ["id,cat0_gap,pythagoras_error"]
    geo_out, tri_out, curves = [], [], {}
    bmin, cat_worst, pyth_worst = math.inf, 0.0, 0.0
    ts = np.linspace(0.0, 1.0, samples)
    with rec.stage("busemann"):
        for g in cfg.get("geodesics", []):
            a = mabuchi_geodesic(dual(g["a0"]), dual(g["a1"]))
            b = mabuchi_geodesic(dual(g["b0"]), dual(g["b1"]))
            mins = {}
            for p in ps:
                m = busemann_test(a, b, p, samples)
                mins[f"{p:g}"] = m
                bmin = min(bmin, m)
                geo_rows.append(f"{g['id']},{p:g},{m!r}")
            curves[(g["id"], "2")] = [model_distance(a.at(t), b.at(t), 2) for t in ts]
            geo_out.append({"id": g["id"], "min_second_difference": mins})
    with rec.stage("cat0"):
        for tri in cfg.get("triangles", []):
            verts = {v: dual(tri[v]) for v in "abc"}
            gap = cat0_flatness_test(verts["a"], verts["b"], verts["c"], 2)
            cat_worst = max(cat_worst, abs(gap))
            entry = {"id": tri["id"], "cat0_gap": gap}
            if "right_angle_at" in tri:
                v = tri["right_angle_at"]
                o1, o2 = (w for w in "abc" if w != v)
                d = lambda x, y: model_distance(verts[x], verts[y], 2)  # noqa: E731
                err = abs(d(o1, o2) ** 2 - d(v, o1) ** 2 - d(v, o2) ** 2)
                entry["pythagoras_error"] = err
                pyth_worst = max(pyth_worst, err)
            tri_rows.append(f"{tri['id']},{gap!r},{entry.get('pythagoras_error', '')!r}".replace("''", ""))
            tri_out.append(entry)
    if cfg.get("geodesics"):
        rec.check("busemann_min", bmin)
    if cfg.get("triangles"):
        rec.check("cat0_gap", cat_worst)
        if any("right_angle_at" in t for t in cfg.get("triangles")):
            rec.check("pythagoras_err", pyth_worst)
    return rec.outcome(
        {"body": cfg.get("body"), "resolution": grid.resolution, "geodesics": geo_out, "triangles": tri_out},
        tables={"busemann.csv": "\n".join(geo_rows) + "\n", "triangles.csv": "\n".join(tri_rows) + "\n"},
        figures=[("busemann_distances", _bind(plotting.plot_distances, ts, curves))] if curves else [],
    )


def run_d1demo(cfg: ExperimentConfig) -> Outcome:
    rec = _Recorder(cfg)
    grid = Grid(LatticePolytope.interval(0, 1), cfg.get("resolution"))
    ts = [float(t) for t in cfg.get("ts")]
    hinge = d1_alternative_geodesic(grid)
    u0, u1 = hinge.u0, hinge.u1
    lin = mabuchi_geodesic(u0, u1)
    with rec.stage("hinge"):
        hinge_check = bicombing_check(hinge_selector, [(u0, u1)], p=1, ts=ts)
        masses = [float(np.sum(grid.weights * hinge.at(t).values) / grid.volume) for t in ts]
        mass_err = max(abs(m - t / 2) for m, t in zip(masses, ts))
        st = cfg.get("separation_t")
        separation = model_distance(hinge.at(st), lin.at(st), 1)
    with rec.stage("mabuchi"):
        extra = [(parse_dual("fs", grid), parse_dual("quadratic", grid)), (u0, parse_dual("hinge:0.5", grid))]
        mab_check = bicombing_check(mabuchi_selector, [(u0, u1)] + extra, p=1, ts=ts)
        roof = 0.0
        for a, b in [(u0, u1)] + extra:
            *_, d1 = energy_and_rooftop(a, b)
            roof = max(roof, abs(d1 - model_distance(a, b, 1)))
    rec.check("unit_speed", hinge_check["unit_speed_residual"])
    rec.check("hinge_mass_err", mass_err)
    rec.check("separation", separation)
    rec.check("hinge_symmetry_defect", hinge_check["symmetry_defect"])
    rec.check("mabuchi_symmetry_defect", mab_check["symmetry_defect"])
    rec.check("mabuchi_selects_linear", bool(mab_check["selects_linear"]))
    rec.check("rooftop_identity_err", roof)
    rows = ["t,hinge_mass,d1_hinge_linear"]
    rows.extend(f"{t!r},{m!r},{model_distance(hinge.at(t), lin.at(t), 1)!r}" for t, m in zip(ts, masses))
    report = {
        "resolution": grid.resolution,
        "ts": ts,
        "hinge": hinge_check,
        "mabuchi": mab_check,
        "separation": {"t": st, "d1": separation},
    }
    x = grid.nodes[:, 0]
    profiles = {t: (hinge.at(t).values, lin.at(t).values) for t in ts}
    return rec.outcome(
        report,
        tables={"hinge.csv": "\n".join(rows) + "\n"},
        figures=[("hinge_vs_linear", _bind(plotting.plot_hinge, x, profiles))],
    )


# ---------------------------------------------------------------------------
# flatness
# ---------------------------------------------------------------------------


def _random_convex(grid: Grid, rng: np.random.Generator) -> ConvexGridFunction:
    """Max of three random affine functions plus a random multiple of ``|x|^2``."""
    x = grid.nodes
    slopes = rng.normal(size=(3, grid.dimension))
    offsets = rng.normal(scale=0.3, size=3)
    vals = np.max(x @ slopes.T + offsets[None, :], axis=1) + rng.uniform() * np.sum(x * x, axis=1)
    return ConvexGridFunction(grid, vals)


def run_flatness(cfg: ExperimentConfig) -> Outcome:
    rec = _Recorder(cfg)
    variety, flag = _variety_and_flag(cfg.get("variety"), cfg.get("flag"), cfg.seed)
    ks = list(cfg.get("kladder"))
    ts = [float(t) for t in cfg.get("ts")]
    report: dict = {"variety": cfg.get("variety"), "flag": flag.to_json()}
    tables, figures = {}, []
    pairs = cfg.get("pairs") or []
    if pairs:
        symbols = [(p["id"], parse_symbol(p["psi0"], variety), parse_symbol(p["psi1"], variety)) for p in pairs]
        with rec.stage("certify"):
            fr = certify_flatness(
                symbols, variety, flag, ks, ts, tuple(cfg.get("ps")),
                resolution=cfg.get("resolution"), distance_samples=cfg.get("distance_samples"), threads=cfg.threads,
            )
        report["certificate"] = fr.to_json()
        tables["flatness.csv"] = fr.to_csv()
        moving = [p for p in fr.pairs if not p["translation"]]
        trans = [p for p in fr.pairs if p["translation"]]
        if moving:
            rec.check("affinity_extrapolated", max(p["affinity"]["extrapolated"] for p in moving))
        if trans:
            rec.check("affinity_translation", max(max(p["affinity"]["per_k"].values()) for p in trans))
        rec.check("linearity", max(max(p["linearity"].values()) for p in fr.pairs))
        rec.check("busemann_min", min(p["busemann_min"] for p in fr.pairs))
        rec.check("cat0_gap", max((p["cat0_gap"] for p in fr.pairs), key=abs))
        per_k = {p["id"]: [p["affinity"]["per_k"][str(k)] for k in ks] for p in moving}
        if per_k:
            figures.append(("affinity", _bind(plotting.plot_affinity, ks, per_k)))

    rp = cfg.get("random_pairs")
    if rp and rp["count"] > 0:
        poly = Variety.parse(rp.get("body", cfg.get("variety"))).polytope
        grid = Grid(poly, rp.get("resolution", 256))
        rng = np.random.default_rng(cfg.seed)
        dense = np.linspace(0.0, 1.0, 41)
        rows, gaps, affs, failures = ["pair,density,gap,affinity"], [], [], 0
        with rec.stage("separators"):
            for i in range(rp["count"]):
                u0, u1 = _random_convex(grid, rng), _random_convex(grid, rng)
                try:
                    sep = separator_search(u0, u1)
                except NotSeparated:
                    failures += 1
                    rows.append(f"{i},,,")
                    continue
                aff = _separator_affinity(sep, mabuchi_geodesic(u0, u1), dense)
                gaps.append(sep.gap)
                affs.append(aff)
                rows.append(f"{i},{sep.density_id},{sep.gap!r},{aff!r}")
        report["separators"] = {"count": rp["count"], "gaps": gaps, "affinities": affs, "failures": failures}
        tables["separators.csv"] = "\n".join(rows) + "\n"
        rec.check("separator_gap_min", min(gaps) if gaps else None)
        rec.check("separator_affinity", max(affs) if affs else None)
        rec.check("separator_failures", failures)
    return rec.outcome(report, tables=tables, figures=figures)


PIPELINES = {
    "body": run_body,
    "chebyshev": run_chebyshev,
    "geodesic": run_geodesic,
    "busemann": run_busemann,
    "d1demo": run_d1demo,
    "flatness": run_flatness,
}


def execute(cfg: ExperimentConfig) -> Outcome:
    return PIPELINES[cfg.kind](cfg)

