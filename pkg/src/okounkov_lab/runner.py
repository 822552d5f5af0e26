"""Run a configured pipeline, write its artifacts, and verify reports."""
from __future__ import annotations

import datetime as _dt
import io
import json
import os
import sys
import time
from importlib import resources
from typing import Iterable, TextIO

import numpy as np

from .config import ExperimentConfig, config_hash, load_config
from .pipelines import execute
from .tolerances import TOLERANCE_VERSION, evaluate

__all__ = ["run", "verify", "shipped_configs", "REPORT_NAMES", "verdict_lines", "run_acceptance"]

REPORT_NAMES = {
    "body": "body.json",
    "chebyshev": "cheb.json",
    "geodesic": "geodesic.json",
    "busemann": "busemann.json",
    "d1demo": "d1demo.json",
    "flatness": "report.json",
}


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _layout(cfg: ExperimentConfig) -> tuple[str, str, str]:
    """``(directory, report path, sibling prefix)``."""
    out = cfg.out or os.path.join("runs", cfg.kind)
    if out.endswith(".json"):
        base = os.path.dirname(out) or "."
        name = os.path.basename(out)
        # the default report name needs no prefix to keep its siblings apart
        prefix = "" if name == REPORT_NAMES[cfg.kind] else os.path.splitext(name)[0] + "_"
        return base, out, prefix
    return out, os.path.join(out, REPORT_NAMES[cfg.kind]), ""


def _group(checks: Iterable[dict]) -> dict[str, list[dict]]:
    groups: dict[str, list[dict]] = {}
    for c in checks:
        groups.setdefault(c.get("criterion") or c.get("experiment") or "unlabelled", []).append(c)
    return groups


def _order(label: str):
    return (0, int(label[2:])) if label.startswith("AC") and label[2:].isdigit() else (1, label)


def verdict_lines(checks: Iterable[dict]) -> tuple[list[str], bool]:
    """One ``PASS``/``FAIL`` line per criterion (or experiment, for unlabelled checks)."""
    lines, ok_all = [], True
    groups = _group(checks)
    for label in sorted(groups, key=_order):
        results = [evaluate(c) for c in groups[label]]
        bad = [msg for ok, msg in results if not ok]
        if bad:
            ok_all = False
            lines.append(f"FAIL {label}: " + "; ".join(bad))
        else:
            lines.append(f"PASS {label} ({len(results)} checks)")
    return lines, ok_all


def run(cfg: ExperimentConfig, stream: TextIO | None = None) -> tuple[int, list[str]]:
    """Execute ``cfg`` and write every artifact from this single writer.

    Returns ``(exit code, written paths)``: 0 when every recorded check meets
    the shipped tolerance table, 2 otherwise. Errors raise before any file
    is written.
    """
    stream = stream or sys.stdout
    started = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    outcome = execute(cfg)
    elapsed = time.perf_counter() - t0
    lines, ok = verdict_lines(outcome.checks)

    base, report_path, prefix = _layout(cfg)
    os.makedirs(base, exist_ok=True)
    det = cfg.manifest()
    written = []

    def put(name: str, text: str) -> str:
        path = os.path.join(base, prefix + name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        written.append(path)
        return path

    names = sorted(outcome.tables) + sorted(outcome.documents)
    for name in sorted(outcome.tables):
        put(name, "# manifest " + json.dumps(det, sort_keys=True, separators=(",", ":")) + "\n" + outcome.tables[name])
    for name in sorted(outcome.documents):
        put(name, _dumps({"manifest": det, **outcome.documents[name]}))
    report = {
        "manifest": det,
        "config": cfg.data,
        "experiment": cfg.kind,
        "results": outcome.report,
        "checks": outcome.checks,
        "verdict": "pass" if ok else "fail",
        "artifacts": [prefix + n for n in names],
    }
    with open(report_path, "w", newline="") as fh:
        fh.write(_dumps(report))
    written.append(report_path)
    if cfg.svg:
        for name, draw in outcome.figures:
            path = os.path.join(base, f"{prefix}{name}.svg")
            draw(path)
            written.append(path)
    timing = {
        "deterministic": det,
        "wall_clock_utc": started.isoformat(),
        "elapsed_s": elapsed,
        "stage_timings_s": outcome.timings,
        "threads": cfg.threads,
        "report": os.path.basename(report_path),
    }
    put("manifest.json", _dumps(timing))
    for line in lines:
        print(line, file=stream)
    return (0 if ok else 2), written


def _collect(paths: Iterable[str]) -> list[str]:
    found = []
    for p in paths:
        if os.path.isdir(p):
            for root, _, files in sorted(os.walk(p)):
                for f in sorted(files):
                    if f.endswith(".json") and not f.endswith("manifest.json"):
                        full = os.path.join(root, f)
                        with open(full) as fh:
                            try:
                                obj = json.load(fh)
                            except json.JSONDecodeError:
                                continue
                        if isinstance(obj, dict) and "checks" in obj:
                            found.append(full)
        elif os.path.exists(p):
            found.append(p)
        else:
            raise FileNotFoundError(p)
    return found


def verify(paths: Iterable[str], stream: TextIO | None = None) -> int:
    """Re-check recorded residuals against the shipped tolerance table.

    Exit codes: 0 all pass, 2 some criterion fails, 1 when a report is
    missing, malformed or carries a config hash that does not match its
    embedded config, or when there is nothing to verify.
    """
    stream = stream or sys.stdout
    try:
        reports = _collect(list(paths))
    except FileNotFoundError as exc:
        print(f"error: report not found: {exc.args[0]}", file=stream)
        return 1
    if not reports:
        print("error: no reports to verify", file=stream)
        return 1
    checks = []
    for path in reports:
        try:
            with open(path) as fh:
                rep = json.load(fh)
            manifest, cfg, recorded = rep["manifest"], rep["config"], rep["checks"]
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            print(f"error: {path}: not a run report ({exc.__class__.__name__})", file=stream)
            return 1
        if config_hash(cfg) != manifest.get("config_hash"):
            print(f"error: {path}: config hash mismatch, report rejected", file=stream)
            return 1
        if manifest.get("tolerance_version") != TOLERANCE_VERSION:
            print(f"note: {path} recorded under tolerance table {manifest.get('tolerance_version')}, "
                  f"re-checked against {TOLERANCE_VERSION}", file=stream)
        checks.extend(recorded)
    lines, ok = verdict_lines(checks)
    for line in lines:
        print(line, file=stream)
    return 0 if ok else 2


def shipped_configs() -> list[tuple[str, dict]]:
    """Acceptance configs bundled with the package, as ``(stem, config)``."""
    root = resources.files("okounkov_lab").joinpath("configs")
    out = []
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".json"):
            out.append((entry.name[:-5], json.loads(entry.read_text())))
    return out


def run_acceptance(out_dir: str, threads: int = 1, svg: bool = False, stream: TextIO | None = None) -> int:
    paths = []
    for stem, raw in shipped_configs():
        cfg = load_config(raw, {"out": os.path.join(out_dir, stem), "threads": threads, "svg": svg})
        run(cfg, stream=io.StringIO())
        paths.append(_layout(cfg)[1])
    return verify(paths, stream)
