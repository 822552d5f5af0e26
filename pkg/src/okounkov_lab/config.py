"""Experiment configs: schema validation, defaults and the canonical hash."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources

import jsonschema

from . import __version__
from .tolerances import TOLERANCE_VERSION, bound_for

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "load_schema", "canonical_json", "config_hash"]

# keys that steer execution but cannot change any artifact byte
RUNTIME_KEYS = ("threads", "svg", "out")

DEFAULTS = {
    "body": {"flag": "coord", "kmax": 5},
    "chebyshev": {"flag": "coord", "window": [0.1, 0.9], "gram_check": True},
    "geodesic": {
        "body": "p1:1",
        "resolution": 1024,
        "ps": [1, 2, 3],
        "samples": 41,
        "finsler_samples": 200,
        "pairs": [
            {"id": "fs-quadratic", "u0": "fs", "u1": "quadratic"},
            {"id": "zero-hinge", "u0": "zero", "u1": "hinge:0.5"},
            {"id": "centered-const", "u0": "centered", "u1": "const:0.3"},
        ],
    },
    "busemann": {
        "body": "p1:1",
        "resolution": 1024,
        "ps": [1, 2, 3],
        "samples": 101,
        "geodesics": [
            {"id": "g1", "a0": "zero", "a1": "quadratic", "b0": "linear", "b1": "fs"},
            {"id": "g2", "a0": "fs", "a1": "hinge:0.5", "b0": "const:0.3", "b1": "quadratic"},
            {"id": "g3", "a0": "centered", "a1": "zero", "b0": "fs", "b1": "fs+0.5"},
        ],
        "triangles": [
            {"id": "pythagoras", "a": "zero", "b": "centered", "c": "const:0.3", "right_angle_at": "a"},
            {"id": "t2", "a": "fs", "b": "quadratic", "c": "hinge:0.5"},
            {"id": "t3", "a": "zero", "b": "linear", "c": "quadratic"},
        ],
    },
    "d1demo": {
        "resolution": 1024,
        "ts": [0.0, 0.0625, 0.25, 0.5625, 1.0],
        "separation_t": 0.5,
    },
    "flatness": {
        "flag": "coord",
        "kladder": [16, 32, 64, 128],
        "ts": [0.0, 0.25, 0.5, 0.75, 1.0],
        "ps": [1, 2, 3],
        "resolution": 512,
        "distance_samples": 201,
        "pairs": [],
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``pointer`` is a JSON pointer into the config."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(message)
        self.pointer = pointer

    def __str__(self):
        where = self.pointer or "/"
        return f"{where}: {self.args[0]}"


def load_schema(name: str = "config") -> dict:
    text = resources.files("okounkov_lab").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(hashed: dict) -> str:
    return "sha256:" + hashlib.sha256(canonical_json(hashed).encode()).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    data: dict  # normalized, hash-relevant
    threads: int = 1
    svg: bool = False
    out: str | None = None

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def acceptance(self) -> bool:
        return bool(self.data.get("acceptance", False))

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    def manifest(self) -> dict:
        """Deterministic manifest part embedded in every artifact."""
        return {
            "config_hash": self.hash,
            "artifact_version": __version__,
            "tolerance_version": TOLERANCE_VERSION,
            "tolerances": bound_for(self.kind),
        }

    def get(self, key, default=None):
        return self.data.get(key, default)


def _validate(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        pointer = "".join(f"/{p}" for p in err.absolute_path)
        raise ConfigError(err.message, pointer)


def load_config(source=None, overrides: dict | None = None, experiment: str | None = None) -> ExperimentConfig:
    """Merge ``overrides`` over ``source`` (path, dict or None), validate and normalize.

    ``experiment`` names the kind used when the config does not state one.
    """
    if source is None:
        raw = {}
    elif isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        try:
            with open(source) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if experiment is not None:
        raw.setdefault("experiment", experiment)
    for key, val in (overrides or {}).items():
        if val is not None:
            raw[key] = val
    if raw.get("experiment") == "body" and "variety" in raw:
        raw["cases"] = [{k: raw.pop(k) for k in ("variety", "flag", "kmax") if k in raw}]
    _validate(raw)

    kind = raw["experiment"]
    data = copy.deepcopy(DEFAULTS.get(kind, {}))
    data.update({k: v for k, v in raw.items() if k not in RUNTIME_KEYS})
    data.setdefault("seed", 0)
    if kind == "body":
        data["cases"] = [{"flag": data.get("flag", "coord"), "kmax": data.get("kmax", 5), **c} for c in data["cases"]]
        data.pop("flag", None)
        data.pop("kmax", None)
    return ExperimentConfig(
        kind=kind,
        data=data,
        threads=int(raw.get("threads", 1)),
        svg=bool(raw.get("svg", False)),
        out=raw.get("out"),
    )
