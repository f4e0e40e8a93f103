"""Run configuration: strict JSON schema, defaults, and object construction."""

from __future__ import annotations

import copy
from dataclasses import dataclass
import json
from pathlib import Path

import jsonschema

from .geometry import GuideSpec
from .operator import Grid
from .profiles import CURVATURE_FAMILIES, TORSION_FAMILIES, CurvatureProfile, TorsionSpec
from .solve import METHODS, PRECONDITIONERS, SolveOptions

__all__ = ["ConfigError", "RunConfig", "load_config", "build_config", "DEFAULTS", "SCHEMA", "PIPELINES"]

PIPELINES = ("validate", "forward", "inverse-eigen", "inverse-poisson", "discriminate")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

_PROFILE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family"],
    "properties": {
        "family": {"enum": list(CURVATURE_FAMILIES)},
        "a": _num,
        "sigma": _pos,
        "plateau": {"type": "number", "minimum": 0},
        "smoothness_class": {"type": "integer", "minimum": 2, "maximum": 5},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["guide", "profile", "grid"],
    "properties": {
        "pipeline": {"enum": list(PIPELINES)},
        "guide": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dim": {"enum": [2, 3]},
                "L": _pos,
                "d": _pos,
                "d2": _pos,
                "d3": _pos,
            },
        },
        "profile": _PROFILE,
        "torsion": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {"enum": list(TORSION_FAMILIES)},
                "theta0": _num,
                "delta": _num,
                "width": _pos,
                "bounded_rotation": {"type": "boolean"},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_s", "n_u"],
            "properties": {
                "n_s": {"type": "integer", "minimum": 3},
                "n_u": {"type": "integer", "minimum": 1, "not": {"multipleOf": 2}},
            },
        },
        "solve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eig_tol": _pos,
                "lin_tol": _pos,
                "max_iter": {"type": "integer", "minimum": 1},
                "block_size": {"type": "integer", "minimum": 1},
                "preconditioner": {"enum": list(PRECONDITIONERS)},
                "method": {"enum": list(METHODS)},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "n_eigs": {"type": "integer", "minimum": 1},
        "mask_eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "sign": {"enum": ["nonnegative", "nonpositive"]},
        "poisson": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "source": {"enum": ["manufactured", "file"]},
                "f_file": {"type": ["string", "null"]},
            },
        },
        "discriminate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alternative": {"anyOf": [_PROFILE, {"type": "null"}]},
                "source": {"enum": ["poisson", "eigen"]},
                "M": {"anyOf": [_pos, {"type": "null"}]},
            },
        },
        "output": {"type": "string"},
        "deterministic": {"type": "boolean"},
    },
}

DEFAULTS = {
    "pipeline": "forward",
    "guide": {"dim": 2, "L": 15.0, "d": 1.0, "d2": 1.0, "d3": 1.0},
    "profile": {"a": 0.0, "sigma": 1.0, "plateau": 0.0, "smoothness_class": 5},
    "torsion": {"family": "constant", "theta0": 0.0, "delta": 0.0, "width": 1.0, "bounded_rotation": False},
    "solve": SolveOptions().to_dict(),
    "n_eigs": 2,
    "mask_eps": 1e-3,
    "sign": "nonnegative",
    "poisson": {"source": "manufactured", "f_file": None},
    "discriminate": {"alternative": None, "source": "poisson", "M": None},
    "output": "out",
    "deterministic": True,
}
DEFAULTS["solve"].pop("deterministic")


class ConfigError(ValueError):
    """Schema or consistency violation; ``path`` names the offending key."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class RunConfig:
    effective: dict
    spec: GuideSpec
    profile: CurvatureProfile
    grid: Grid
    opts: SolveOptions
    source_path: str | None = None

    @property
    def pipeline(self) -> str:
        return self.effective["pipeline"]

    @property
    def out_dir(self) -> Path:
        return Path(self.effective["output"])


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _validate(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        if err.validator == "not" and path.endswith("n_u"):
            msg = f"must be odd so the centreline is a grid line, got {err.instance}"
        else:
            msg = err.message
        raise ConfigError(msg, path)


def build_config(raw: dict, source_path: str | None = None) -> RunConfig:
    """Validate ``raw`` and fill every default; the result echoes all values."""
    _validate(raw)
    eff = _merge(DEFAULTS, raw)
    g = eff["guide"]
    try:
        torsion = TorsionSpec(**eff["torsion"]) if g["dim"] == 3 else None
        spec = GuideSpec(dim=g["dim"], L=g["L"], d=g["d"], d2=g["d2"], d3=g["d3"], torsion=torsion)
        profile = CurvatureProfile(**eff["profile"])
        grid = Grid.for_guide(spec, eff["grid"]["n_s"], eff["grid"]["n_u"])
        opts = SolveOptions(**eff["solve"], deterministic=eff["deterministic"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if g["dim"] == 2:
        eff["torsion"] = None
    return RunConfig(effective=eff, spec=spec, profile=profile, grid=grid, opts=opts, source_path=source_path)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config file, apply ``overrides`` (dotted keys), build it."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    for key, value in (overrides or {}).items():
        set_path(raw, key, value)
    return build_config(raw, source_path=str(path))


def set_path(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
    cur[keys[-1]] = value


def get_path(d: dict, dotted: str):
    cur = d
    for k in dotted.split("."):
        cur = cur[k]
    return cur
