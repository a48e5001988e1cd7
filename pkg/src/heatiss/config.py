"""Experiment configuration: one YAML document per run.

Every key has a default, so an empty document is a valid config. Unknown keys
are rejected with the offending line and a suggestion.
"""

from __future__ import annotations

import copy
import difflib
import hashlib
import json
import math
from dataclasses import dataclass

import yaml

from .errors import ConfigValidationError, InputError, ParseError, UnknownKey
from .system_model import SystemParams, Topology, validate_params

DEFAULTS: dict = {
    "seed": 0,
    "system": {"a": 1.0, "b": 1.0, "c": 1.0, "r": 0.3, "topology": "self_delay"},
    "grid": {"n": 64, "m": 64},
    "simulation": {"dt": 0.01, "horizon": 10.0, "sample_every": 10},
    "disturbance": {"kind": "zero", "values": 0.0, "breakpoints": None},
    "initial": {"f": "zero", "phi": "zero", "value": 1.0},
    "sweep": {"c_lo": 1.0, "c_hi": 1.4, "points": 21, "tol": 1e-3, "workers": 2},
    "analyze": {"tail_fraction": 0.5, "gain_levels": [0.5, 1.0, 2.0], "gain_horizon": 30.0},
    "output": {"dir": "out", "trace": "trace.csv", "report": "report.json", "sweep": "sweep.csv"},
}

# common spellings that difflib cannot relate to the one-letter names
ALIASES = {
    "diffusion": "a", "diffusivity": "a", "alpha": "a",
    "reaction": "b", "decay": "b", "damping": "b",
    "coupling": "c", "gain": "c", "feedback": "c",
    "delay": "r", "lag": "r", "tau": "r",
}

PRESETS = ("zero", "constant", "random")
DISTURBANCE_KINDS = ("zero", "constant", "piecewise")


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict  # fully resolved document (defaults filled in)

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def params(self) -> SystemParams:
        s = self.data["system"]
        return SystemParams.from_arrays(s["a"], s["b"], s["c"], s["r"], Topology(s["topology"]))

    def section(self, name: str) -> dict:
        return self.data[name]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        d = copy.deepcopy(self.data)
        d["seed"] = int(seed)
        return ExperimentConfig(d)

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _suggest(key: str, allowed) -> str | None:
    if key in ALIASES and ALIASES[key] in allowed:
        return ALIASES[key]
    hits = difflib.get_close_matches(key, list(allowed), n=1, cutoff=0.6)
    return hits[0] if hits else None


def _key_lines(text: str) -> dict:
    """Map 'section.key' paths to 1-based source lines."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    lines = {}
    if not isinstance(root, yaml.MappingNode):
        return lines
    for knode, vnode in root.value:
        lines[str(knode.value)] = knode.start_mark.line + 1
        if isinstance(vnode, yaml.MappingNode):
            for k2, _ in vnode.value:
                lines[f"{knode.value}.{k2.value}"] = k2.start_mark.line + 1
    return lines


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ParseError(f"invalid YAML{where}: {getattr(exc, 'problem', exc)}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ParseError("config must be a mapping of sections")
    lines = _key_lines(text)

    data = copy.deepcopy(DEFAULTS)
    for key, val in raw.items():
        key = str(key)
        if key not in DEFAULTS:
            raise UnknownKey(key, _suggest(key, DEFAULTS) or _suggest_nested(key), lines.get(key))
        if isinstance(DEFAULTS[key], dict):
            if val is None:
                continue
            if not isinstance(val, dict):
                raise ConfigValidationError(key, "expected a mapping", lines.get(key))
            for k2, v2 in val.items():
                k2 = str(k2)
                if k2 not in DEFAULTS[key]:
                    raise UnknownKey(f"{key}.{k2}", _suggest(k2, DEFAULTS[key]), lines.get(f"{key}.{k2}"))
                data[key][k2] = v2
        else:
            data[key] = val
    _validate(data, lines)
    return ExperimentConfig(data)


def _suggest_nested(key: str) -> str | None:
    for sec, body in DEFAULTS.items():
        if isinstance(body, dict):
            hit = _suggest(key, body)
            if hit:
                return f"{sec}.{hit}"
    return None


def _num(data, sec, key, lines, *, positive=False, nonneg=False, integer=False, minimum=None):
    path = f"{sec}.{key}"
    val = data[sec][key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigValidationError(path, f"expected a number, got {val!r}", lines.get(path))
    if integer and int(val) != val:
        raise ConfigValidationError(path, f"expected an integer, got {val!r}", lines.get(path))
    if not math.isfinite(val):
        raise ConfigValidationError(path, "must be finite", lines.get(path))
    if positive and not val > 0:
        raise ConfigValidationError(path, f"must be positive, got {val!r}", lines.get(path))
    if nonneg and val < 0:
        raise ConfigValidationError(path, f"must be nonnegative, got {val!r}", lines.get(path))
    if minimum is not None and val < minimum:
        raise ConfigValidationError(path, f"must be at least {minimum}, got {val!r}", lines.get(path))
    data[sec][key] = int(val) if integer else float(val)


def _validate(data: dict, lines: dict) -> None:
    if isinstance(data["seed"], bool) or not isinstance(data["seed"], int):
        raise ConfigValidationError("seed", "expected an integer", lines.get("seed"))

    sysd = data["system"]
    for k in "abcr":
        v = sysd[k]
        vals = v if isinstance(v, list) else [v]
        if len(vals) not in (1, 3) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in vals):
            raise ConfigValidationError(f"system.{k}", "expected a number or a list of 3 numbers", lines.get(f"system.{k}"))
        sysd[k] = [float(x) for x in vals] if isinstance(v, list) else float(v)
    try:
        Topology(sysd["topology"])
    except ValueError:
        raise ConfigValidationError("system.topology", f"expected one of {[t.value for t in Topology]}",
                                    lines.get("system.topology")) from None
    try:
        validate_params(SystemParams.from_arrays(sysd["a"], sysd["b"], sysd["c"], sysd["r"], sysd["topology"]))
    except InputError as exc:
        field = getattr(exc, "field", None)
        path = f"system.{field}" if field else "system"
        raise ConfigValidationError(path, str(exc), lines.get(path)) from exc

    _num(data, "grid", "n", lines, integer=True, minimum=8)
    _num(data, "grid", "m", lines, integer=True, minimum=8)
    _num(data, "simulation", "dt", lines, positive=True)
    _num(data, "simulation", "horizon", lines, positive=True)
    _num(data, "simulation", "sample_every", lines, integer=True, minimum=1)
    rmin = min(p.r for p in SystemParams.from_arrays(sysd["a"], sysd["b"], sysd["c"], sysd["r"]).components)
    if data["simulation"]["dt"] > rmin / 4:
        raise ConfigValidationError("simulation.dt", f"must not exceed min_j r_j / 4 = {rmin / 4}",
                                    lines.get("simulation.dt"))

    dist = data["disturbance"]
    if dist["kind"] not in DISTURBANCE_KINDS:
        raise ConfigValidationError("disturbance.kind", f"expected one of {DISTURBANCE_KINDS}",
                                    lines.get("disturbance.kind"))
    if dist["kind"] == "piecewise":
        bp = dist["breakpoints"]
        if not isinstance(bp, list) or not isinstance(dist["values"], list) or len(bp) != len(dist["values"]):
            raise ConfigValidationError("disturbance.breakpoints",
                                        "piecewise disturbances need equal-length breakpoints and values lists",
                                        lines.get("disturbance.breakpoints"))

    init = data["initial"]
    for k in ("f", "phi"):
        if init[k] not in PRESETS:
            raise ConfigValidationError(f"initial.{k}", f"unknown preset {init[k]!r}; expected one of {PRESETS}",
                                        lines.get(f"initial.{k}"))
    _num(data, "initial", "value", lines)

    sw = data["sweep"]
    _num(data, "sweep", "c_lo", lines, nonneg=True)
    _num(data, "sweep", "c_hi", lines, positive=True)
    _num(data, "sweep", "points", lines, integer=True, minimum=2)
    _num(data, "sweep", "tol", lines, positive=True)
    _num(data, "sweep", "workers", lines, integer=True, minimum=1)
    if not sw["c_hi"] > sw["c_lo"]:
        raise ConfigValidationError("sweep.c_hi", "must exceed sweep.c_lo", lines.get("sweep.c_hi"))

    _num(data, "analyze", "tail_fraction", lines, positive=True)
    _num(data, "analyze", "gain_horizon", lines, positive=True)
    if not 0 < data["analyze"]["tail_fraction"] <= 1:
        raise ConfigValidationError("analyze.tail_fraction", "must lie in (0, 1]", lines.get("analyze.tail_fraction"))
    levels = data["analyze"]["gain_levels"]
    if not isinstance(levels, list) or not levels:
        raise ConfigValidationError("analyze.gain_levels", "expected a non-empty list", lines.get("analyze.gain_levels"))
    data["analyze"]["gain_levels"] = [float(x) for x in levels]

    for k, v in data["output"].items():
        if not isinstance(v, str) or not v:
            raise ConfigValidationError(f"output.{k}", "expected a path string", lines.get(f"output.{k}"))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)
