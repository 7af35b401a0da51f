"""Scenario files: JSON schema, validation and construction of points and flows."""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .grassmann import FlowGroupElement, GrassmannPoint, kp_flow
from .kacmoody import homogeneous_flow, principal_flow, principal_lambda
from .loops import BlockLoop, CircleGrid, exp_of, loop_from_literal, one_pole

_MATRIX = {"anyOf": [{"type": "number"},
                     {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}]}
_RECORDS = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "object",
        "properties": {"k": {"type": "integer"}, "re": _MATRIX, "im": _MATRIX},
        "required": ["k", "re"],
        "additionalProperties": False,
    },
}
_LOOP = {
    "type": "object",
    "oneOf": [
        {"properties": {"literal": _RECORDS}, "required": ["literal"], "additionalProperties": False},
        {"properties": {"exp_of": _RECORDS}, "required": ["exp_of"], "additionalProperties": False},
        {
            "properties": {
                "preset": {"enum": ["identity", "one_pole", "principal_lambda"]},
                "n": {"type": "integer", "minimum": 1},
                "c": {"type": "number"},
                "a": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
            },
            "required": ["preset"],
            "additionalProperties": False,
        },
    ],
}
_AXIS = {
    "type": "object",
    "properties": {
        "flow": {"type": "string"},
        "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "start": {"type": "number"},
        "stop": {"type": "number"},
        "num": {"type": "integer", "minimum": 1},
    },
    "required": ["flow"],
    "oneOf": [{"required": ["values"]}, {"required": ["start", "stop", "num"]}],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "point": _LOOP,
        "symbol": _LOOP,
        "flows": {
            "type": "object",
            "properties": {
                "family": {"enum": ["kp", "principal_A", "homogeneous_A"]},
                "n": {"type": "integer", "minimum": 1},
                "times": {"type": "object", "additionalProperties": {"type": "number"}},
            },
            "required": ["family"],
            "additionalProperties": False,
        },
        "lattice": {
            "type": "object",
            "properties": {"axes": {"type": "array", "items": _AXIS, "minItems": 1}},
            "required": ["axes"],
            "additionalProperties": False,
        },
        "numerics": {
            "type": "object",
            "properties": {
                "M": {"type": "integer", "minimum": 8},
                "P": {"type": "integer", "minimum": 1},
                "M_H": {"type": ["integer", "null"], "minimum": 1},
                "N_schedule": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "tail_tol": {"type": "number", "exclusiveMinimum": 0},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "outputs": {
            "type": "object",
            "properties": {"csv": {"type": "string"}, "report": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "anyOf": [{"required": ["point"]}, {"required": ["symbol"]}],
    "additionalProperties": False,
}

DEFAULT_NUMERICS = {
    "M": 256,
    "P": 32,
    "M_H": None,
    "N_schedule": [16, 32, 64, 128],
    "h": 1e-4,
    "tail_tol": 1e-14,
    "tolerance": 1e-6,
}


class ScenarioError(ValueError):
    """Scenario file is unreadable or does not match the schema."""


@dataclass(frozen=True)
class Scenario:
    raw: dict
    numerics: dict

    @property
    def name(self) -> str:
        return self.raw.get("name", "")

    @property
    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @property
    def grid(self) -> CircleGrid:
        return CircleGrid(self.numerics["M"])

    @property
    def family(self) -> str:
        return self.raw.get("flows", {}).get("family", "kp")

    @property
    def flow_n(self) -> int:
        return int(self.raw.get("flows", {}).get("n", 1))

    def point(self) -> GrassmannPoint:
        if "point" not in self.raw:
            raise ScenarioError("scenario has no point")
        try:
            return GrassmannPoint(build_loop(self.raw["point"], self.grid), self.name)
        except ValueError as exc:
            raise ScenarioError(f"point: {exc}") from exc

    def symbol(self) -> BlockLoop:
        """The ``symbol`` entry if given, else the loop of ``point`` taken as is."""
        desc = self.raw["symbol"] if "symbol" in self.raw else self.raw["point"]
        return build_loop(desc, self.grid)

    def base_times(self) -> dict:
        times = self.raw.get("flows", {}).get("times", {})
        return {parse_label(k, self.family): float(v) for k, v in sorted(times.items())}

    def labels(self) -> list:
        """Flow labels in a fixed order: base times first, then lattice axes."""
        out = list(self.base_times())
        for ax in self.raw.get("lattice", {}).get("axes", []):
            lab = parse_label(ax["flow"], self.family)
            if lab not in out:
                out.append(lab)
        return out

    def lattice(self) -> list[dict]:
        """All time points in lattice order (last axis fastest)."""
        base = self.base_times()
        axes = self.raw.get("lattice", {}).get("axes", [])
        if not axes:
            return [base]
        labels = [parse_label(ax["flow"], self.family) for ax in axes]
        values = [axis_values(ax) for ax in axes]
        out = []
        for combo in itertools.product(*values):
            t = dict(base)
            t.update(zip(labels, combo))
            out.append(t)
        return out

    def flow(self, times: dict) -> FlowGroupElement:
        family, n = self.family, self.flow_n
        try:
            if family == "kp":
                return kp_flow(times, self.grid)
            if family == "principal_A":
                return principal_flow(n, times, self.grid)
            return homogeneous_flow(n, times, self.grid)
        except (ValueError, KeyError) as exc:
            raise ScenarioError(f"flows: {exc}") from exc


def parse_label(key: str, family: str):
    if family == "homogeneous_A":
        j, i = str(key).split(":")
        return (int(j), int(i))
    return int(key)


def format_label(label) -> str:
    if isinstance(label, tuple):
        return f"{label[0]}:{label[1]}"
    return str(label)


def axis_values(ax: dict) -> list[float]:
    if "values" in ax:
        return [float(v) for v in ax["values"]]
    return [float(v) for v in np.linspace(ax["start"], ax["stop"], ax["num"])]


def build_loop(desc: dict, grid: CircleGrid) -> BlockLoop:
    if "literal" in desc:
        return loop_from_literal(desc["literal"])
    if "exp_of" in desc:
        return exp_of(loop_from_literal(desc["exp_of"]), grid)
    preset, n = desc["preset"], desc.get("n", 1)
    if preset == "identity":
        return BlockLoop.identity(n)
    if preset == "one_pole":
        return one_pole(desc.get("c", 0.3), desc.get("a", 0.0), n)
    return principal_lambda(n)


def validate(raw: dict) -> Scenario:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise ScenarioError(f"{path}: {exc.message}") from exc
    fam = raw.get("flows", {}).get("family", "kp")
    for key in raw.get("flows", {}).get("times", {}):
        try:
            parse_label(key, fam)
        except ValueError as exc:
            raise ScenarioError(f"flows/times: bad label {key!r} for family {fam}") from exc
    numerics = dict(DEFAULT_NUMERICS)
    numerics.update(raw.get("numerics", {}))
    return Scenario(raw, numerics)


def load(path: str | Path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(str(exc)) from exc
    return validate(raw)
