"""Experiment configuration: YAML documents validated against a schema.

Every violation is collected (structural ones from JSON Schema, semantic
ones from trying to build the declared objects) and reported together in a
:class:`~tcilab.errors.ConfigError`.

The config hash is the SHA-256 of the canonical JSON rendering (sorted
keys, no whitespace), so formatting-only edits leave it unchanged.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
import yaml
from jsonschema import Draft202012Validator

from .catalog import (DIFFUSION_FORMS, DRIFT_FORMS, OPERATOR_KINDS, PERTURBATION_FORMS,
                      build_problem, operator_from_spec, perturbation_form)
from .errors import ConfigError, TcilabError

__all__ = ["SCHEMA", "ExperimentConfig", "parse_config", "load_config", "canonical_json", "config_hash"]

SCENARIOS = ("lipschitz", "dissipative", "multivalued", "dyson", "custom")

_num = {"type": "number"}
_vector = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]}
_matrix = {"oneOf": [_num, {"type": "array", "minItems": 1,
                            "items": {"oneOf": [_num, {"type": "array", "items": _num}]}}]}

_state_form = {
    "type": "object",
    "required": ["form"],
    "additionalProperties": False,
    "properties": {
        "form": {"enum": list(DRIFT_FORMS)},
        "value": _vector, "matrix": _matrix, "theta": {"type": "number", "minimum": 0},
        "mean": _vector, "amplitude": _num, "scale": _num,
    },
}

SCHEMA = {
    "type": "object",
    "required": ["scenario", "seed", "grid", "n_paths", "problem"],
    "additionalProperties": False,
    "properties": {
        "scenario": {"enum": list(SCENARIOS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "grid": {
            "type": "object", "required": ["horizon", "n_steps"], "additionalProperties": False,
            "properties": {"horizon": {"type": "number", "exclusiveMinimum": 0},
                           "n_steps": {"type": "integer", "minimum": 1}},
        },
        "n_paths": {"type": "integer", "minimum": 1},
        "problem": {
            "type": "object", "required": ["dimension"], "additionalProperties": False,
            "properties": {
                "name": {"type": "string"},
                "dimension": {"type": "integer", "minimum": 1},
                "initial_point": _vector,
                "drift_b": _state_form,
                "drift_m": _state_form,
                "diffusion": {
                    "type": "object", "required": ["form"], "additionalProperties": False,
                    "properties": {"form": {"enum": list(DIFFUSION_FORMS)}, "scale": _matrix,
                                   "base": _num, "amplitude": _num},
                },
                "lipschitz_K": {"type": "number", "minimum": 0},
                "drift_lipschitz": {"type": "number", "minimum": 0},
                "growth_N": {"type": "number", "minimum": 0},
                "sigma_sup": {"type": "number", "minimum": 0},
                "dissipative": {"type": "boolean"},
            },
        },
        "perturbation": {
            "type": "object", "required": ["form"], "additionalProperties": False,
            "properties": {"form": {"enum": list(PERTURBATION_FORMS)}, "value": _vector,
                           "slope": _vector, "amplitude": _num,
                           "budget": {"type": "number", "exclusiveMinimum": 0}},
        },
        "inequalities": {"type": "array", "uniqueItems": True,
                         "items": {"enum": ["thm1", "prop1", "prop2"]}},
        "bounds": {
            "type": "object", "additionalProperties": False,
            "properties": {"K": {"type": "number", "minimum": 0},
                           "sigma_sup": {"type": "number", "minimum": 0},
                           "c_davis": {"type": "number", "exclusiveMinimum": 0},
                           "a": {"type": "number", "exclusiveMinimum": 0},
                           "bracket": {"enum": ["nested", "factored"]}},
        },
        "ot": {
            "type": "object", "additionalProperties": False,
            "properties": {"solver": {"enum": ["exact", "sinkhorn", "none"]},
                           "epsilon": {"type": "number", "exclusiveMinimum": 0},
                           "max_iters": {"type": "integer", "minimum": 1},
                           "tol": {"type": "number", "exclusiveMinimum": 0},
                           "max_pairs": {"type": "integer", "minimum": 1},
                           "cap": {"type": "integer", "minimum": 1},
                           "bootstrap": {"type": "integer", "minimum": 0}},
        },
        "yosida": {
            "type": "object", "required": ["operator"], "additionalProperties": False,
            "properties": {
                "operator": {
                    "type": "object", "required": ["kind"], "additionalProperties": False,
                    "properties": {"kind": {"enum": list(OPERATOR_KINDS)},
                                   "gamma": {"type": "number", "exclusiveMinimum": 0},
                                   "matrix": _matrix, "lower": _vector, "upper": _vector,
                                   "normal": _vector, "offset": _num},
                },
                "ladder": {"type": "array", "minItems": 1,
                           "items": {"type": "number", "exclusiveMinimum": 0}},
                "max_power": {"type": "integer", "minimum": 0, "maximum": 20},
            },
        },
        "checks": {
            "type": "object", "additionalProperties": False,
            "properties": {"probes": {"type": "integer", "minimum": 2},
                           "lipschitz": {"type": "boolean"},
                           "dissipativity": {"type": "boolean"}},
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"directory": {"type": "string"},
                           "formats": {"type": "array",
                                       "items": {"enum": ["json", "csv", "paths"]}}},
        },
    },
}

_VALIDATOR = Draft202012Validator(SCHEMA)


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 reads "1e-3" as a string; accept plain scientific notation
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(doc) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated config document plus convenience accessors."""

    doc: dict

    @property
    def hash(self) -> str:
        return config_hash(self.doc)

    @property
    def scenario(self) -> str:
        return self.doc["scenario"]

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def n_paths(self) -> int:
        return int(self.doc["n_paths"])

    @property
    def inequalities(self) -> list:
        return list(self.doc.get("inequalities", []))

    @property
    def ladder(self) -> Optional[list]:
        y = self.doc.get("yosida")
        if y is None:
            return None
        if "ladder" in y:
            return [float(n) if not float(n).is_integer() else int(n) for n in y["ladder"]]
        return [2 ** k for k in range(int(y.get("max_power", 10)) + 1)]

    def section(self, name, default=None):
        return copy.deepcopy(self.doc.get(name, {} if default is None else default))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        doc = copy.deepcopy(self.doc)
        doc["seed"] = int(seed)
        return parse_document(doc)

    def with_ladder(self, ladder) -> "ExperimentConfig":
        doc = copy.deepcopy(self.doc)
        doc["yosida"]["ladder"] = list(ladder)
        doc["yosida"].pop("max_power", None)
        return parse_document(doc)


def _path_of(err):
    path = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        m = re.match(r"'([^']+)' is a required property", err.message)
        if m:
            path.append(m.group(1))
    return ".".join(path)


def _semantic_errors(doc):
    errs = []
    prob = doc.get("problem", {})
    d = prob.get("dimension", 1)
    op = None
    y = doc.get("yosida")
    scen = doc.get("scenario")
    if y is not None:
        try:
            op = operator_from_spec(y["operator"], d)
        except TcilabError as e:
            errs.append(("yosida.operator", str(e)))
    if scen in ("multivalued", "dyson") and y is None:
        errs.append(("yosida", "scenario %r requires a yosida section" % scen))
    if scen == "dyson" and y is not None and y.get("operator", {}).get("kind") != "dyson":
        errs.append(("yosida.operator.kind", "dyson scenario requires operator kind 'dyson'"))
    try:
        problem = build_problem(prob)
    except (TcilabError, KeyError, TypeError) as e:
        errs.append(("problem", str(e)))
        problem = None
    if op is not None and problem is not None:
        if not bool(np.all(op.contains(problem.initial_point))):
            errs.append(("problem.initial_point", "initial point must lie in the operator domain"))
    if "perturbation" in doc:
        try:
            perturbation_form(doc["perturbation"], d)
        except TcilabError as e:
            errs.append(("perturbation", str(e)))
    ineq = doc.get("inequalities", [])
    if "prop1" in ineq and problem is not None:
        s = doc.get("bounds", {}).get("sigma_sup", problem.sigma_sup)
        if s is None:
            errs.append(("bounds.sigma_sup",
                         "prop1 needs a bounded diffusion; declare sigma_sup or use prop2"))
    return errs


def parse_document(doc) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError([("", "config must be a mapping")])
    errors = [(_path_of(e), e.message) for e in
              sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))]
    if not errors:
        errors = _semantic_errors(doc)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(doc)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a UTF-8 YAML (or JSON) config document."""
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as e:
        raise ConfigError([("", "malformed document: %s" % e)])
    return parse_document(doc)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
