"""Experiment configuration: JSON documents validated against a published schema."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from ..noise import NoiseModel
from ..protocol import DEFAULT_PROBE_ORDER, ProtocolConfig

CASE_IDS = ("case1a", "case1b", "case1c", "case2_qpt", "case3_random", "custom")


class ConfigError(ValueError):
    pass


_TIME = {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "inf"}]}
_NUM_OR_LIST = {"oneOf": [_TIME, {"type": "array", "items": _TIME, "minItems": 1}]}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "W4 resetting experiment",
    "type": "object",
    "additionalProperties": False,
    "required": ["case_id"],
    "properties": {
        "case_id": {"enum": list(CASE_IDS)},
        "protocol": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "initial_target": {"enum": ["0", "1", "+", "-", "i", "-i"]},
                "axis": {"enum": ["x", "y", "z"]},
                "phi_over_pi": {"type": "number", "minimum": 0, "exclusiveMaximum": 2},
                "interaction": {"enum": ["XZ_iYX", "mZZ_iYX", "random"]},
                "probe_order": {
                    "type": "array",
                    "items": {"enum": [0, 1, 3, 4]},
                    "minItems": 4,
                    "maxItems": 4,
                    "uniqueItems": True,
                },
                "projector_mode": {"enum": ["full6", "reduced3", None]},
                "prep_idle_us": {"type": "number", "minimum": 0},
            },
        },
        "noise": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "t1": _NUM_OR_LIST,
                        "t_phi": _NUM_OR_LIST,
                        "duration_single": {"type": "number", "exclusiveMinimum": 0},
                        "duration_double": {"type": "number", "exclusiveMinimum": 0},
                        "idle_decoherence": {"type": "boolean"},
                        "exponential": {"type": "boolean"},
                        "calibrate": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["target", "value"],
                            "properties": {
                                "target": {"enum": ["five_qubit_fidelity", "initial_mixed_D"]},
                                "value": {"type": "number"},
                            },
                        },
                    },
                },
            ]
        },
        "sweep": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["phi_over_pi"],
                    "properties": {
                        "phi_over_pi": {
                            "type": "array",
                            "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 2},
                            "minItems": 1,
                        }
                    },
                },
            ]
        },
        "n_random": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 1}]},
        "initial_states": {
            "oneOf": [
                {"type": "null"},
                {"type": "array", "items": {"enum": ["0", "1", "+", "-", "i", "-i"]}, "minItems": 1},
            ]
        },
        "tomography": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "shots": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
                        "n_bootstrap": {"type": "integer", "minimum": 1},
                        "order": {"enum": ["cp_first", "subspace_first"]},
                    },
                },
            ]
        },
        "output_dir": {"type": "string", "minLength": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
    },
}

_SWEEP_1A = [k / 16 for k in range(1, 9)]
_SWEEP_TAIL = [k / 16 for k in range(5, 9)]

PRESETS: dict[str, dict[str, Any]] = {
    "case1a": {
        "protocol": {"initial_target": "-", "axis": "z", "interaction": "XZ_iYX", "phi_over_pi": 0.375},
        "sweep": {"phi_over_pi": _SWEEP_1A},
    },
    "case1b": {
        "protocol": {"initial_target": "1", "axis": "x", "interaction": "mZZ_iYX", "phi_over_pi": 0.375},
        "sweep": {"phi_over_pi": _SWEEP_TAIL},
    },
    "case1c": {
        "protocol": {
            "initial_target": "-",
            "axis": "z",
            "interaction": "XZ_iYX",
            "phi_over_pi": 0.375,
            "prep_idle_us": 1.0,
        },
        "sweep": {"phi_over_pi": _SWEEP_TAIL},
    },
    "case2_qpt": {
        "protocol": {"axis": "z", "phi_over_pi": 0.0, "interaction": "XZ_iYX"},
        "initial_states": ["0", "1", "+", "i", "-", "-i"],
        "tomography": {"shots": 10000, "n_bootstrap": 200, "order": "cp_first"},
    },
    "case3_random": {
        "protocol": {"initial_target": "1", "axis": "z", "phi_over_pi": 0.0, "interaction": "random"},
        "n_random": 100,
    },
    "custom": {"protocol": {}},
}

DEFAULTS: dict[str, Any] = {
    "protocol": {
        "initial_target": "-",
        "axis": "z",
        "phi_over_pi": 0.0,
        "interaction": "XZ_iYX",
        "probe_order": list(DEFAULT_PROBE_ORDER),
        "projector_mode": None,
        "prep_idle_us": 0.0,
    },
    "noise": None,
    "sweep": None,
    "n_random": None,
    "initial_states": None,
    "tomography": None,
    "output_dir": "w4reset_out",
    "master_seed": 0,
    "workers": 1,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'.'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))


@dataclass
class ExperimentConfig:
    doc: dict

    @classmethod
    def from_dict(cls, doc: dict, overrides: dict | None = None) -> "ExperimentConfig":
        validate(doc)
        if overrides:
            doc = _merge(doc, overrides)
            validate(doc)
        case = doc["case_id"]
        full = _merge(_merge(DEFAULTS, PRESETS[case]), doc)
        # a user-supplied mode replaces the preset's mode
        if "n_random" in doc and doc["n_random"] is not None and "sweep" not in doc:
            full["sweep"] = None
        if "sweep" in doc and doc["sweep"] is not None and "n_random" not in doc:
            full["n_random"] = None
        validate(full)
        if full["sweep"] is not None and full["n_random"] is not None:
            raise ConfigError("invalid config:\n  sweep and n_random are mutually exclusive")
        if full["protocol"]["interaction"] == "random" and full["sweep"] is not None:
            raise ConfigError("invalid config:\n  sweep needs a deterministic interaction")
        return cls(full)

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc, overrides)

    @property
    def case_id(self) -> str:
        return self.doc["case_id"]

    @property
    def mode(self) -> str:
        if self.doc["sweep"] is not None:
            return "sweep"
        if self.doc["n_random"] is not None:
            return "random"
        if self.case_id == "case2_qpt":
            return "qpt"
        return "single"

    @property
    def output_dir(self) -> Path:
        return Path(self.doc["output_dir"])

    @property
    def master_seed(self) -> int:
        return int(self.doc["master_seed"])

    @property
    def workers(self) -> int:
        return int(self.doc["workers"])

    def noise_model(self) -> NoiseModel | None:
        spec = self.doc["noise"]
        if spec is None:
            return None
        kw = {k: v for k, v in spec.items() if k != "calibrate"}
        for key in ("t1", "t_phi"):
            if key in kw:
                kw[key] = _coherence(kw[key])
        return NoiseModel(**kw)

    def protocol_config(self, **changes) -> ProtocolConfig:
        p = dict(self.doc["protocol"], **changes)
        interaction = p["interaction"]
        if interaction == "random":
            raise ConfigError("a random interaction needs a per-run unitary")
        return ProtocolConfig(
            initial_target=p["initial_target"],
            axis=p["axis"],
            phi=float(p["phi_over_pi"]) * math.pi,
            interaction=interaction,
            probe_order=tuple(p["probe_order"]),
            projector_mode=p["projector_mode"],
            noise=self.noise_model(),
            prep_idle_us=float(p["prep_idle_us"]),
            seed=self.master_seed,
        )

    def with_noise(self, model: NoiseModel | None) -> "ExperimentConfig":
        doc = copy.deepcopy(self.doc)
        doc["noise"] = None if model is None else noise_to_json(model)
        return ExperimentConfig(doc)

    def to_json(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True)


def _coherence(v):
    if isinstance(v, str):
        return math.inf
    if isinstance(v, list):
        return tuple(math.inf if isinstance(x, str) else float(x) for x in v)
    return float(v)


def noise_to_json(model: NoiseModel) -> dict:
    d = model.to_dict()
    for key in ("t1", "t_phi"):
        vals = ["inf" if math.isinf(x) else x for x in d[key]]
        d[key] = vals
    return d


def derive_seed(master_seed: int, case_id: str, index: int) -> int:
    """Stable 63-bit seed from (master seed, case, run index)."""
    h = hashlib.sha256(f"{master_seed}:{case_id}:{index}".encode()).digest()
    return int.from_bytes(h[:8], "big") >> 1


def parse_override(text: str) -> dict:
    """``a.b.c=value`` (value parsed as JSON when possible) to a nested dict."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    out: dict = {}
    node = out
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def as_builtin(x):
    """numpy scalars and arrays to JSON-friendly Python values."""
    if isinstance(x, dict):
        return {k: as_builtin(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [as_builtin(v) for v in x]
    if isinstance(x, np.ndarray):
        return as_builtin(x.tolist())
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x
