"""Experiment configuration: JSON schema validation, defaults and hashing."""
from __future__ import annotations

import copy
import hashlib
import json

import jsonschema

from .errors import ConfigInvalid

KINDS = ("meanfield", "double_well_sample", "gp_univariate", "gp_multivariate",
         "gp_nongaussian", "finite_verify")

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_COUNT = {"type": "integer", "minimum": 1}
_FRACTION = {"type": "number", "minimum": 0, "exclusiveMaximum": 1}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1}

_COMMON = {
    "kind": {"enum": list(KINDS)},
    "seed": _SEED,
    "output_dir": {"type": "string"},
}

_SAMPLER = {
    "n_walkers": _COUNT,
    "steps": _COUNT,
    "burn_in": _FRACTION,
    "window_constant": _POS,
}

_DATASET = {
    "type": "object",
    "properties": {"seed": _SEED, "m": _COUNT, "n": _COUNT},
    "additionalProperties": False,
}

_INIT = {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2}

_KIND_PROPERTIES = {
    "meanfield": {
        "beta": _POS,
        "sigma": _POS,
        "dt": _POS,
        "t_end": _POS,
        "dynamics": {"enum": ["nonlinear", "linear"]},
        "grid": {
            "type": "object",
            "properties": {"lower": {"type": "number"}, "upper": {"type": "number"},
                           "size": {"type": "integer", "minimum": 2}},
            "additionalProperties": False,
        },
        "stride": _COUNT,
        "snapshot_times": {"type": "array", "items": _NONNEG},
    },
    "double_well_sample": {"beta": _POS, "sigma": _POS, **_SAMPLER},
    "gp_univariate": {"proposal_variance": _POS, "dataset": _DATASET, "init": _INIT,
                      **_SAMPLER},
    "gp_multivariate": {
        "proposal_diag": {"type": "array", "items": _POS, "minItems": 3, "maxItems": 3},
        "dataset": _DATASET, "init": _INIT, **_SAMPLER},
    "gp_nongaussian": {
        "u_proposal_diag": {"type": "array", "items": _POS, "minItems": 3, "maxItems": 3},
        "v_proposal_variance": _POS,
        "n_inner": _COUNT,
        "dataset": _DATASET, "init": _INIT, **_SAMPLER},
    "finite_verify": {
        "n_instances": _COUNT,
        "max_states": {"type": "integer", "minimum": 2, "maximum": 6},
        "max_walkers": {"type": "integer", "minimum": 1, "maximum": 3},
        "tolerance": _POS,
    },
}

_SAMPLER_DEFAULTS = {"n_walkers": 50, "steps": 100_000, "burn_in": 0.1, "window_constant": 5.0}

DEFAULTS = {
    "meanfield": {"beta": 5.0, "sigma": 0.0125, "dt": 0.01, "t_end": 25.0,
                  "dynamics": "nonlinear",
                  "grid": {"lower": -2.0, "upper": 2.0, "size": 1000},
                  "stride": 10, "snapshot_times": []},
    "double_well_sample": {"beta": 5.0, "sigma": 0.25, **_SAMPLER_DEFAULTS},
    "gp_univariate": {"proposal_variance": 0.01, "dataset": {"seed": 2024, "m": 40, "n": 1},
                      "init": [0.5, 1.5], **_SAMPLER_DEFAULTS},
    "gp_multivariate": {"proposal_diag": [0.1, 0.01, 0.01],
                        "dataset": {"seed": 2024, "m": 40, "n": 3},
                        "init": [0.5, 1.5], **_SAMPLER_DEFAULTS},
    "gp_nongaussian": {"u_proposal_diag": [0.001, 0.001, 0.0001], "v_proposal_variance": 0.001,
                       "n_inner": 30, "dataset": {"seed": 2024, "m": 40, "n": 1},
                       "init": [0.5, 1.5], **_SAMPLER_DEFAULTS},
    "finite_verify": {"n_instances": 50, "max_states": 3, "max_walkers": 2,
                      "tolerance": 1e-10},
}


def schema(kind):
    """JSON schema for one experiment kind; unknown keys are rejected."""
    return {
        "type": "object",
        "properties": {**_COMMON, **_KIND_PROPERTIES[kind]},
        "required": ["kind"],
        "additionalProperties": False,
    }


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate(raw):
    """Validate a config mapping and fill defaults.

    Raises
    ------
    ConfigInvalid
        With one message per offending field.
    """
    if not isinstance(raw, dict):
        raise ConfigInvalid(["config must be a JSON object"])
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigInvalid([f"kind: must be one of {', '.join(KINDS)} (got {kind!r})"])
    validator = jsonschema.Draft202012Validator(schema(kind))
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigInvalid([f"{'.'.join(str(p) for p in e.absolute_path) or '<root>'}: "
                             f"{e.message}" for e in errors])
    cfg = _merge({"kind": kind, "seed": 0, **DEFAULTS[kind]}, raw)
    cfg.pop("output_dir", None)
    problems = []
    if kind == "meanfield" and not cfg["grid"]["upper"] > cfg["grid"]["lower"]:
        problems.append("grid: upper must exceed lower")
    if kind == "meanfield" and not cfg["grid"]["lower"] < 0 < cfg["grid"]["upper"]:
        problems.append("grid: must span negative and positive values")
    if "init" in cfg and not cfg["init"][0] < cfg["init"][1]:
        problems.append("init: lower bound must be below upper bound")
    if kind == "gp_multivariate" and cfg["dataset"]["n"] < 1:
        problems.append("dataset.n: must be >= 1")
    if kind in ("gp_univariate", "gp_nongaussian") and cfg["dataset"]["n"] != 1:
        problems.append("dataset.n: the univariate experiments need n = 1")
    if problems:
        raise ConfigInvalid(problems)
    return cfg


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid([f"<file>: not valid JSON ({exc})"]) from exc
    return raw


def canonical_json(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(cfg):
    """SHA-256 of the canonical JSON of the resolved config, seed excluded.

    Runs that differ only in the master seed share a hash; the seed is
    recorded next to it.
    """
    body = {k: v for k, v in cfg.items() if k != "seed"}
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()
