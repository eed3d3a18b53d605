"""Strict JSON run configuration for the experiment harness.

The schema below is the single source of truth: the parser validates against
it (unknown keys, duplicate keys, and type or range violations are errors
with path-qualified messages) and the ``schema`` CLI subcommand emits it
verbatim, so documented defaults cannot drift from behavior.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .models import MODEL_NAMES, MODEL_PARAM_KEYS

METHODS = ("hmc", "drhmc", "drhmc-prob")

# Defaults mirror the benchmark protocol: 50 chains, 1000 warmup iterations,
# 20000 draws, step multipliers {0.5, 1, 2, 5} around the tuned step, retry
# grids k in {2, 3, 4} and a in {2, 5, 10}.
SCHEMA = {
    "type": "object",
    "doc": "Run specification for the drhmc experiment harness.",
    "fields": {
        "model": {
            "type": "object",
            "required": True,
            "doc": "Target model selector.",
            "fields": {
                "name": {"type": "string", "required": True, "choices": list(MODEL_NAMES),
                         "doc": "Benchmark model name."},
                "params": {"type": "raw_object", "default": {},
                           "doc": "Model-specific parameters; allowed keys depend on the model."},
            },
        },
        "method": {"type": "string", "required": True, "choices": list(METHODS),
                   "doc": "Sampler: plain HMC, delayed rejection, or probabilistic delayed rejection."},
        "t_integration": {"type": "number", "required": True, "exclusive_min": 0.0,
                          "doc": "Total integration time per proposal; fixed across retry stages."},
        "eps0": {"type": "number", "default": None, "nullable": True, "exclusive_min": 0.0,
                 "doc": "Baseline step size. When omitted (or null), warmup adapts it per chain."},
        "target_accept": {"type": "number", "default": 0.8, "exclusive_min": 0.0, "exclusive_max": 1.0,
                          "doc": "Dual-averaging acceptance target used when adapting."},
        "grid": {
            "type": "object",
            "default": {},
            "doc": "Configuration grid; cells are the Cartesian product.",
            "fields": {
                "eps_multipliers": {"type": "array", "items": {"type": "number", "exclusive_min": 0.0},
                                    "min_items": 1, "default": [0.5, 1.0, 2.0, 5.0],
                                    "doc": "Multipliers applied to the baseline (or adapted) step size."},
                "k": {"type": "array", "items": {"type": "integer", "min": 1}, "min_items": 1,
                      "default": [2, 3, 4], "doc": "Maximum number of proposal stages per cell."},
                "a": {"type": "array", "items": {"type": "integer", "min": 2}, "min_items": 1,
                      "default": [2, 5, 10], "doc": "Step-size reduction factor per retry stage."},
            },
        },
        "n_chains": {"type": "integer", "min": 1, "default": 50, "doc": "Chains per grid cell."},
        "n_warmup": {"type": "integer", "min": 0, "default": 1000, "doc": "Warmup iterations per chain."},
        "n_draws": {"type": "integer", "min": 1, "default": 20000, "doc": "Sampling iterations per chain."},
        "seed": {"type": "integer", "min": 0, "default": 20240810, "doc": "Master seed; cells and chains derive from it."},
        "init": {"type": "string", "choices": ["uniform", "reference"], "default": "uniform",
                 "doc": "Chain initialization: uniform(-2,2) or an exact reference draw where available."},
        "out_dir": {"type": "string", "default": "out", "doc": "Output directory for artifacts."},
    },
}


class ConfigError(ValueError):
    """Configuration problem, with a path-qualified message."""


def _fail(path: str, message: str):
    raise ConfigError(f"{path or '<root>'}: {message}")


def _reject_duplicates(pairs):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise ConfigError(f"duplicate key '{key}'")
        seen.add(key)
    return dict(pairs)


def _validate(node, schema, path):
    kind = schema["type"]
    if node is None and schema.get("nullable"):
        return None
    if kind == "object":
        if not isinstance(node, dict):
            _fail(path, f"expected an object, got {type(node).__name__}")
        fields = schema["fields"]
        for key in node:
            if key not in fields:
                _fail(path, f"unknown key '{key}'")
        out = {}
        for key, sub in fields.items():
            child_path = f"{path}.{key}" if path else key
            if key in node:
                out[key] = _validate(node[key], sub, child_path)
            elif sub.get("required"):
                _fail(path, f"missing required key '{key}'")
            else:
                default = sub.get("default")
                if sub["type"] == "object" and isinstance(default, dict):
                    out[key] = _validate(default, sub, child_path)
                else:
                    out[key] = default
        return out
    if kind == "raw_object":
        if not isinstance(node, dict):
            _fail(path, f"expected an object, got {type(node).__name__}")
        return dict(node)
    if kind == "array":
        if not isinstance(node, list):
            _fail(path, f"expected an array, got {type(node).__name__}")
        if len(node) < schema.get("min_items", 0):
            _fail(path, f"needs at least {schema['min_items']} entries")
        return [_validate(v, schema["items"], f"{path}[{i}]") for i, v in enumerate(node)]
    if kind == "string":
        if not isinstance(node, str):
            _fail(path, f"expected a string, got {type(node).__name__}")
        choices = schema.get("choices")
        if choices and node not in choices:
            _fail(path, f"must be one of {choices}, got '{node}'")
        return node
    if kind == "boolean":
        if not isinstance(node, bool):
            _fail(path, f"expected a boolean, got {type(node).__name__}")
        return node
    if kind == "integer":
        if isinstance(node, bool) or not isinstance(node, int):
            _fail(path, f"expected an integer, got {type(node).__name__}")
    elif kind == "number":
        if isinstance(node, bool) or not isinstance(node, (int, float)):
            _fail(path, f"expected a number, got {type(node).__name__}")
    else:
        raise AssertionError(f"unhandled schema type {kind}")
    value = float(node) if kind == "number" else int(node)
    if "min" in schema and value < schema["min"]:
        _fail(path, f"must be >= {schema['min']}, got {node}")
    if "exclusive_min" in schema and value <= schema["exclusive_min"]:
        _fail(path, f"must be > {schema['exclusive_min']}, got {node}")
    if "exclusive_max" in schema and value >= schema["exclusive_max"]:
        _fail(path, f"must be < {schema['exclusive_max']}, got {node}")
    return value


@dataclass(frozen=True)
class RunSpec:
    """A validated run configuration with all defaults resolved."""

    model_name: str
    model_params: dict
    method: str
    t_integration: float
    eps0: float | None
    target_accept: float
    eps_multipliers: tuple
    stage_grid: tuple
    shrink_grid: tuple
    n_chains: int
    n_warmup: int
    n_draws: int
    seed: int
    init: str
    out_dir: str

    @property
    def adaptive(self) -> bool:
        return self.eps0 is None

    def resolved(self) -> dict:
        """Plain-dict view with the documented key names, for sidecars."""
        return {
            "model": {"name": self.model_name, "params": self.model_params},
            "method": self.method,
            "t_integration": self.t_integration,
            "eps0": self.eps0,
            "target_accept": self.target_accept,
            "grid": {
                "eps_multipliers": list(self.eps_multipliers),
                "k": list(self.stage_grid),
                "a": list(self.shrink_grid),
            },
            "n_chains": self.n_chains,
            "n_warmup": self.n_warmup,
            "n_draws": self.n_draws,
            "seed": self.seed,
            "init": self.init,
            "out_dir": self.out_dir,
        }


def spec_from_dict(raw: dict) -> RunSpec:
    resolved = _validate(raw, SCHEMA, "")
    model = resolved["model"]
    params = model["params"]
    allowed = MODEL_PARAM_KEYS[model["name"]]
    for key in params:
        if key not in allowed:
            _fail("model.params", f"model '{model['name']}' does not take '{key}'")
    grid = resolved["grid"]
    return RunSpec(
        model_name=model["name"],
        model_params=params,
        method=resolved["method"],
        t_integration=resolved["t_integration"],
        eps0=resolved["eps0"],
        target_accept=resolved["target_accept"],
        eps_multipliers=tuple(grid["eps_multipliers"]),
        stage_grid=tuple(grid["k"]),
        shrink_grid=tuple(grid["a"]),
        n_chains=resolved["n_chains"],
        n_warmup=resolved["n_warmup"],
        n_draws=resolved["n_draws"],
        seed=resolved["seed"],
        init=resolved["init"],
        out_dir=resolved["out_dir"],
    )


def parse_config(path) -> RunSpec:
    """Load and strictly validate a JSON run configuration file."""
    with open(path) as handle:
        try:
            raw = json.load(handle, object_pairs_hook=_reject_duplicates)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return spec_from_dict(raw)


def config_schema() -> dict:
    """The full schema document, including every default."""
    return json.loads(json.dumps(SCHEMA))


def config_hash(resolved: dict) -> str:
    import hashlib

    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
