"""Benchmark target densities with analytic gradients.

Models are selected by name through :func:`make_model`; per-model parameters
arrive as a plain dict (typically from the harness config file) and are
validated strictly so config typos fail loudly.
"""

from __future__ import annotations

from .base import TargetModel, check_gradient
from .funnel import Funnel
from .gaussian import IidGaussian
from .lighthouse import Lighthouse, load_flash_data
from .mixture import GaussianMixture
from .schools import EightSchools, load_school_data
from .stochvol import StochVol, load_returns_data, simulate_returns

# Allowed config keys per model; used by the strict config parser as well.
MODEL_PARAM_KEYS = {
    "funnel": ("dim", "sigma"),
    "normal": ("dim", "sd"),
    "mixture": ("weights", "locations", "scales"),
    "eight_schools": ("dataset",),
    "lighthouse": ("flashes", "dataset"),
    "stoch_vol": ("dataset", "n_steps", "mu", "sigma", "phi", "sim_seed"),
}

MODEL_NAMES = tuple(sorted(MODEL_PARAM_KEYS))


def make_model(name: str, params: dict | None = None) -> TargetModel:
    """Build a benchmark model from its name and a parameter dict."""
    params = dict(params or {})
    if name not in MODEL_PARAM_KEYS:
        raise ValueError(f"unknown model '{name}'; known: {', '.join(MODEL_NAMES)}")
    for key in params:
        if key not in MODEL_PARAM_KEYS[name]:
            raise ValueError(f"model '{name}' does not take parameter '{key}'")

    if name == "funnel":
        return Funnel(dim=params.get("dim", 2), sigma=params.get("sigma", 3.0))
    if name == "normal":
        return IidGaussian(dim=params.get("dim", 1), sd=params.get("sd", 1.0))
    if name == "mixture":
        kwargs = {k: params[k] for k in ("weights", "locations", "scales") if k in params}
        return GaussianMixture(**kwargs)
    if name == "eight_schools":
        if "dataset" in params:
            y, sigma = load_school_data(params["dataset"])
            return EightSchools(y, sigma)
        return EightSchools()
    if name == "lighthouse":
        if "dataset" in params and "flashes" in params:
            raise ValueError("lighthouse takes either 'flashes' or 'dataset', not both")
        if "dataset" in params:
            return Lighthouse(load_flash_data(params["dataset"]))
        if "flashes" in params:
            return Lighthouse(params["flashes"])
        return Lighthouse()
    # stoch_vol
    if "dataset" in params:
        extra = set(params) - {"dataset"}
        if extra:
            raise ValueError("stoch_vol with 'dataset' takes no simulation parameters")
        return StochVol(load_returns_data(params["dataset"]))
    kwargs = {}
    if "n_steps" in params:
        kwargs["n_steps"] = params["n_steps"]
    if "sim_seed" in params:
        kwargs["seed"] = params["sim_seed"]
    for key in ("mu", "sigma", "phi"):
        if key in params:
            kwargs[key] = params[key]
    return StochVol.synthetic(**kwargs)


__all__ = [
    "TargetModel",
    "check_gradient",
    "Funnel",
    "IidGaussian",
    "GaussianMixture",
    "EightSchools",
    "Lighthouse",
    "StochVol",
    "simulate_returns",
    "load_school_data",
    "load_flash_data",
    "load_returns_data",
    "make_model",
    "MODEL_NAMES",
    "MODEL_PARAM_KEYS",
]
