"""Run configuration: defaults per command, strict validation and hashing.

A configuration is one JSON object with the sections ``model``,
``density``, ``grid`` and ``experiment``. User documents are merged over
the command defaults section by section; any key that the defaults do
not know is rejected.
"""

import copy
import hashlib
import json

import numpy as np

from .densities import make_density
from .errors import ConfigError
from .operator import AlloyModel, SingleSitePotential
from .toeplitz import ConvolutionVector

SECTIONS = ("model", "density", "grid", "experiment")
U64_MAX = 2**64 - 1

_MODEL = {"alpha": [1.0, -0.5], "kappa": 10.0, "v0_amplitude": 0.0}
_TRIANGULAR = {"name": "triangular", "params": {}}

DEFAULTS = {
    "toeplitz-check": {
        "model": {"alpha": [1.0, -1.0]},
        "density": {},
        "grid": {"l": list(range(2, 65))},
        "experiment": {"trials": 1000, "dims": [1, 2], "max_offsets": 5, "max_l": 16,
                       "inverse_tol": 1e-10, "bound_tol": 1e-9},
    },
    "density-examples": {
        "model": {},
        "density": dict(_TRIANGULAR),
        "grid": {"l_max": 8},
        "experiment": {"rho_tol": 1e-4, "divergence_l": 4, "divergence_j": 1,
                       "divergence_a": 0.5, "divergence_m_max": 10,
                       "divergence_threshold": 100.0, "gradient_instances": 24,
                       "gradient_max_l": 6, "gradient_tol": 1e-6},
    },
    "wegner": {
        "model": dict(_MODEL),
        "density": dict(_TRIANGULAR),
        "grid": {"l": [20, 40, 80], "m": 5},
        "experiment": {"samples": 500, "eps_min": 0.01, "eps_max": 1.0, "n_eps": 13,
                       "percentile": 5.0, "spacing_factor": 1.0,
                       "curvature_fraction": 0.5, "bootstrap": 200,
                       "eps_slope_tol": 0.15, "vol_slope_tol": 0.2},
    },
    "ids": {
        "model": dict(_MODEL),
        "density": dict(_TRIANGULAR),
        "grid": {"l": [20, 40, 80], "m": 5},
        "experiment": {"samples": 200, "percentiles": [20.0, 40.0, 60.0],
                       "n_energies": 41, "bootstrap": 400, "fixed_coupling": None},
    },
    "msa": {
        "model": dict(_MODEL),
        "density": dict(_TRIANGULAR),
        "grid": {"l": [3, 4, 5, 6, 7, 8], "m": 8},
        "experiment": {"energy_offset": 0.5, "mesh_tol": 0.2, "gamma": 0.1,
                       "samples": 100, "probability_l": 6, "probability_offset": 50.0,
                       "identity_instances": 50, "identity_tol": 1e-8},
    },
    "spav": {
        "model": {},
        "density": dict(_TRIANGULAR),
        "grid": {"m": [2, 4]},
        "experiment": {"instances": 100, "main_instances": 5, "main_samples": 200},
    },
}

# Reduced sizes for quick runs; merged over the defaults before the user file.
SMOKE = {
    "toeplitz-check": {"grid": {"l": list(range(2, 17))}, "experiment": {"trials": 100}},
    "density-examples": {"grid": {"l_max": 5},
                         "experiment": {"divergence_m_max": 8, "divergence_threshold": 50.0,
                                        "gradient_instances": 4, "gradient_max_l": 4}},
    "wegner": {"grid": {"l": [10]}, "experiment": {"samples": 50, "n_eps": 7}},
    "ids": {"grid": {"l": [10, 20]}, "experiment": {"samples": 40, "bootstrap": 100,
                                                    "n_energies": 11}},
    "msa": {"grid": {"l": [3, 4, 5], "m": 4},
            "experiment": {"samples": 100, "probability_l": 4, "identity_instances": 5}},
    "spav": {"experiment": {"instances": 8, "main_instances": 1, "main_samples": 50}},
}


def _merge(base, update, path):
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown key {where!r}")
        ref = base[key]
        if isinstance(ref, dict) and key != "params":
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be an object")
            out[key] = _merge(ref, value, where)
        else:
            out[key] = _check_type(ref, value, where)
    return out


def _check_type(ref, value, where):
    if ref is None or value is None:
        return value
    if isinstance(ref, bool):
        ok = isinstance(value, bool)
    elif isinstance(ref, (int, float)):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if ok and isinstance(ref, int) and not isinstance(value, int):
            raise ConfigError(f"{where!r} must be an integer")
    elif isinstance(ref, (list, dict, str)):
        ok = isinstance(value, type(ref))
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{where!r} has the wrong type ({type(value).__name__})")
    return value


def resolve(command, document=None, smoke=False):
    """Command defaults, optionally reduced for smoke runs, overlaid by ``document``."""
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}")
    cfg = copy.deepcopy(DEFAULTS[command])
    if smoke:
        cfg = _merge(cfg, SMOKE[command], "")
    if document is not None:
        if not isinstance(document, dict):
            raise ConfigError("configuration must be a JSON object")
        cfg = _merge(cfg, document, "")
    return cfg


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= U64_MAX:
        raise ConfigError(f"seed {seed} is not an unsigned 64-bit integer")
    return seed


def config_hash(command, cfg, seed):
    """Short SHA-256 of the canonical JSON of command, configuration and seed."""
    doc = {"command": command, "config": cfg, "seed": int(seed)}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- builders -----------------------------------------------------------------


def build_alpha(spec):
    """[a0, a1, ...] on offsets 0, 1, ... (d = 1) or [[offset, value], ...]."""
    if not isinstance(spec, list) or not spec:
        raise ConfigError("model.alpha must be a non-empty list")
    try:
        if all(isinstance(v, (int, float)) for v in spec):
            return ConvolutionVector.from_sequence([float(v) for v in spec])
        coeffs = {}
        for item in spec:
            offset, value = item
            offset = tuple(int(o) for o in np.atleast_1d(offset))
            coeffs[offset] = float(value)
        return ConvolutionVector(coeffs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model.alpha: {exc}") from None


def build_density(section):
    try:
        return make_density(section["name"], **section.get("params", {}))
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"density: {exc}") from None


def build_model(cfg):
    model = cfg["model"]
    alpha = build_alpha(model["alpha"])
    if model["kappa"] <= 0:
        raise ConfigError("model.kappa must be positive")
    u = SingleSitePotential.indicator(alpha, model["kappa"])
    return AlloyModel(build_density(cfg["density"]), u, float(model["v0_amplitude"]))
