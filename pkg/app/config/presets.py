"""
A module for presets in the app.config package.
"""

import copy
import logging
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from app.exceptions.exceptions import ConfigError
from app.schemas.run_config import RunConfig
from app.utils.io_utils import load_toml

logger: logging.Logger = logging.getLogger(__name__)


def _normal(mean: float, sd: float) -> dict[str, Any]:
    return {"weights": [1.0], "means": [mean], "sds": [sd]}


_COUNT_PRIOR: dict[str, Any] = {
    "dirichlet_concentration": 10.0,
    "a_m": 0.05,
    "tau": 5.0,
    "m_max": 10,
    "log_scale": _normal(0.0, 0.01),
}

PRIOR_PRESETS: dict[str, dict[str, Any]] = {
    "rust": {
        **_COUNT_PRIOR,
        "location": [
            {"weights": [0.5, 0.5], "means": [2.5, -3.0], "sds": [1.0, 7.0]}
        ],
        "log_component_scale": {
            "weights": [0.4, 0.6],
            "means": [0.0, -6.0],
            "sds": [1.0, 1.0],
        },
        "theta": {},
    },
    "gilleskie": {
        **_COUNT_PRIOR,
        "location": [_normal(0.0, 2.0)],
        "log_component_scale": _normal(0.0, 1.0),
        "theta": {5: _normal(0.0, 4.0)},
    },
    "check1": {
        **_COUNT_PRIOR,
        "location": [_normal(0.0, 3.0)],
        "log_component_scale": _normal(0.0, 1.0),
        "theta": {5: _normal(0.0, 5.0)},
    },
    "check2": {
        **_COUNT_PRIOR,
        "location": [
            {"weights": [0.5, 0.5], "means": [2.0, -3.0], "sds": [2.0, 2.0]}
        ],
        "log_component_scale": {
            "weights": [0.4, 0.6],
            "means": [0.0, -1.0],
            "sds": [1.0, 1.0],
        },
        "theta": {5: _normal(0.0, 3.0)},
    },
}

_GILLESKIE_MIXTURE: dict[str, Any] = {
    "weights": [0.5568, 0.4432],
    "locations": [[-0.4683, 3.4628, -0.0914], [0.9798, -2.2437, 1.3496]],
    "component_scales": [3.7045, 0.6378],
    "scale": 1.0,
}


def _rust(name: str, decision_makers: int) -> dict[str, Any]:
    return {
        "name": name,
        "model": {
            "kind": "rust",
            "beta": 0.999,
            "rust": {
                "theta": [5.0727, -0.002293],
                "mileage_transition": [0.3919, 0.5953],
                "states": 90,
            },
        },
        "dgp": {
            "kind": "logit",
            "seed": 20240601,
            "decision_makers": decision_makers,
        },
        "prior": {"preset": "rust"},
        "mcmc": {
            "iterations": 100_000,
            "burn_in": 20_000,
            "thin": 10,
            "hmc_per_jump": 10,
            "seed": 7,
        },
        "counterfactual": {"overrides": {}},
    }


def _gilleskie(name: str, dgp: dict[str, Any]) -> dict[str, Any]:
    return {
        "name": name,
        "model": {"kind": "gilleskie", "beta": 0.9, "gilleskie": {"T": 8}},
        "dgp": {
            "seed": 20240602,
            "individuals": 100,
            "periods": 8,
            "initial_state": 1,
            **dgp,
        },
        "prior": {"preset": "gilleskie"},
        "mcmc": {
            "iterations": 20_000,
            "burn_in": 4_000,
            "thin": 10,
            "hmc_per_jump": 10,
            "seed": 11,
        },
        "counterfactual": {"overrides": {"coinsurance": 0.0}},
    }


RUN_PRESETS: dict[str, dict[str, Any]] = {
    "rust-n3": _rust("rust-n3", 3),
    "rust-n10": _rust("rust-n10", 10),
    "gilleskie-mix": _gilleskie(
        "gilleskie-mix", {"kind": "mixture", "mixture": _GILLESKIE_MIXTURE}
    ),
    "gilleskie-logit": _gilleskie("gilleskie-logit", {"kind": "logit"}),
}


def _with_prior_preset(raw: dict[str, Any]) -> dict[str, Any]:
    prior: dict[str, Any] = dict(raw.get("prior") or {})
    preset: str = str(prior.get("preset", "custom"))
    if preset == "custom":
        return raw
    if preset not in PRIOR_PRESETS:
        raise ConfigError(
            detail=f"Unknown prior preset {preset!r}; choose among"
            f" {sorted(PRIOR_PRESETS)}"
        )
    return {**raw, "prior": {**copy.deepcopy(PRIOR_PRESETS[preset]), **prior}}


def build_run_config(raw: dict[str, Any]) -> RunConfig:
    """
    Validate nested tables into a run configuration, expanding a named
     prior preset under any explicit prior keys

    :param raw: Nested tables as parsed from TOML
    :type raw: dict[str, Any]
    :return: The run configuration
    :rtype: RunConfig
    :raises ConfigError: If validation fails
    """
    try:
        return RunConfig.model_validate(_with_prior_preset(raw))
    except ValidationError as e:
        raise ConfigError(detail=f"Invalid run configuration: {e}") from e


def load_run_config(source: str | Path) -> RunConfig:
    """
    Run configuration from a TOML file, or from a preset when the source
     is not an existing file

    :param source: File path or preset name
    :type source: str | Path
    :return: The run configuration
    :rtype: RunConfig
    :raises ConfigError: If the source is neither or does not validate
    """
    path = Path(source)
    if path.is_file():
        logger.info(f"Loading run configuration from {path}")
        return build_run_config(load_toml(path))
    name: str = str(source)
    if name in RUN_PRESETS:
        logger.info(f"Using preset {name}")
        return build_run_config(copy.deepcopy(RUN_PRESETS[name]))
    raise ConfigError(
        detail=f"{source} is neither a file nor a preset among"
        f" {sorted(RUN_PRESETS)}"
    )
