"""
A module for counterfactual in the app.services package.
"""

import logging
from collections.abc import Callable, Mapping, Sequence
from typing import NamedTuple

import numpy as np
from pydantic import ValidationError

from app.exceptions.exceptions import ConvergenceError, InvalidModelError
from app.schemas.arrays import FloatArray
from app.schemas.mixture import GumbelMixture
from app.schemas.model import (
    CCPMatrix,
    DDCModel,
    EmaxConfig,
    EmaxSolution,
    GilleskieParams,
)
from app.schemas.run_config import COUNTERFACTUAL_KEYS
from app.services.ddc_model import (
    ABSENCE_ACTIONS,
    VISIT_ACTIONS,
    gilleskie_design,
    gilleskie_states,
)
from app.services.dp_solver import ccps, solve_emax
from app.services.likelihood import (
    ChiLayout,
    ModelFunctional,
    full_theta,
    logit_ccps,
    untransform,
)

logger: logging.Logger = logging.getLogger(__name__)

DrawFunctional = Callable[[DDCModel, CCPMatrix], float]


class DrawParameters(NamedTuple):
    """Model at a draw's utility parameters and the draw's mixture."""

    model: DDCModel
    mixture: GumbelMixture


def _illness_params(model: DDCModel) -> GilleskieParams:
    if model.name != "gilleskie" or model.gilleskie is None:
        raise InvalidModelError(
            detail=f"An illness-episode model is required, got {model.name}"
        )
    return model.gilleskie


def _episode_count(
    model: DDCModel, ccp: CCPMatrix, actions: frozenset[int]
) -> float:
    params: GilleskieParams = _illness_params(model)
    p: FloatArray = ccp.probabilities
    if p.shape != (model.n_states, model.n_actions):
        raise InvalidModelError(
            detail=f"CCPs of shape {p.shape} do not fit the model"
        )
    start: int = gilleskie_states(params.T).index((1, 0, 0))
    mass: FloatArray = np.zeros(model.n_states)
    mass[start] = 1.0
    selected: list[int] = sorted(actions)
    total: float = 0.0
    for _ in range(params.T):
        total += float(mass @ p[:, selected].sum(axis=1))
        mass = np.einsum("x,xd,dxy->y", mass, p, model.transitions)
        mass[0] = 0.0
    return total


def expected_visits(model: DDCModel, ccp: CCPMatrix) -> float:
    """
    Expected number of doctor visits in one illness episode.

    The law of states and choices is propagated forward from (1, 0, 0);
    mass reaching the well state has ended its episode and is dropped.

    :param model: Illness-episode model
    :type model: DDCModel
    :param ccp: Choice probabilities
    :type ccp: CCPMatrix
    :return: E(v) per episode
    :rtype: float
    :raises InvalidModelError: If the model is not an illness-episode model
    """
    return _episode_count(model, ccp, VISIT_ACTIONS)


def expected_absences(model: DDCModel, ccp: CCPMatrix) -> float:
    """
    Expected number of work absences in one illness episode

    :param model: Illness-episode model
    :type model: DDCModel
    :param ccp: Choice probabilities
    :type ccp: CCPMatrix
    :return: E(a) per episode
    :rtype: float
    :raises InvalidModelError: If the model is not an illness-episode model
    """
    return _episode_count(model, ccp, ABSENCE_ACTIONS)


def default_functionals(model: DDCModel) -> dict[str, DrawFunctional]:
    """
    Functionals stored with every draw of a model family

    :param model: The model
    :type model: DDCModel
    :return: Functionals keyed by column suffix
    :rtype: dict[str, DrawFunctional]
    """
    if model.name == "gilleskie":
        return {
            "expected_visits": expected_visits,
            "expected_absences": expected_absences,
        }
    return {}


def counterfactual_model(
    model: DDCModel, overrides: Mapping[str, float]
) -> DDCModel:
    """
    Illness model with an overridden consumption technology; transitions
     and utility parameters are kept

    :param model: Illness-episode model
    :type model: DDCModel
    :param overrides: New values among income, coinsurance and
     sick_leave_coverage
    :type overrides: Mapping[str, float]
    :return: The counterfactual model, the input itself when no override is
     given
    :rtype: DDCModel
    :raises InvalidModelError: If the model or an override is invalid
    """
    params: GilleskieParams = _illness_params(model)
    if not overrides:
        return model
    unknown: set[str] = set(overrides) - COUNTERFACTUAL_KEYS
    if unknown:
        raise InvalidModelError(
            detail=f"Unknown counterfactual keys: {sorted(unknown)}"
        )
    try:
        changed: GilleskieParams = GilleskieParams.model_validate(
            {**params.model_dump(), **overrides}
        )
    except ValidationError as e:
        raise InvalidModelError(
            detail=f"Invalid counterfactual overrides: {e}"
        ) from e
    logger.info(f"Counterfactual consumption technology: {dict(overrides)}")
    return model.model_copy(
        update={"design": gilleskie_design(changed), "gilleskie": changed}
    )


def draw_parameters(
    model: DDCModel, free_indices: Sequence[int], m: int, chi: FloatArray
) -> DrawParameters:
    """
    Decode a stored draw into its model and mixture

    :param model: Model holding the fixed utility parameters
    :type model: DDCModel
    :param free_indices: Sampled theta positions
    :type free_indices: Sequence[int]
    :param m: Component count of the draw
    :type m: int
    :param chi: Unbounded parameter vector of the draw
    :type chi: FloatArray
    :return: The decoded draw
    :rtype: DrawParameters
    """
    layout = ChiLayout(len(free_indices), m, model.J)
    theta_free, mix = untransform(chi, layout)
    return DrawParameters(
        model.with_theta(full_theta(model, free_indices, theta_free)), mix
    )


def counterfactual_draws(
    model: DDCModel,
    free_indices: Sequence[int],
    draws: Sequence[tuple[int, FloatArray]],
    overrides: Mapping[str, float],
    functional: DrawFunctional = expected_visits,
    config: EmaxConfig | None = None,
) -> FloatArray:
    """
    A functional of the counterfactual model at every posterior draw, each
     Emax solve warm-started from the previous one

    :param model: Baseline model with the fixed utility parameters
    :type model: DDCModel
    :param free_indices: Sampled theta positions
    :type free_indices: Sequence[int]
    :param draws: (m, chi) per draw
    :type draws: Sequence[tuple[int, FloatArray]]
    :param overrides: Consumption technology overrides
    :type overrides: Mapping[str, float]
    :param functional: Quantity computed from the counterfactual CCPs
    :type functional: DrawFunctional
    :param config: Emax solver settings
    :type config: EmaxConfig | None
    :return: One value per draw
    :rtype: FloatArray
    :raises ConvergenceError: If a counterfactual Emax does not converge
    """
    changed: DDCModel = counterfactual_model(model, overrides)
    values: FloatArray = np.empty(len(draws))
    q: FloatArray | None = None
    for position, (m, chi) in enumerate(draws):
        drawn: DrawParameters = draw_parameters(changed, free_indices, m, chi)
        solution: EmaxSolution = solve_emax(
            drawn.model, drawn.mixture, q, config
        )
        if not solution.converged:
            raise ConvergenceError(
                detail=f"Counterfactual Emax did not converge at draw"
                f" {position}",
                residual=solution.residual,
                trace=solution.residual_trace,
            )
        q = solution.q
        values[position] = functional(
            drawn.model, ccps(drawn.model, drawn.mixture, solution.q)
        )
    logger.info(f"Evaluated the counterfactual at {len(draws)} draws")
    return values


def logit_functionals(
    model: DDCModel,
    overrides: Mapping[str, float],
    config: EmaxConfig | None = None,
) -> dict[str, ModelFunctional]:
    """
    Baseline and counterfactual functionals under dynamic logit CCPs, for
     the delta-method comparison of the logit MLE

    :param model: The model
    :type model: DDCModel
    :param overrides: Consumption technology overrides
    :type overrides: Mapping[str, float]
    :param config: Emax solver settings
    :type config: EmaxConfig | None
    :return: Functionals of the model parameters keyed by name
    :rtype: dict[str, ModelFunctional]
    """
    if model.name != "gilleskie":
        return {}

    def baseline(fitted: DDCModel) -> float:
        return expected_visits(fitted, logit_ccps(fitted, config))

    def absences(fitted: DDCModel) -> float:
        return expected_absences(fitted, logit_ccps(fitted, config))

    def changed(fitted: DDCModel) -> float:
        altered: DDCModel = counterfactual_model(fitted, overrides)
        return expected_visits(altered, logit_ccps(altered, config))

    return {
        "expected_visits": baseline,
        "expected_absences": absences,
        "counterfactual_expected_visits": changed,
    }
