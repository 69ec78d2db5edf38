"""
A module for dp solver in the app.services package.
"""

import logging
from collections.abc import Callable
from typing import NamedTuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import logsumexp, softmax

from app.config.config import get_settings
from app.exceptions.exceptions import (
    ConvergenceError,
    DimensionMismatchError,
    NumericalDomainError,
)
from app.schemas.arrays import FloatArray
from app.schemas.mixture import GumbelMixture
from app.schemas.model import CCPMatrix, DDCModel, EmaxConfig, EmaxSolution
from app.services.numerics import EULER_GAMMA, gumbel_max_excess

logger: logging.Logger = logging.getLogger(__name__)

_EXP_CLIP: float = 700.0

Evaluation = tuple[FloatArray, FloatArray]


class MixtureTerms(NamedTuple):
    """
    Closed-form pieces of the Bellman operator at one Emax candidate.

    Shapes use K states, m components, J shock coordinates and D = J + 1
    actions.
    """

    values: FloatArray  # (K, D) choice-specific values v
    sigmas: FloatArray  # (m,)
    z: FloatArray  # (K, m, J) scaled values of the shocked actions
    softmax_weights: FloatArray  # (K, m, J)
    a: FloatArray  # (K, m)
    excess: FloatArray  # (K, m) h(a), so that Q_k = v0 + sigma_k h
    component_probs: FloatArray  # (K, m, D) choice probabilities by component
    component_emax: FloatArray  # (K, m)
    ccp: FloatArray  # (K, D)
    emax: FloatArray  # (K,)


def default_emax_config() -> EmaxConfig:
    """
    Solver settings taken from the environment

    :return: The solver configuration
    :rtype: EmaxConfig
    """
    settings = get_settings()
    return EmaxConfig(
        tol=settings.EMAX_TOL,
        switch_tol=settings.EMAX_SWITCH_TOL,
        max_successive=settings.EMAX_MAX_SUCCESSIVE,
        max_newton=settings.EMAX_MAX_NEWTON,
    )


def choice_values(model: DDCModel, q: FloatArray) -> FloatArray:
    """
    Choice-specific values v(x, d) = u(x, d) + beta G^d_x . Q

    :param model: The model
    :type model: DDCModel
    :param q: Emax candidate, shape (K,)
    :type q: FloatArray
    :return: Array of shape (K, J+1)
    :rtype: FloatArray
    :raises NumericalDomainError: If some value is not finite
    """
    values: FloatArray = model.utilities + model.beta * (
        model.transitions @ q
    ).T
    if not np.all(np.isfinite(values)):
        raise NumericalDomainError(
            detail="Choice-specific values must be finite"
        )
    return values


def mixture_terms(
    model: DDCModel, mix: GumbelMixture, q: FloatArray
) -> MixtureTerms:
    """
    Evaluate the closed-form Emax and choice probabilities under a Gumbel
     mixture

    :param model: The model
    :type model: DDCModel
    :param mix: Shock distribution of the J non-baseline actions
    :type mix: GumbelMixture
    :param q: Emax candidate, shape (K,)
    :type q: FloatArray
    :return: The closed-form terms
    :rtype: MixtureTerms
    :raises DimensionMismatchError: If the mixture dimension is not J
    """
    if mix.dim != model.J:
        raise DimensionMismatchError(
            detail=f"Mixture dimension {mix.dim} differs from J={model.J}"
        )
    values: FloatArray = choice_values(model, q)
    sigmas: FloatArray = mix.sigmas
    z: FloatArray = (
        values[:, None, 1:] + mix.locations[None, :, :]
    ) / sigmas[None, :, None]
    log_total: FloatArray = logsumexp(z, axis=2)
    weights: FloatArray = np.exp(z - log_total[:, :, None])
    a: FloatArray = values[:, :1] / sigmas[None, :] + EULER_GAMMA - log_total
    with np.errstate(under="ignore"):
        tail: FloatArray = np.exp(np.minimum(-a, _EXP_CLIP))
        p_base: FloatArray = np.exp(-tail)
        p_other: FloatArray = -np.expm1(-tail)
    excess: FloatArray = gumbel_max_excess(a)
    component_probs: FloatArray = np.concatenate(
        [p_base[:, :, None], weights * p_other[:, :, None]], axis=2
    )
    component_emax: FloatArray = values[:, :1] + sigmas[None, :] * excess
    ccp: FloatArray = np.clip(
        np.einsum("k,xkd->xd", mix.weights, component_probs), 0.0, 1.0
    )
    return MixtureTerms(
        values=values,
        sigmas=sigmas,
        z=z,
        softmax_weights=weights,
        a=a,
        excess=excess,
        component_probs=component_probs,
        component_emax=component_emax,
        ccp=ccp,
        emax=component_emax @ mix.weights,
    )


def emax_apply(
    model: DDCModel, mix: GumbelMixture, q: FloatArray
) -> FloatArray:
    """
    One application of the Bellman operator T(Q)

    :param model: The model
    :type model: DDCModel
    :param mix: Shock distribution
    :type mix: GumbelMixture
    :param q: Emax candidate
    :type q: FloatArray
    :return: T(Q), shape (K,)
    :rtype: FloatArray
    """
    return mixture_terms(model, mix, q).emax


def ccps(model: DDCModel, mix: GumbelMixture, q: FloatArray) -> CCPMatrix:
    """
    Conditional choice probabilities implied by an Emax candidate

    :param model: The model
    :type model: DDCModel
    :param mix: Shock distribution
    :type mix: GumbelMixture
    :param q: Emax candidate
    :type q: FloatArray
    :return: The CCP matrix
    :rtype: CCPMatrix
    """
    return CCPMatrix(probabilities=mixture_terms(model, mix, q).ccp)


def _jacobian(model: DDCModel, probabilities: FloatArray) -> FloatArray:
    return np.asarray(
        model.beta
        * np.einsum("xd,dxy->xy", probabilities, model.transitions)
    )


def bellman_jacobian(model: DDCModel, ccp: CCPMatrix) -> FloatArray:
    """
    Derivative of the Bellman operator, beta sum_d p(d|x) G^d_{xy}

    :param model: The model
    :type model: DDCModel
    :param ccp: Choice probabilities at the evaluation point
    :type ccp: CCPMatrix
    :return: K x K matrix whose rows sum to beta
    :rtype: FloatArray
    """
    return _jacobian(model, ccp.probabilities)


def solve_fixed_point(
    model: DDCModel,
    evaluate: Callable[[FloatArray], Evaluation],
    q0: FloatArray | None,
    config: EmaxConfig,
) -> EmaxSolution:
    """
    Successive approximation followed by Newton-Kantorovich steps
     Q <- Q - [I - T'(Q)]^{-1} (Q - T(Q)).

    The LU factors of I - T' at the returned Q are kept on the solution.

    :param model: The model supplying beta and G
    :type model: DDCModel
    :param evaluate: Maps Q to (T(Q), choice probabilities at Q)
    :type evaluate: Callable[[FloatArray], Evaluation]
    :param q0: Warm start; zeros when None
    :type q0: FloatArray | None
    :param config: Solver settings
    :type config: EmaxConfig
    :return: The solution, flagged when the budget ran out
    :rtype: EmaxSolution
    """
    q: FloatArray = (
        np.zeros(model.n_states)
        if q0 is None
        else np.array(q0, dtype=np.float64)
    )
    identity: FloatArray = np.eye(model.n_states)
    trace: list[float] = []
    successive: int = 0
    newton: int = 0
    while True:
        tq, probabilities = evaluate(q)
        residual: float = float(np.max(np.abs(tq - q)))
        if not np.isfinite(residual):
            residual = float("inf")
        trace.append(residual)
        logger.debug(f"Emax residual {residual:.3e}")
        if residual <= config.tol or residual == float("inf"):
            break
        if residual > config.switch_tol and successive < config.max_successive:
            q = tq
            successive += 1
            continue
        if newton >= config.max_newton:
            break
        step_lu = lu_factor(identity - _jacobian(model, probabilities))
        q = q - lu_solve(step_lu, q - tq)
        newton += 1
    converged: bool = residual <= config.tol
    factorization = None
    if np.all(np.isfinite(probabilities)):
        factorization = lu_factor(identity - _jacobian(model, probabilities))
    if not converged:
        logger.warning(
            f"Emax solver stopped at residual {residual:.3e} after"
            f" {successive} successive and {newton} Newton steps"
        )
    return EmaxSolution(
        q=q,
        residual=residual,
        successive_iterations=successive,
        newton_iterations=newton,
        converged=converged,
        tolerance=config.tol,
        residual_trace=trace,
        factorization=factorization,
    )


def solve_emax(
    model: DDCModel,
    mix: GumbelMixture,
    q0: FloatArray | None = None,
    config: EmaxConfig | None = None,
) -> EmaxSolution:
    """
    Fixed point of the Bellman operator under a Gumbel mixture

    :param model: The model
    :type model: DDCModel
    :param mix: Shock distribution
    :type mix: GumbelMixture
    :param q0: Warm start
    :type q0: FloatArray | None
    :param config: Solver settings, from the environment when None
    :type config: EmaxConfig | None
    :return: The solution
    :rtype: EmaxSolution
    """

    def evaluate(q: FloatArray) -> Evaluation:
        terms: MixtureTerms = mixture_terms(model, mix, q)
        return terms.emax, terms.ccp

    return solve_fixed_point(
        model, evaluate, q0, config or default_emax_config()
    )


class LogitSolution(NamedTuple):
    """Dynamic logit Emax with its choice probabilities."""

    solution: EmaxSolution
    ccp: CCPMatrix


def logit_evaluate(model: DDCModel, q: FloatArray) -> Evaluation:
    """
    Log-sum-exp Emax and softmax probabilities with i.i.d. Gumbel shocks
     on every action

    :param model: The model
    :type model: DDCModel
    :param q: Emax candidate
    :type q: FloatArray
    :return: (T(Q), p)
    :rtype: Evaluation
    """
    values: FloatArray = choice_values(model, q)
    return logsumexp(values, axis=1), softmax(values, axis=1)


def logit_emax_and_ccps(
    model: DDCModel,
    q0: FloatArray | None = None,
    config: EmaxConfig | None = None,
) -> LogitSolution:
    """
    Solve the dynamic logit model

    :param model: The model
    :type model: DDCModel
    :param q0: Warm start
    :type q0: FloatArray | None
    :param config: Solver settings
    :type config: EmaxConfig | None
    :return: Emax solution and CCPs
    :rtype: LogitSolution
    :raises ConvergenceError: If the solver does not converge
    """
    solution: EmaxSolution = solve_fixed_point(
        model,
        lambda q: logit_evaluate(model, q),
        q0,
        config or default_emax_config(),
    )
    if not solution.converged:
        raise ConvergenceError(
            detail=f"Dynamic logit Emax did not converge (residual"
            f" {solution.residual:.3e})",
            residual=solution.residual,
            trace=solution.residual_trace,
        )
    _, probabilities = logit_evaluate(model, solution.q)
    return LogitSolution(
        solution=solution, ccp=CCPMatrix(probabilities=probabilities)
    )
