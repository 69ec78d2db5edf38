"""
A module for likelihood in the app.services package.
"""

import logging
import math
import warnings
from collections.abc import Callable, Mapping, Sequence
from typing import NamedTuple

import numpy as np
from pydantic import ValidationError
from scipy import optimize, stats
from scipy.linalg import lu_factor, lu_solve
from scipy.special import gammaln, softmax

from app.config.config import get_settings
from app.core.decorators import log_stage
from app.exceptions.exceptions import (
    ConvergenceError,
    DataMismatchError,
    DimensionMismatchError,
    InvalidMixtureError,
    NumericalDomainError,
)
from app.schemas.arrays import FloatArray
from app.schemas.chain import ChainState, PriorConfig
from app.schemas.interval import Interval
from app.schemas.mixture import GumbelMixture
from app.schemas.model import (
    CCPMatrix,
    DDCModel,
    EmaxConfig,
    EmaxSolution,
    PanelCounts,
)
from app.schemas.report import FunctionalEstimate, LogitMLEResult
from app.services.dp_solver import (
    MixtureTerms,
    default_emax_config,
    logit_emax_and_ccps,
    mixture_terms,
    solve_emax,
)
from app.services.mixture import make_mixture
from app.services.priors import (
    normal_mixture_grad,
    normal_mixture_logpdf,
    normal_mixture_sample,
)

logger: logging.Logger = logging.getLogger(__name__)

_EXP_CLIP: float = 700.0
_TINY: float = float(np.finfo(np.float64).tiny)

ModelFunctional = Callable[[DDCModel], float]


class ChiLayout(NamedTuple):
    """
    Block positions inside chi = (theta_free, log sigma, alpha_1..alpha_{m-1},
    mu_1..mu_m, log sigma_tilde_1..log sigma_tilde_m), with mu stored
    component by component.
    """

    n_free: int
    m: int
    J: int

    @property
    def size(self) -> int:
        """
        Length of chi

        :return: |theta_free| + 1 + m (J + 2) - 1
        :rtype: int
        """
        return self.n_free + self.m * (self.J + 2)

    @property
    def theta(self) -> slice:
        """
        Free utility parameters

        :return: The block slice
        :rtype: slice
        """
        return slice(0, self.n_free)

    @property
    def log_scale(self) -> int:
        """
        Position of log sigma

        :return: The index
        :rtype: int
        """
        return self.n_free

    @property
    def alpha(self) -> slice:
        """
        Log weight ratios alpha_k = log(w_k / w_m), k < m

        :return: The block slice
        :rtype: slice
        """
        start: int = self.n_free + 1
        return slice(start, start + self.m - 1)

    @property
    def mu(self) -> slice:
        """
        Component locations, m blocks of J

        :return: The block slice
        :rtype: slice
        """
        start: int = self.n_free + self.m
        return slice(start, start + self.m * self.J)

    @property
    def log_component_scale(self) -> slice:
        """
        Log relative component scales

        :return: The block slice
        :rtype: slice
        """
        start: int = self.n_free + self.m + self.m * self.J
        return slice(start, start + self.m)


class PosteriorEvaluation(NamedTuple):
    """Log posterior and its pieces at one position."""

    log_density: float
    gradient: FloatArray
    log_likelihood: float
    likelihood_gradient: FloatArray
    q: FloatArray | None
    residual: float | None


def transform(theta_free: FloatArray, mix: GumbelMixture) -> FloatArray:
    """
    Map utility parameters and a mixture to the unbounded vector chi

    :param theta_free: Free utility parameters
    :type theta_free: FloatArray
    :param mix: The mixture
    :type mix: GumbelMixture
    :return: chi
    :rtype: FloatArray
    """
    log_weights: FloatArray = np.log(mix.weights)
    return np.concatenate(
        [
            np.asarray(theta_free, dtype=np.float64),
            [math.log(mix.scale)],
            log_weights[:-1] - log_weights[-1],
            mix.locations.ravel(),
            np.log(mix.component_scales),
        ]
    )


def weights_from_alpha(alpha: FloatArray) -> FloatArray:
    """
    Softmax weights with alpha_m = 0, kept strictly positive

    :param alpha: Log weight ratios, shape (m-1,)
    :type alpha: FloatArray
    :return: Weights, shape (m,)
    :rtype: FloatArray
    """
    weights: FloatArray = np.maximum(softmax(np.append(alpha, 0.0)), _TINY)
    return weights / weights.sum()


def untransform(
    chi: FloatArray, layout: ChiLayout
) -> tuple[FloatArray, GumbelMixture]:
    """
    Inverse of transform

    :param chi: Unbounded parameter vector
    :type chi: FloatArray
    :param layout: Block layout of chi
    :type layout: ChiLayout
    :return: Free utility parameters and the mixture
    :rtype: tuple[FloatArray, GumbelMixture]
    :raises DimensionMismatchError: If chi does not fit the layout
    :raises InvalidMixtureError: If the scales leave the float range
    """
    values: FloatArray = np.asarray(chi, dtype=np.float64)
    if values.shape != (layout.size,):
        raise DimensionMismatchError(
            detail=f"chi has shape {values.shape}, layout needs"
            f" ({layout.size},)"
        )
    with np.errstate(over="ignore", under="ignore"):
        mix: GumbelMixture = make_mixture(
            weights_from_alpha(values[layout.alpha]),
            values[layout.mu].reshape(layout.m, layout.J),
            np.exp(values[layout.log_component_scale]),
            float(np.exp(values[layout.log_scale])),
        )
    return values[layout.theta].copy(), mix


def full_theta(
    model: DDCModel, free_indices: Sequence[int], theta_free: FloatArray
) -> FloatArray:
    """
    Model parameter vector with the free coordinates replaced

    :param model: The model holding the fixed values
    :type model: DDCModel
    :param free_indices: Positions of the free parameters
    :type free_indices: Sequence[int]
    :param theta_free: Their values
    :type theta_free: FloatArray
    :return: The full parameter vector
    :rtype: FloatArray
    """
    theta: FloatArray = model.theta.copy()
    theta[list(free_indices)] = theta_free
    return theta


def log_likelihood(counts: PanelCounts, ccp: CCPMatrix) -> float:
    """
    Partial log likelihood sum_{d,x} n_dx log p(d|x)

    :param counts: Choice counts
    :type counts: PanelCounts
    :param ccp: Choice probabilities
    :type ccp: CCPMatrix
    :return: The log likelihood, -inf when an observed choice has zero
     probability
    :rtype: float
    :raises DimensionMismatchError: If the shapes differ
    """
    if counts.counts.shape != ccp.probabilities.shape:
        raise DimensionMismatchError(
            detail=f"Counts {counts.counts.shape} and CCPs"
            f" {ccp.probabilities.shape} differ in shape"
        )
    return _log_likelihood(counts.counts, ccp.probabilities)


def _log_likelihood(n: FloatArray, p: FloatArray) -> float:
    observed = n > 0.0
    with np.errstate(divide="ignore"):
        return float(np.sum(n[observed] * np.log(p[observed])))


def log_m_prior(prior: PriorConfig, m: int) -> float:
    """
    log Pi(m) with Pi(m) proportional to exp(-A_m m (log m)^tau) on
     1..m_max

    :param prior: Prior settings
    :type prior: PriorConfig
    :param m: Component count
    :type m: int
    :return: The normalized log probability, -inf outside the support
    :rtype: float
    """
    if not 1 <= m <= prior.m_max:
        return -math.inf
    support: FloatArray = np.arange(1, prior.m_max + 1, dtype=np.float64)
    log_mass: FloatArray = -prior.a_m * support * np.log(support) ** prior.tau
    return float(log_mass[m - 1] - np.logaddexp.reduce(log_mass))


def weight_jacobian_logdet(weights: FloatArray) -> tuple[float, FloatArray]:
    """
    log |det| of the Jacobian of (w_1..w_{m-1}) with respect to alpha and
     its gradient by the trace identity d log det A = tr(A^{-1} dA)

    :param weights: Weights, shape (m,)
    :type weights: FloatArray
    :return: The log determinant and its gradient in alpha
    :rtype: tuple[float, FloatArray]
    """
    w: FloatArray = weights[:-1]
    n: int = w.size
    if n == 0:
        return 0.0, np.zeros(0)
    jacobian: FloatArray = np.diag(w) - np.outer(w, w)
    lu, pivots = lu_factor(jacobian)
    logdet: float = float(np.sum(np.log(np.abs(np.diag(lu)))))
    inverse: FloatArray = lu_solve((lu, pivots), np.eye(n))
    gradient: FloatArray = np.empty(n)
    for j in range(n):
        dw: FloatArray = w * ((np.arange(n) == j) - w[j])
        d_jacobian: FloatArray = (
            np.diag(dw) - np.outer(dw, w) - np.outer(w, dw)
        )
        gradient[j] = float(np.sum(inverse.T * d_jacobian))
    return logdet, gradient


def _prior_terms(
    prior: PriorConfig, m: int, chi: FloatArray, layout: ChiLayout
) -> tuple[float, FloatArray]:
    gradient: FloatArray = np.zeros(layout.size)
    value: float = log_m_prior(prior, m)
    if value == -math.inf:
        return value, gradient
    free: tuple[int, ...] = prior.free_theta_indices
    for position, index in enumerate(free):
        marginal = prior.theta[index]
        value += normal_mixture_logpdf(marginal, chi[position])
        gradient[position] = normal_mixture_grad(
            marginal, chi[position]
        )[0]
    value += normal_mixture_logpdf(prior.log_scale, chi[layout.log_scale])
    gradient[layout.log_scale] = normal_mixture_grad(
        prior.log_scale, chi[layout.log_scale]
    )[0]
    concentration: float = prior.dirichlet_concentration / m
    weights: FloatArray = weights_from_alpha(chi[layout.alpha])
    value += (
        gammaln(prior.dirichlet_concentration)
        - m * gammaln(concentration)
        + (concentration - 1.0) * float(np.sum(np.log(weights)))
    )
    logdet, logdet_gradient = weight_jacobian_logdet(weights)
    value += logdet
    gradient[layout.alpha] = (
        concentration - 1.0
    ) * (1.0 - m * weights[:-1]) + logdet_gradient
    locations: FloatArray = chi[layout.mu].reshape(m, layout.J)
    location_gradient: FloatArray = np.empty_like(locations)
    for j in range(layout.J):
        marginal = prior.location_prior(j)
        value += normal_mixture_logpdf(marginal, locations[:, j])
        location_gradient[:, j] = normal_mixture_grad(
            marginal, locations[:, j]
        )
    gradient[layout.mu] = location_gradient.ravel()
    log_scales: FloatArray = chi[layout.log_component_scale]
    value += normal_mixture_logpdf(prior.log_component_scale, log_scales)
    gradient[layout.log_component_scale] = normal_mixture_grad(
        prior.log_component_scale, log_scales
    )
    return value, gradient


def log_prior(
    prior: PriorConfig, state: ChainState, J: int
) -> tuple[float, FloatArray]:
    """
    Log prior density of a chain state in chi coordinates with its
     gradient; includes log Pi(m) and the weight change of variables

    :param prior: Prior settings
    :type prior: PriorConfig
    :param state: Chain state
    :type state: ChainState
    :param J: Shock dimension
    :type J: int
    :return: The log density and its gradient
    :rtype: tuple[float, FloatArray]
    """
    layout = ChiLayout(len(prior.free_theta_indices), state.m, J)
    chi: FloatArray = np.asarray(state.chi, dtype=np.float64)
    if chi.shape != (layout.size,):
        raise DimensionMismatchError(
            detail=f"chi has shape {chi.shape}, layout needs ({layout.size},)"
        )
    return _prior_terms(prior, state.m, chi, layout)


def sample_prior(
    prior: PriorConfig, m: int, J: int, rng: np.random.Generator
) -> FloatArray:
    """
    Draw chi from the prior given m components.

    Weights follow the symmetric Dirichlet through independent
    Gamma(a_bar/m, 1) draws kept on the log scale, so small shapes do not
    underflow: log g = log G + log U / shape with G ~ Gamma(shape + 1, 1).

    :param prior: Prior settings
    :type prior: PriorConfig
    :param m: Component count
    :type m: int
    :param J: Shock dimension
    :type J: int
    :param rng: Random generator
    :type rng: np.random.Generator
    :return: chi
    :rtype: FloatArray
    """
    shape: float = prior.dirichlet_concentration / m
    log_gammas: FloatArray = (
        np.log(rng.gamma(shape + 1.0, size=m))
        + np.log(rng.uniform(size=m)) / shape
    )
    theta_free: FloatArray = np.array(
        [
            normal_mixture_sample(prior.theta[i], rng)[0]
            for i in prior.free_theta_indices
        ]
    )
    locations: FloatArray = np.column_stack(
        [
            normal_mixture_sample(prior.location_prior(j), rng, m)
            for j in range(J)
        ]
    )
    return np.concatenate(
        [
            theta_free,
            normal_mixture_sample(prior.log_scale, rng),
            log_gammas[:-1] - log_gammas[-1],
            locations.ravel(),
            normal_mixture_sample(prior.log_component_scale, rng, m),
        ]
    )


def mixture_likelihood_gradient(
    counts: PanelCounts,
    model: DDCModel,
    mix: GumbelMixture,
    layout: ChiLayout,
    free_indices: Sequence[int],
    solution: EmaxSolution,
) -> tuple[float, FloatArray]:
    """
    Log likelihood and its gradient in chi at a solved Emax.

    Direct derivatives of the closed-form probabilities are combined with
    the Emax sensitivities dQ = [I - T'(Q)]^{-1} dT, solved for all
    parameters at once with the LU factors kept on the solution.

    :param counts: Choice counts
    :type counts: PanelCounts
    :param model: Model evaluated at the current utility parameters
    :type model: DDCModel
    :param mix: Current mixture
    :type mix: GumbelMixture
    :param layout: Block layout of chi
    :type layout: ChiLayout
    :param free_indices: theta positions of the free parameters
    :type free_indices: Sequence[int]
    :param solution: Converged Emax at the current parameters
    :type solution: EmaxSolution
    :return: The log likelihood and its gradient
    :rtype: tuple[float, FloatArray]
    """
    terms: MixtureTerms = mixture_terms(model, mix, solution.q)
    n: FloatArray = counts.counts
    p: FloatArray = terms.ccp
    value: float = _log_likelihood(n, p)
    gradient: FloatArray = np.zeros(layout.size)
    if not np.isfinite(value):
        return value, gradient
    ratio: FloatArray = np.divide(n, p, out=np.zeros_like(n), where=n > 0.0)
    weights: FloatArray = terms.softmax_weights
    sigmas: FloatArray = terms.sigmas[None, :]
    p_other: FloatArray = 1.0 - terms.component_probs[:, :, 0]
    with np.errstate(under="ignore"):
        tail: FloatArray = np.exp(np.minimum(-terms.a, _EXP_CLIP))
        g: FloatArray = np.exp(-terms.a - tail)
    r_bar: FloatArray = np.einsum("xj,xkj->xk", ratio[:, 1:], weights)
    base_gap: FloatArray = g * (ratio[:, :1] - r_bar)
    sensitivity: FloatArray = np.empty_like(terms.component_probs)
    sensitivity[:, :, 0] = base_gap / sigmas
    sensitivity[:, :, 1:] = (
        weights
        * (
            p_other[:, :, None] * (ratio[:, None, 1:] - r_bar[:, :, None])
            - base_gap[:, :, None]
        )
        / sigmas[:, :, None]
    )
    omega: FloatArray = mix.weights
    score: FloatArray = np.einsum("k,xkd->xd", omega, sensitivity)
    gaps: FloatArray = (
        terms.values[:, None, 1:]
        + mix.locations[None, :, :]
        - terms.values[:, None, :1]
    )
    scale_direct: FloatArray = -omega * np.einsum(
        "xkj,xkj->k", gaps, sensitivity[:, :, 1:]
    )
    free: list[int] = list(free_indices)
    design: FloatArray = model.design[:, :, free]
    gradient[layout.theta] = np.einsum("xd,xdi->i", score, design)
    gradient[layout.log_scale] = float(scale_direct.sum())
    observed_total: FloatArray = n.sum(axis=1)
    weight_direct: FloatArray = omega * (
        np.einsum("xd,xkd->k", ratio, terms.component_probs)
        - observed_total.sum()
    )
    gradient[layout.alpha] = weight_direct[:-1]
    gradient[layout.mu] = (
        omega[:, None] * sensitivity[:, :, 1:].sum(axis=0)
    ).ravel()
    gradient[layout.log_component_scale] = scale_direct
    if model.beta == 0.0:
        return value, gradient
    if solution.factorization is None:
        raise ConvergenceError(detail="Emax solution carries no LU factors")
    scale_emax: FloatArray = (
        terms.component_emax
        - terms.values[:, :1]
        - np.einsum("xkj,xkj->xk", gaps, terms.component_probs[:, :, 1:])
    )
    d_operator: FloatArray = np.zeros((model.n_states, layout.size))
    d_operator[:, layout.theta] = np.einsum("xd,xdi->xi", p, design)
    d_operator[:, layout.log_scale] = scale_emax @ omega
    d_operator[:, layout.alpha] = (
        omega[None, :-1]
        * (terms.component_emax[:, :-1] - terms.emax[:, None])
    )
    d_operator[:, layout.mu] = (
        omega[None, :, None] * terms.component_probs[:, :, 1:]
    ).reshape(model.n_states, -1)
    d_operator[:, layout.log_component_scale] = omega[None, :] * scale_emax
    adjoint: FloatArray = model.beta * np.einsum(
        "xe,exy->y", score, model.transitions
    )
    d_emax: FloatArray = lu_solve(solution.factorization, d_operator)
    return value, gradient + adjoint @ d_emax


class PosteriorTarget:
    """
    Log posterior over (m, chi) for fixed data, model and prior.

    Numerical failures of the Emax solver evaluate to -inf so that samplers
    reject the offending proposal.
    """

    def __init__(
        self,
        counts: PanelCounts,
        model: DDCModel,
        prior: PriorConfig,
        config: EmaxConfig | None = None,
        prior_only: bool = False,
    ):
        if counts.counts.shape != (model.n_states, model.n_actions):
            raise DataMismatchError(
                detail=f"Counts of shape {counts.counts.shape} do not fit a"
                f" model with {model.n_states} states and"
                f" {model.n_actions} actions"
            )
        self.counts: PanelCounts = counts
        self.model: DDCModel = model
        self.prior: PriorConfig = prior
        self.config: EmaxConfig = config or default_emax_config()
        self.prior_only: bool = prior_only
        self.free_indices: tuple[int, ...] = prior.free_theta_indices
        if any(not 0 <= i < model.n_theta for i in self.free_indices):
            raise DataMismatchError(
                detail=f"Free parameter indices {self.free_indices} exceed"
                f" the {model.n_theta} model parameters"
            )

    def layout(self, m: int) -> ChiLayout:
        """
        Layout of chi with m components

        :param m: Component count
        :type m: int
        :return: The layout
        :rtype: ChiLayout
        """
        return ChiLayout(len(self.free_indices), m, self.model.J)

    def evaluate_strict(
        self, m: int, chi: FloatArray, q0: FloatArray | None = None
    ) -> PosteriorEvaluation:
        """
        Log posterior and gradient, raising on numerical failure

        :param m: Component count
        :type m: int
        :param chi: Position
        :type chi: FloatArray
        :param q0: Emax warm start
        :type q0: FloatArray | None
        :return: The evaluation
        :rtype: PosteriorEvaluation
        :raises ConvergenceError: If the Emax solver does not converge
        """
        layout: ChiLayout = self.layout(m)
        chi = np.asarray(chi, dtype=np.float64)
        if chi.shape != (layout.size,):
            raise DimensionMismatchError(
                detail=f"chi has shape {chi.shape}, layout needs"
                f" ({layout.size},)"
            )
        prior_value, prior_gradient = _prior_terms(self.prior, m, chi, layout)
        if self.prior_only or prior_value == -math.inf:
            return PosteriorEvaluation(
                log_density=prior_value,
                gradient=prior_gradient,
                log_likelihood=0.0,
                likelihood_gradient=np.zeros(layout.size),
                q=q0,
                residual=None,
            )
        theta_free, mix = untransform(chi, layout)
        model: DDCModel = self.model.with_theta(
            full_theta(self.model, self.free_indices, theta_free)
        )
        solution: EmaxSolution = solve_emax(model, mix, q0, self.config)
        if not solution.converged:
            raise ConvergenceError(
                detail=f"Emax did not converge (residual"
                f" {solution.residual:.3e})",
                residual=solution.residual,
                trace=solution.residual_trace,
            )
        ll_value, ll_gradient = mixture_likelihood_gradient(
            self.counts, model, mix, layout, self.free_indices, solution
        )
        return PosteriorEvaluation(
            log_density=prior_value + ll_value,
            gradient=prior_gradient + ll_gradient,
            log_likelihood=ll_value,
            likelihood_gradient=ll_gradient,
            q=solution.q,
            residual=solution.residual,
        )

    def evaluate(
        self, m: int, chi: FloatArray, q0: FloatArray | None = None
    ) -> PosteriorEvaluation:
        """
        Log posterior and gradient, -inf on numerical failure

        :param m: Component count
        :type m: int
        :param chi: Position
        :type chi: FloatArray
        :param q0: Emax warm start
        :type q0: FloatArray | None
        :return: The evaluation
        :rtype: PosteriorEvaluation
        """
        try:
            evaluation = self.evaluate_strict(m, chi, q0)
        except (
            ConvergenceError,
            NumericalDomainError,
            InvalidMixtureError,
            np.linalg.LinAlgError,
            ValueError,
        ) as e:
            logger.debug(f"Rejecting position: {e}")
            return _failed(self.layout(m).size, q0)
        if not np.isfinite(evaluation.log_density) or not np.all(
            np.isfinite(evaluation.gradient)
        ):
            return _failed(self.layout(m).size, q0)
        return evaluation

    def bind(self, m: int, q0: FloatArray | None) -> "BoundTarget":
        """
        Fixed-m view for the Hamiltonian block

        :param m: Component count
        :type m: int
        :param q0: Emax warm start of the current state
        :type q0: FloatArray | None
        :return: Callable target
        :rtype: BoundTarget
        """
        return BoundTarget(self, m, q0)


def _failed(size: int, q0: FloatArray | None) -> PosteriorEvaluation:
    return PosteriorEvaluation(
        log_density=-math.inf,
        gradient=np.full(size, np.nan),
        log_likelihood=-math.inf,
        likelihood_gradient=np.full(size, np.nan),
        q=q0,
        residual=None,
    )


class BoundTarget:
    """
    chi -> (log density, gradient) at fixed m, warm starting each Emax
    solve from the last successful one and remembering the last
    evaluation.
    """

    def __init__(self, target: PosteriorTarget, m: int, q0: FloatArray | None):
        self.target: PosteriorTarget = target
        self.m: int = m
        self.q: FloatArray | None = q0
        self.last: PosteriorEvaluation | None = None

    def __call__(self, chi: FloatArray) -> tuple[float, FloatArray]:
        evaluation = self.target.evaluate(self.m, chi, self.q)
        self.last = evaluation
        if evaluation.q is not None and np.isfinite(evaluation.log_density):
            self.q = evaluation.q
        return evaluation.log_density, evaluation.gradient


def grad_log_posterior(
    counts: PanelCounts,
    model: DDCModel,
    prior: PriorConfig,
    state: ChainState,
    config: EmaxConfig | None = None,
) -> tuple[float, FloatArray]:
    """
    Log posterior (likelihood plus prior in chi coordinates) and its
     gradient at a chain state

    :param counts: Choice counts
    :type counts: PanelCounts
    :param model: The model; fixed parameters come from its theta
    :type model: DDCModel
    :param prior: Prior settings, whose theta keys select free parameters
    :type prior: PriorConfig
    :param state: Chain state, its q used as warm start
    :type state: ChainState
    :param config: Emax solver settings
    :type config: EmaxConfig | None
    :return: The value and gradient
    :rtype: tuple[float, FloatArray]
    :raises ConvergenceError: If the Emax solver does not converge
    """
    target = PosteriorTarget(counts, model, prior, config)
    evaluation = target.evaluate_strict(state.m, state.chi, state.q)
    return evaluation.log_density, evaluation.gradient


def logit_log_likelihood(
    counts: PanelCounts,
    model: DDCModel,
    free_indices: Sequence[int],
    q0: FloatArray | None = None,
    config: EmaxConfig | None = None,
) -> tuple[float, FloatArray, FloatArray]:
    """
    Dynamic logit log likelihood with its gradient in the free parameters

    :param counts: Choice counts
    :type counts: PanelCounts
    :param model: Model at the evaluation point
    :type model: DDCModel
    :param free_indices: theta positions to differentiate
    :type free_indices: Sequence[int]
    :param q0: Emax warm start
    :type q0: FloatArray | None
    :param config: Solver settings
    :type config: EmaxConfig | None
    :return: Value, gradient and the solved Emax
    :rtype: tuple[float, FloatArray, FloatArray]
    """
    solved = logit_emax_and_ccps(model, q0, config)
    n: FloatArray = counts.counts
    p: FloatArray = solved.ccp.probabilities
    value: float = _log_likelihood(n, p)
    free: list[int] = list(free_indices)
    design: FloatArray = model.design[:, :, free]
    score: FloatArray = n - n.sum(axis=1, keepdims=True) * p
    gradient: FloatArray = np.einsum("xd,xdi->i", score, design)
    if model.beta > 0.0 and free:
        factorization = solved.solution.factorization
        if factorization is None:
            raise ConvergenceError(detail="Logit solution has no LU factors")
        d_operator: FloatArray = np.einsum("xd,xdi->xi", p, design)
        adjoint: FloatArray = model.beta * np.einsum(
            "xe,exy->y", score, model.transitions
        )
        gradient = gradient + adjoint @ lu_solve(factorization, d_operator)
    return value, gradient, solved.solution.q


def finite_difference_jacobian(
    f: Callable[[FloatArray], FloatArray], x: FloatArray, step: float
) -> FloatArray:
    """
    Central finite differences of a vector function

    :param f: Function R^n -> R^k
    :type f: Callable[[FloatArray], FloatArray]
    :param x: Evaluation point
    :type x: FloatArray
    :param step: Relative step, scaled by 1 + |x_i|
    :type step: float
    :return: Jacobian of shape (k, n)
    :rtype: FloatArray
    """
    columns: list[FloatArray] = []
    for i in range(x.size):
        h: float = step * (1.0 + abs(float(x[i])))
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        columns.append(
            (np.atleast_1d(f(up)) - np.atleast_1d(f(down))) / (2.0 * h)
        )
    return np.stack(columns, axis=-1)


def delta_method_interval(
    estimate: float,
    gradient: FloatArray,
    covariance: FloatArray,
    alpha: float = 0.05,
) -> FunctionalEstimate:
    """
    Normal interval for a smooth functional of an asymptotically normal
     estimator

    :param estimate: Functional at the estimate
    :type estimate: float
    :param gradient: Gradient of the functional in the parameters
    :type gradient: FloatArray
    :param covariance: Covariance of the estimator
    :type covariance: FloatArray
    :param alpha: One minus the coverage
    :type alpha: float
    :return: Estimate, standard error and interval
    :rtype: FunctionalEstimate
    """
    variance: float = float(gradient @ covariance @ gradient)
    standard_error: float = math.sqrt(max(variance, 0.0))
    half_width: float = (
        float(stats.norm.ppf(1.0 - alpha / 2.0)) * standard_error
    )
    return FunctionalEstimate(
        estimate=estimate,
        standard_error=standard_error,
        interval=Interval(lo=estimate - half_width, hi=estimate + half_width),
    )


@log_stage
def logit_mle(
    counts: PanelCounts,
    model: DDCModel,
    free_indices: Sequence[int],
    functionals: Mapping[str, ModelFunctional] | None = None,
    alpha: float = 0.05,
    rng: np.random.Generator | None = None,
    config: EmaxConfig | None = None,
) -> LogitMLEResult:
    """
    Maximum likelihood under the dynamic logit by BFGS with the analytic
     gradient, restarted from jittered points.

    The covariance is the inverse of the negative finite-difference
    Hessian; functional intervals use the delta method.

    :param counts: Choice counts
    :type counts: PanelCounts
    :param model: Model holding the starting and fixed parameter values
    :type model: DDCModel
    :param free_indices: theta positions to estimate
    :type free_indices: Sequence[int]
    :param functionals: Named functionals of the fitted model
    :type functionals: Mapping[str, ModelFunctional] | None
    :param alpha: One minus the interval coverage
    :type alpha: float
    :param rng: Generator for the jittered starts
    :type rng: np.random.Generator | None
    :param config: Emax solver settings
    :type config: EmaxConfig | None
    :return: The fit
    :rtype: LogitMLEResult
    :raises ConvergenceError: If no start yields a finite optimum
    """
    settings = get_settings()
    free: tuple[int, ...] = tuple(free_indices)
    if not free:
        raise DataMismatchError(detail="The logit MLE needs free parameters")
    generator: np.random.Generator = rng or np.random.default_rng(0)
    warm: dict[str, FloatArray | None] = {"q": None}

    def objective(x: FloatArray) -> tuple[float, FloatArray]:
        candidate: DDCModel = model.with_theta(full_theta(model, free, x))
        try:
            value, gradient, q = logit_log_likelihood(
                counts, candidate, free, warm["q"], config
            )
        except (ConvergenceError, NumericalDomainError, ValidationError):
            return math.inf, np.zeros(len(free))
        if not np.isfinite(value):
            return math.inf, np.zeros(len(free))
        warm["q"] = q
        return -value, -gradient

    base: FloatArray = model.theta[list(free)].copy()
    spread: FloatArray = settings.MLE_JITTER * (1.0 + np.abs(base))
    starts: list[FloatArray] = [base] + [
        base + spread * generator.standard_normal(base.size)
        for _ in range(settings.MLE_MULTISTARTS - 1)
    ]
    best: optimize.OptimizeResult | None = None
    for start in starts:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            result = optimize.minimize(
                objective,
                start,
                jac=True,
                method="BFGS",
                options={"gtol": 1e-6},
            )
        logger.debug(f"Logit start {start} -> {result.fun} ({result.message})")
        if np.isfinite(result.fun) and (best is None or result.fun < best.fun):
            best = result
    if best is None:
        raise ConvergenceError(
            detail="No logit MLE start reached a finite likelihood"
        )
    estimate: FloatArray = np.asarray(best.x)

    def gradient_at(x: FloatArray) -> FloatArray:
        return objective(x)[1]

    hessian: FloatArray = -finite_difference_jacobian(
        gradient_at, estimate, settings.FD_STEP
    )
    hessian = 0.5 * (hessian + hessian.T)
    try:
        covariance: FloatArray = np.linalg.inv(-hessian)
    except np.linalg.LinAlgError as e:
        logger.error(f"Singular logit Hessian: {e}")
        raise ConvergenceError(
            detail="The logit Hessian is singular at the optimum"
        ) from e
    if np.any(np.diag(covariance) <= 0.0):
        raise ConvergenceError(
            detail="The logit Hessian is not negative definite at the optimum"
        )
    fitted: DDCModel = model.with_theta(full_theta(model, free, estimate))
    estimates: dict[str, FunctionalEstimate] = {}
    for name, functional in (functionals or {}).items():

        def at(x: FloatArray, f: ModelFunctional = functional) -> FloatArray:
            return np.array([f(model.with_theta(full_theta(model, free, x)))])

        jacobian: FloatArray = finite_difference_jacobian(
            at, estimate, settings.FD_STEP
        )
        estimates[name] = delta_method_interval(
            functional(fitted), jacobian[0], covariance, alpha
        )
    logger.info(f"Logit MLE log likelihood {-best.fun:.6f} at {estimate}")
    return LogitMLEResult(
        theta=fitted.theta,
        free_indices=free,
        covariance=covariance,
        standard_errors=np.sqrt(np.diag(covariance)),
        log_likelihood=float(-best.fun),
        converged=bool(best.success),
        starts=len(starts),
        functionals=estimates,
    )


def logit_ccps(model: DDCModel, config: EmaxConfig | None = None) -> CCPMatrix:
    """
    Dynamic logit choice probabilities at the model parameters

    :param model: The model
    :type model: DDCModel
    :param config: Solver settings
    :type config: EmaxConfig | None
    :return: The CCPs
    :rtype: CCPMatrix
    """
    return logit_emax_and_ccps(model, None, config).ccp
