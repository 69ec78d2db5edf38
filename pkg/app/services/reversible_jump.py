"""
A module for reversible jump in the app.services package.
"""

import logging
import math
from collections.abc import Callable
from typing import Literal, NamedTuple

import numpy as np
from scipy.special import gammaln

from app.config.config import get_settings
from app.exceptions.exceptions import DDCError
from app.schemas.arrays import FloatArray
from app.schemas.chain import ChainState, PriorConfig
from app.schemas.model import DDCModel
from app.services.dp_solver import choice_values, mixture_terms
from app.services.likelihood import (
    ChiLayout,
    PosteriorTarget,
    finite_difference_jacobian,
    full_theta,
    log_m_prior,
    untransform,
    weights_from_alpha,
)
from app.services.numerics import EULER_GAMMA
from app.services.priors import (
    normal_mixture_grad,
    normal_mixture_logpdf,
    normal_mixture_sample,
)

logger: logging.Logger = logging.getLogger(__name__)

Move = Literal["birth", "death"]
ConditionalDensity = Callable[[FloatArray], tuple[float, FloatArray]]

_GRADIENT_TOL: float = 1e-6
_MAX_HALVINGS: int = 30
_MIN_CURVATURE: float = 1e-6
_LOG_2PI: float = math.log(2.0 * math.pi)


class ReducedMixture(NamedTuple):
    """
    A state with m components written through unnormalized weights,
    log gamma_k = log Gamma + log w_k.
    """

    theta_free: FloatArray
    log_scale: float
    locations: FloatArray  # (m, J)
    log_component_scales: FloatArray  # (m,)
    log_gammas: FloatArray  # (m,)

    @property
    def m(self) -> int:
        """
        Component count

        :return: m
        :rtype: int
        """
        return int(self.log_gammas.shape[0])

    def chi(self) -> FloatArray:
        """
        Unbounded vector of this state, alpha_k = log gamma_k - log gamma_m

        :return: chi
        :rtype: FloatArray
        """
        return np.concatenate(
            [
                self.theta_free,
                [self.log_scale],
                self.log_gammas[:-1] - self.log_gammas[-1],
                self.locations.ravel(),
                self.log_component_scales,
            ]
        )

    def extended_chi(self, eta: FloatArray) -> FloatArray:
        """
        chi of the state with component eta = (mu, log sigma_tilde,
         log gamma) appended last

        :param eta: New component, length J + 2
        :type eta: FloatArray
        :return: chi with m + 1 components
        :rtype: FloatArray
        """
        J: int = self.locations.shape[1]
        return np.concatenate(
            [
                self.theta_free,
                [self.log_scale],
                self.log_gammas - eta[J + 1],
                self.locations.ravel(),
                eta[:J],
                self.log_component_scales,
                [eta[J]],
            ]
        )


class LaplaceProposal(NamedTuple):
    """Gaussian proposal of a new component, or the prior as fallback."""

    mean: FloatArray
    precision_cholesky: FloatArray | None
    concentration: float
    prior: PriorConfig
    fallback: bool

    def sample(self, rng: np.random.Generator) -> FloatArray:
        """
        Draw a component eta

        :param rng: Random generator
        :type rng: np.random.Generator
        :return: eta
        :rtype: FloatArray
        """
        if self.precision_cholesky is not None:
            noise: FloatArray = rng.standard_normal(self.mean.size)
            return self.mean + np.linalg.solve(self.precision_cholesky.T, noise)
        J: int = self.mean.size - 2
        locations: FloatArray = np.array(
            [
                normal_mixture_sample(self.prior.location_prior(j), rng)[0]
                for j in range(J)
            ]
        )
        log_scale: float = float(
            normal_mixture_sample(self.prior.log_component_scale, rng)[0]
        )
        gamma: float = float(rng.gamma(self.concentration))
        return np.concatenate([locations, [log_scale, math.log(gamma)]])

    def logpdf(self, eta: FloatArray) -> float:
        """
        Log density of eta under the proposal

        :param eta: Component
        :type eta: FloatArray
        :return: The log density
        :rtype: float
        """
        if self.precision_cholesky is not None:
            gap: FloatArray = self.precision_cholesky.T @ (eta - self.mean)
            return float(
                np.sum(np.log(np.diag(self.precision_cholesky)))
                - 0.5 * eta.size * _LOG_2PI
                - 0.5 * gap @ gap
            )
        return new_component_log_prior(self.prior, self.concentration, eta)[0]


class JumpOutcome(NamedTuple):
    """Result of one dimension-changing proposal."""

    state: ChainState
    move: Move
    accepted: bool
    fallback: bool
    log_ratio: float


def log_gamma_prior(
    concentration: float, log_gamma: FloatArray | float
) -> FloatArray | float:
    """
    Log density of log gamma when gamma ~ Gamma(concentration, 1)

    :param concentration: Shape a
    :type concentration: float
    :param log_gamma: Value(s) of log gamma
    :type log_gamma: FloatArray | float
    :return: a log gamma - gamma - log Gamma(a)
    :rtype: FloatArray | float
    """
    return (
        concentration * log_gamma - np.exp(log_gamma) - gammaln(concentration)
    )


def new_component_log_prior(
    prior: PriorConfig, concentration: float, eta: FloatArray
) -> tuple[float, FloatArray]:
    """
    Prior log density of a component (mu, log sigma_tilde, log gamma) and
     its gradient

    :param prior: Prior settings
    :type prior: PriorConfig
    :param concentration: Gamma shape of the unnormalized weight
    :type concentration: float
    :param eta: The component
    :type eta: FloatArray
    :return: The value and gradient
    :rtype: tuple[float, FloatArray]
    """
    J: int = eta.size - 2
    value: float = 0.0
    gradient: FloatArray = np.empty(eta.size)
    for j in range(J):
        marginal = prior.location_prior(j)
        value += normal_mixture_logpdf(marginal, eta[j])
        gradient[j] = normal_mixture_grad(marginal, eta[j])[0]
    value += normal_mixture_logpdf(prior.log_component_scale, eta[J])
    gradient[J] = normal_mixture_grad(prior.log_component_scale, eta[J])[0]
    value += float(log_gamma_prior(concentration, eta[J + 1]))
    gradient[J + 1] = concentration - math.exp(eta[J + 1])
    return value, gradient


def jump_prior_delta(prior: PriorConfig, reduced: ReducedMixture) -> float:
    """
    Prior terms of a birth from the reduced state that do not involve the
     new component: the change of log Pi(m) and of the Gamma shape of the
     existing unnormalized weights

    :param prior: Prior settings
    :type prior: PriorConfig
    :param reduced: The state with m components
    :type reduced: ReducedMixture
    :return: The log prior increment
    :rtype: float
    """
    m: int = reduced.m
    shape: float = prior.dirichlet_concentration / m
    shape_new: float = prior.dirichlet_concentration / (m + 1)
    return (
        log_m_prior(prior, m + 1)
        - log_m_prior(prior, m)
        + float(
            np.sum(
                (shape_new - shape) * reduced.log_gammas
                - gammaln(shape_new)
                + gammaln(shape)
            )
        )
    )


def jump_log_ratio(
    conditional: float,
    proposal: float,
    reduced_log_likelihood: float,
    delta: float,
    move: Move,
) -> float:
    """
    Log acceptance ratio of a birth, or of the reverse death.

    conditional is the log likelihood of the larger state plus the prior of
    the new component, proposal the log density of that component under
    the proposal built from the smaller state.

    :param conditional: Conditional log target of the component
    :type conditional: float
    :param proposal: Proposal log density of the component
    :type proposal: float
    :param reduced_log_likelihood: Log likelihood of the smaller state
    :type reduced_log_likelihood: float
    :param delta: Output of jump_prior_delta for the smaller state
    :type delta: float
    :param move: birth or death
    :type move: Move
    :return: The log acceptance ratio
    :rtype: float
    """
    birth: float = conditional - proposal - reduced_log_likelihood + delta
    return birth if move == "birth" else -birth


def reduce_state(
    state: ChainState, layout: ChiLayout, log_total: float
) -> ReducedMixture:
    """
    Write a state through unnormalized weights gamma_k = Gamma w_k

    :param state: Chain state
    :type state: ChainState
    :param layout: Layout of its chi
    :type layout: ChiLayout
    :param log_total: log Gamma
    :type log_total: float
    :return: The reduced representation
    :rtype: ReducedMixture
    """
    chi: FloatArray = np.asarray(state.chi, dtype=np.float64)
    weights: FloatArray = weights_from_alpha(chi[layout.alpha])
    return ReducedMixture(
        theta_free=chi[layout.theta].copy(),
        log_scale=float(chi[layout.log_scale]),
        locations=chi[layout.mu].reshape(layout.m, layout.J).copy(),
        log_component_scales=chi[layout.log_component_scale].copy(),
        log_gammas=log_total + np.log(weights),
    )


def drop_last(reduced: ReducedMixture) -> tuple[ReducedMixture, FloatArray]:
    """
    Remove the last component

    :param reduced: State with m >= 2 components
    :type reduced: ReducedMixture
    :return: The smaller state and the removed eta
    :rtype: tuple[ReducedMixture, FloatArray]
    """
    eta: FloatArray = np.concatenate(
        [
            reduced.locations[-1],
            [reduced.log_component_scales[-1], reduced.log_gammas[-1]],
        ]
    )
    smaller = ReducedMixture(
        theta_free=reduced.theta_free,
        log_scale=reduced.log_scale,
        locations=reduced.locations[:-1],
        log_component_scales=reduced.log_component_scales[:-1],
        log_gammas=reduced.log_gammas[:-1],
    )
    return smaller, eta


def conditional_target(
    target: PosteriorTarget,
    reduced: ReducedMixture,
    q0: FloatArray | None,
) -> ConditionalDensity:
    """
    Conditional log target of a new component appended to a reduced state:
     likelihood of the extended state plus the component prior

    :param target: Posterior target
    :type target: PosteriorTarget
    :param reduced: State with m components
    :type reduced: ReducedMixture
    :param q0: Emax warm start
    :type q0: FloatArray | None
    :return: The density with its gradient in eta
    :rtype: ConditionalDensity
    """
    m_new: int = reduced.m + 1
    layout: ChiLayout = target.layout(m_new)
    J: int = layout.J
    shape: float = target.prior.dirichlet_concentration / m_new
    warm: dict[str, FloatArray | None] = {"q": q0}

    def density(eta: FloatArray) -> tuple[float, FloatArray]:
        evaluation = target.evaluate(
            m_new, reduced.extended_chi(eta), warm["q"]
        )
        if not np.isfinite(evaluation.log_likelihood):
            return -math.inf, np.full(eta.size, np.nan)
        warm["q"] = evaluation.q
        prior_value, prior_gradient = new_component_log_prior(
            target.prior, shape, eta
        )
        grad_ll: FloatArray = evaluation.likelihood_gradient
        gradient: FloatArray = prior_gradient.copy()
        gradient[:J] += grad_ll[layout.mu][-J:]
        gradient[J] += grad_ll[layout.log_component_scale][-1]
        gradient[J + 1] -= float(np.sum(grad_ll[layout.alpha]))
        return evaluation.log_likelihood + prior_value, gradient

    return density



def residual_location(
    target: PosteriorTarget, reduced: ReducedMixture, q: FloatArray | None
) -> FloatArray | None:
    """
    Starting location of a new component placed where the current fit
     misses the data.

    Each state x gets the location mu_x at which a single component with
    the mean log component scale reproduces the smoothed observed choice
    frequencies of x exactly. States are weighted by their residual mass
    sum_d |n_dx - N_x p_dx| under the reduced state. Returns None when
    there is no Emax for the reduced state or the fit leaves no residual.

    :param target: Posterior target holding the counts and the model
    :type target: PosteriorTarget
    :param reduced: State the component is appended to
    :type reduced: ReducedMixture
    :param q: Emax of the reduced state
    :type q: FloatArray | None
    :return: Location of length J, or None
    :rtype: FloatArray | None
    """
    if q is None or target.prior_only:
        return None
    _, mix = untransform(reduced.chi(), target.layout(reduced.m))
    model: DDCModel = target.model.with_theta(
        full_theta(target.model, target.free_indices, reduced.theta_free)
    )
    counts: FloatArray = target.counts.counts
    totals: FloatArray = counts.sum(axis=1)
    try:
        values: FloatArray = choice_values(model, q)
        fitted: FloatArray = mixture_terms(model, mix, q).ccp
    except DDCError as e:
        logger.debug(f"No residual location: {e.detail}")
        return None
    residual: FloatArray = np.abs(counts - totals[:, None] * fitted).sum(
        axis=1
    )
    if not residual.sum() > 0.0:
        return None
    observed: FloatArray = (counts + 0.5) / (
        totals[:, None] + 0.5 * model.n_actions
    )
    sigma: float = math.exp(
        reduced.log_scale + float(np.mean(reduced.log_component_scales))
    )
    log_total: FloatArray = (
        np.log(-np.log(observed[:, 0])) + values[:, 0] / sigma + EULER_GAMMA
    )
    z: FloatArray = (
        np.log(observed[:, 1:])
        - np.log1p(-observed[:, :1])
        + log_total[:, None]
    )
    locations: FloatArray = sigma * z - values[:, 1:]
    return (residual @ locations) / residual.sum()

def laplace_proposal(
    density: ConditionalDensity,
    reduced: ReducedMixture,
    prior: PriorConfig,
    start_location: FloatArray | None = None,
) -> LaplaceProposal:
    """
    Gaussian approximation of the conditional posterior of a new component.

    Newton iterations with backtracking start at the given location
    (the weighted mean location when absent), the mean log component
    scale and the log of the mean unnormalized weight; the Hessian comes
    from central differences of the analytic gradient. The prior is
    returned instead when the search fails or the curvature at the mode is
    not negative definite.

    :param density: Conditional log target with gradient
    :type density: ConditionalDensity
    :param reduced: State the component is appended to
    :type reduced: ReducedMixture
    :param prior: Prior settings
    :type prior: PriorConfig
    :param start_location: Starting location of the new component
    :type start_location: FloatArray | None
    :return: The proposal
    :rtype: LaplaceProposal
    """
    settings = get_settings()
    concentration: float = prior.dirichlet_concentration / (reduced.m + 1)
    gammas: FloatArray = np.exp(reduced.log_gammas)
    weights: FloatArray = gammas / gammas.sum()
    eta: FloatArray = np.concatenate(
        [
            (
                weights @ reduced.locations
                if start_location is None
                else start_location
            ),
            [
                float(np.mean(reduced.log_component_scales)),
                math.log(float(np.mean(gammas))),
            ],
        ]
    )

    def fallback(reason: str) -> LaplaceProposal:
        logger.warning(f"Laplace proposal falls back to the prior: {reason}")
        return LaplaceProposal(eta, None, concentration, prior, True)

    def hessian_at(point: FloatArray) -> FloatArray:
        h: FloatArray = finite_difference_jacobian(
            lambda x: density(x)[1], point, settings.FD_STEP
        )
        return 0.5 * (h + h.T)

    value, gradient = density(eta)
    if not np.isfinite(value):
        return fallback("non-finite start")
    for _ in range(settings.LAPLACE_MAX_NEWTON):
        if np.max(np.abs(gradient)) < _GRADIENT_TOL:
            break
        hessian: FloatArray = hessian_at(eta)
        if not np.all(np.isfinite(hessian)):
            return fallback("non-finite Hessian during the mode search")
        eigenvalues, vectors = np.linalg.eigh(hessian)
        curvature: FloatArray = np.maximum(np.abs(eigenvalues), _MIN_CURVATURE)
        step: FloatArray = vectors @ ((vectors.T @ gradient) / curvature)
        for _ in range(_MAX_HALVINGS):
            new_value, new_gradient = density(eta + step)
            if np.isfinite(new_value) and new_value >= value:
                break
            step = 0.5 * step
        else:
            break
        eta, value, gradient = eta + step, new_value, new_gradient
    else:
        return fallback("mode search did not converge")
    hessian = hessian_at(eta)
    try:
        cholesky: FloatArray = np.linalg.cholesky(-hessian)
    except np.linalg.LinAlgError:
        return fallback("Hessian not negative definite at the mode")
    return LaplaceProposal(eta, cholesky, concentration, prior, False)


def rj_step(
    target: PosteriorTarget,
    state: ChainState,
    rng: np.random.Generator,
) -> JumpOutcome:
    """
    Birth or death of the last mixture component, each proposed with
     probability 1/2.

    Deaths at m = 1 and births at m_max are rejected outright. The
    unnormalized weights are refreshed with a Gamma(a_bar, 1) total before
    each proposal.

    :param target: Posterior target
    :type target: PosteriorTarget
    :param state: Current state with cached log likelihood and Emax
    :type state: ChainState
    :param rng: Random generator
    :type rng: np.random.Generator
    :return: The outcome
    :rtype: JumpOutcome
    """
    prior: PriorConfig = target.prior
    move: Move = "birth" if rng.uniform() < 0.5 else "death"
    m: int = state.m
    if (move == "death" and m == 1) or (move == "birth" and m >= prior.m_max):
        return JumpOutcome(state, move, False, False, -math.inf)
    log_total: float = math.log(rng.gamma(prior.dirichlet_concentration))
    current: ChainState = _with_likelihood(target, state)
    full: ReducedMixture = reduce_state(current, target.layout(m), log_total)
    if move == "birth":
        smaller: ReducedMixture = full
        small_log_likelihood: float = float(current.log_likelihood or 0.0)
        density = conditional_target(target, smaller, current.q)
        proposal: LaplaceProposal = laplace_proposal(
            density,
            smaller,
            prior,
            residual_location(target, smaller, current.q),
        )
        eta: FloatArray = proposal.sample(rng)
        conditional, _ = density(eta)
        candidate_chi: FloatArray = smaller.extended_chi(eta)
        candidate_m: int = m + 1
    else:
        smaller, eta = drop_last(full)
        candidate_chi = smaller.chi()
        candidate_m = m - 1
        reduced_eval = target.evaluate(candidate_m, candidate_chi, current.q)
        small_log_likelihood = reduced_eval.log_likelihood
        if not np.isfinite(small_log_likelihood):
            return JumpOutcome(current, move, False, False, -math.inf)
        density = conditional_target(target, smaller, reduced_eval.q)
        proposal = laplace_proposal(
            density,
            smaller,
            prior,
            residual_location(target, smaller, reduced_eval.q),
        )
        conditional = float(current.log_likelihood or 0.0) + (
            new_component_log_prior(
                prior, prior.dirichlet_concentration / m, eta
            )[0]
        )
    log_ratio: float = jump_log_ratio(
        conditional,
        proposal.logpdf(eta),
        small_log_likelihood,
        jump_prior_delta(prior, smaller),
        move,
    )
    if not np.isfinite(log_ratio) or math.log(rng.uniform()) >= log_ratio:
        return JumpOutcome(current, move, False, proposal.fallback, log_ratio)
    evaluation = target.evaluate(candidate_m, candidate_chi, current.q)
    if not np.isfinite(evaluation.log_density):
        return JumpOutcome(current, move, False, proposal.fallback, log_ratio)
    accepted_state = ChainState(
        m=candidate_m,
        chi=candidate_chi,
        log_density=evaluation.log_density,
        gradient=evaluation.gradient,
        log_likelihood=evaluation.log_likelihood,
        q=evaluation.q,
        residual=evaluation.residual,
    )
    logger.debug(f"Accepted {move}: m {m} -> {candidate_m}")
    return JumpOutcome(accepted_state, move, True, proposal.fallback, log_ratio)


def _with_likelihood(target: PosteriorTarget, state: ChainState) -> ChainState:
    if state.log_likelihood is not None and state.log_density is not None:
        return state
    evaluation = target.evaluate(state.m, state.chi, state.q)
    return state.model_copy(
        update={
            "log_density": evaluation.log_density,
            "gradient": evaluation.gradient,
            "log_likelihood": evaluation.log_likelihood,
            "q": evaluation.q,
            "residual": evaluation.residual,
        }
    )
