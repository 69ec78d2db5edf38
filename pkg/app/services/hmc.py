"""
A module for hmc in the app.services package.
"""

import logging
import math
from collections.abc import Callable
from typing import NamedTuple

import numpy as np

from app.schemas.arrays import FloatArray
from app.schemas.chain import ChainState, HMCConfig, StepSizeState

logger: logging.Logger = logging.getLogger(__name__)

LogDensity = Callable[[FloatArray], tuple[float, FloatArray]]

DA_GAMMA: float = 0.05
DA_T0: float = 10.0
DA_KAPPA: float = 0.75
_MAX_STEP_SEARCH: int = 100
_LOG_STEP_MIN: float = math.log(1e-10)
_LOG_STEP_MAX: float = math.log(1e3)


class Trajectory(NamedTuple):
    """End point of a leapfrog trajectory."""

    position: FloatArray
    momentum: FloatArray
    log_density: float
    gradient: FloatArray
    finite: bool


class HMCOutcome(NamedTuple):
    """Result of one Hamiltonian proposal."""

    state: ChainState
    accepted: bool
    accept_prob: float
    nonfinite: bool


def leapfrog(
    target: LogDensity,
    position: FloatArray,
    momentum: FloatArray,
    gradient: FloatArray,
    step_size: float,
    n_steps: int,
    inverse_mass: FloatArray,
) -> Trajectory:
    """
    Integrate Hamiltonian dynamics with the leapfrog scheme, stopping at
     the first non-finite evaluation

    :param target: Log density with gradient
    :type target: LogDensity
    :param position: Start position
    :type position: FloatArray
    :param momentum: Start momentum
    :type momentum: FloatArray
    :param gradient: Gradient at the start position
    :type gradient: FloatArray
    :param step_size: Step epsilon
    :type step_size: float
    :param n_steps: Number of steps L
    :type n_steps: int
    :param inverse_mass: Diagonal inverse mass
    :type inverse_mass: FloatArray
    :return: The trajectory end point
    :rtype: Trajectory
    """
    x: FloatArray = position.copy()
    p: FloatArray = momentum + 0.5 * step_size * gradient
    value: float = -math.inf
    grad: FloatArray = gradient
    for step in range(n_steps):
        x = x + step_size * inverse_mass * p
        value, grad = target(x)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            return Trajectory(x, p, -math.inf, grad, False)
        if step < n_steps - 1:
            p = p + step_size * grad
    p = p + 0.5 * step_size * grad
    return Trajectory(x, p, value, grad, True)


def _kinetic(momentum: FloatArray, inverse_mass: FloatArray) -> float:
    return 0.5 * float(np.sum(inverse_mass * momentum * momentum))


def _ensure_evaluated(
    target: LogDensity, state: ChainState
) -> tuple[float, FloatArray]:
    if state.log_density is not None and state.gradient is not None:
        return state.log_density, np.asarray(state.gradient)
    return target(np.asarray(state.chi))


def hmc_step(
    target: LogDensity,
    state: ChainState,
    cfg: HMCConfig,
    rng: np.random.Generator,
    step_size: float | None = None,
) -> HMCOutcome:
    """
    One Hamiltonian Monte Carlo transition at fixed m.

    Trajectories that meet a non-finite density are rejected and flagged.

    :param target: Log density with gradient
    :type target: LogDensity
    :param state: Current state; cached density and gradient are reused
    :type state: ChainState
    :param cfg: Sampler settings
    :type cfg: HMCConfig
    :param rng: Random generator
    :type rng: np.random.Generator
    :param step_size: Step overriding cfg.step_size
    :type step_size: float | None
    :return: The outcome
    :rtype: HMCOutcome
    """
    epsilon: float | None = (
        step_size if step_size is not None else cfg.step_size
    )
    if epsilon is None:
        raise ValueError("A step size is needed for the Hamiltonian block")
    chi: FloatArray = np.asarray(state.chi, dtype=np.float64)
    inverse_mass: FloatArray = cfg.inverse_mass(chi.size)
    value, gradient = _ensure_evaluated(target, state)
    momentum: FloatArray = rng.standard_normal(chi.size) / np.sqrt(
        inverse_mass
    )
    start_energy: float = -value + _kinetic(momentum, inverse_mass)
    end: Trajectory = leapfrog(
        target,
        chi,
        momentum,
        gradient,
        epsilon,
        cfg.leapfrog_steps,
        inverse_mass,
    )
    log_u: float = math.log(rng.uniform())
    current: ChainState = state.model_copy(
        update={"log_density": value, "gradient": gradient}
    )
    if not end.finite:
        return HMCOutcome(current, False, 0.0, True)
    log_ratio: float = start_energy - (
        -end.log_density + _kinetic(end.momentum, inverse_mass)
    )
    accept_prob: float = math.exp(min(0.0, log_ratio))
    if log_u < log_ratio:
        proposal: ChainState = state.model_copy(
            update={
                "chi": end.position,
                "log_density": end.log_density,
                "gradient": end.gradient,
            }
        )
        return HMCOutcome(proposal, True, accept_prob, False)
    return HMCOutcome(current, False, accept_prob, False)


def find_reasonable_step_size(
    target: LogDensity,
    position: FloatArray,
    log_density: float,
    gradient: FloatArray,
    inverse_mass: FloatArray,
    rng: np.random.Generator,
) -> float:
    """
    Heuristic initial step: double or halve epsilon until the one-step
     acceptance ratio crosses 1/2

    :param target: Log density with gradient
    :type target: LogDensity
    :param position: Current position
    :type position: FloatArray
    :param log_density: Log density at the position
    :type log_density: float
    :param gradient: Gradient at the position
    :type gradient: FloatArray
    :param inverse_mass: Diagonal inverse mass
    :type inverse_mass: FloatArray
    :param rng: Random generator
    :type rng: np.random.Generator
    :return: The initial step size
    :rtype: float
    """
    epsilon: float = 1.0
    momentum: FloatArray = rng.standard_normal(position.size) / np.sqrt(
        inverse_mass
    )
    start_energy: float = -log_density + _kinetic(momentum, inverse_mass)

    def log_ratio(eps: float) -> float:
        end = leapfrog(
            target, position, momentum, gradient, eps, 1, inverse_mass
        )
        if not end.finite:
            return -math.inf
        return start_energy - (
            -end.log_density + _kinetic(end.momentum, inverse_mass)
        )

    current: float = log_ratio(epsilon)
    while not np.isfinite(current) and epsilon > 1e-12:
        epsilon *= 0.5
        current = log_ratio(epsilon)
    direction: float = 1.0 if current > -math.log(2.0) else -1.0
    for _ in range(_MAX_STEP_SEARCH):
        if not direction * current > -direction * math.log(2.0):
            break
        epsilon *= 2.0**direction
        current = log_ratio(epsilon)
    return epsilon


class DualAveraging:
    """
    Step size adaptation towards a target acceptance probability by
    primal-dual averaging of log epsilon.
    """

    def __init__(self, state: StepSizeState, target_accept: float):
        self.state: StepSizeState = state
        self.target_accept: float = target_accept

    @classmethod
    def start(cls, step_size: float, target_accept: float) -> "DualAveraging":
        """
        Fresh adaptation around an initial step

        :param step_size: Initial epsilon
        :type step_size: float
        :param target_accept: Target acceptance probability
        :type target_accept: float
        :return: The adapter
        :rtype: DualAveraging
        """
        return cls(
            StepSizeState(
                step_size=step_size, mu=math.log(10.0 * step_size)
            ),
            target_accept,
        )

    def update(self, accept_prob: float) -> float:
        """
        Record one acceptance probability and return the next step size

        :param accept_prob: Metropolis acceptance probability
        :type accept_prob: float
        :return: The step for the next transition
        :rtype: float
        """
        s: StepSizeState = self.state
        t: int = s.updates + 1
        weight: float = 1.0 / (t + DA_T0)
        h_bar: float = (1.0 - weight) * s.h_bar + weight * (
            self.target_accept - accept_prob
        )
        log_step: float = min(
            max(s.mu - math.sqrt(t) / DA_GAMMA * h_bar, _LOG_STEP_MIN),
            _LOG_STEP_MAX,
        )
        decay: float = t ** (-DA_KAPPA)
        log_step_bar: float = decay * log_step + (1.0 - decay) * s.log_step_bar
        self.state = StepSizeState(
            step_size=math.exp(log_step),
            mu=s.mu,
            log_step_bar=log_step_bar,
            h_bar=h_bar,
            updates=t,
        )
        return self.state.step_size

    @property
    def final_step_size(self) -> float:
        """
        Averaged step used once adaptation stops

        :return: exp of the averaged log step
        :rtype: float
        """
        if self.state.updates == 0:
            return self.state.step_size
        return math.exp(self.state.log_step_bar)
