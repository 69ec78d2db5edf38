"""
A module for chain in the app.services package.
"""

import logging
from collections.abc import Mapping
from typing import NamedTuple

import numpy as np

from app.config.config import get_settings
from app.core.decorators import log_stage
from app.db.draw_store import DrawStore
from app.exceptions.exceptions import ConvergenceError
from app.schemas.arrays import FloatArray
from app.schemas.chain import (
    AcceptanceStats,
    ChainCheckpoint,
    ChainSchedule,
    ChainState,
    HMCConfig,
    StepSizeState,
)
from app.services.counterfactual import DrawFunctional
from app.services.hmc import (
    DualAveraging,
    HMCOutcome,
    find_reasonable_step_size,
    hmc_step,
)
from app.services.likelihood import BoundTarget, PosteriorTarget, transform
from app.services.mixture import make_mixture
from app.services.postprocess import draw_record
from app.services.reversible_jump import JumpOutcome, rj_step
from app.utils.io_utils import restore_rng, rng_state

logger: logging.Logger = logging.getLogger(__name__)

_START_SPREAD: float = 0.5


class ChainRun(NamedTuple):
    """Final position and bookkeeping of a chain."""

    state: ChainState
    stats: AcceptanceStats
    step_sizes: dict[int, StepSizeState]
    draws_written: int
    iterations: int


def initial_state(
    target: PosteriorTarget, m: int, theta_free: FloatArray | None = None
) -> ChainState:
    """
    Evaluated starting position: unit scales, equal weights and locations
     spread evenly around zero, utility parameters at the model values

    :param target: Posterior target
    :type target: PosteriorTarget
    :param m: Component count
    :type m: int
    :param theta_free: Free utility parameters; the model values when None
    :type theta_free: FloatArray | None
    :return: The evaluated state
    :rtype: ChainState
    :raises ConvergenceError: If the posterior is not finite there
    """
    J: int = target.model.J
    offsets: FloatArray = _START_SPREAD * (np.arange(m) - (m - 1) / 2.0)
    mix = make_mixture(
        np.full(m, 1.0 / m),
        np.repeat(offsets[:, None], J, axis=1),
        np.ones(m),
        1.0,
    )
    free: FloatArray = (
        target.model.theta[list(target.free_indices)]
        if theta_free is None
        else np.asarray(theta_free, dtype=np.float64)
    )
    chi: FloatArray = transform(free, mix)
    evaluation = target.evaluate_strict(m, chi)
    if not np.isfinite(evaluation.log_density):
        raise ConvergenceError(
            detail=f"Posterior is not finite at the starting point with m={m}"
        )
    return ChainState(
        m=m,
        chi=chi,
        log_density=evaluation.log_density,
        gradient=evaluation.gradient,
        log_likelihood=evaluation.log_likelihood,
        q=evaluation.q,
        residual=evaluation.residual,
    )


def _record_jump(stats: AcceptanceStats, outcome: JumpOutcome) -> None:
    if outcome.move == "birth":
        stats.birth_proposed += 1
        stats.birth_accepted += int(outcome.accepted)
    else:
        stats.death_proposed += 1
        stats.death_accepted += int(outcome.accepted)
    stats.laplace_fallbacks += int(outcome.fallback)


def _record_hmc(stats: AcceptanceStats, outcome: HMCOutcome) -> None:
    stats.hmc_proposed += 1
    stats.hmc_accepted += int(outcome.accepted)
    stats.hmc_nonfinite += int(outcome.nonfinite)


def _step_size(
    bound: BoundTarget,
    state: ChainState,
    cfg: HMCConfig,
    adapters: dict[int, DualAveraging],
    rng: np.random.Generator,
) -> float:
    if cfg.step_size is not None:
        return cfg.step_size
    adapter: DualAveraging | None = adapters.get(state.m)
    if adapter is None:
        chi: FloatArray = np.asarray(state.chi, dtype=np.float64)
        start: float = find_reasonable_step_size(
            bound,
            chi,
            float(state.log_density),  # type: ignore[arg-type]
            np.asarray(state.gradient),
            cfg.inverse_mass(chi.size),
            rng,
        )
        logger.info(f"Initial step size {start:.4g} for m={state.m}")
        adapter = DualAveraging.start(start, cfg.target_accept)
        adapters[state.m] = adapter
    if adapter.state.updates < cfg.adapt_steps:
        return adapter.state.step_size
    return adapter.final_step_size


def _after_hmc(outcome: HMCOutcome, bound: BoundTarget) -> ChainState:
    if not outcome.accepted or bound.last is None:
        return outcome.state
    return outcome.state.model_copy(
        update={
            "log_likelihood": bound.last.log_likelihood,
            "q": bound.last.q,
            "residual": bound.last.residual,
        }
    )


@log_stage
def run_chain(
    target: PosteriorTarget,
    cfg: HMCConfig,
    schedule: ChainSchedule,
    rng: np.random.Generator,
    initial: ChainState | None = None,
    store: DrawStore | None = None,
    functionals: Mapping[str, DrawFunctional] | None = None,
    checkpoint: ChainCheckpoint | None = None,
) -> ChainRun:
    """
    Posterior simulation over (m, chi).

    Each iteration runs one Hamiltonian transition at fixed m; a
    birth-or-death proposal precedes every block of hmc_per_jump
    iterations unless m is fixed. Step sizes are tuned separately for each
    m by dual averaging over the first adapt_steps transitions at that m
    and frozen afterwards. Every thin-th iteration a draw with its derived
    quantities goes to the store, which is checkpointed every
    CHECKPOINT_EVERY draws and at the end of the run.

    :param target: Posterior target
    :type target: PosteriorTarget
    :param cfg: Hamiltonian block settings
    :type cfg: HMCConfig
    :param schedule: Iteration layout
    :type schedule: ChainSchedule
    :param rng: Random generator, replaced by the checkpointed one on resume
    :type rng: np.random.Generator
    :param initial: Starting state; a one-component start when None
    :type initial: ChainState | None
    :param store: Destination of the draws
    :type store: DrawStore | None
    :param functionals: Functionals of the CCPs stored with every draw
    :type functionals: Mapping[str, DrawFunctional] | None
    :param checkpoint: Checkpoint to continue from
    :type checkpoint: ChainCheckpoint | None
    :return: Final state and bookkeeping
    :rtype: ChainRun
    """
    settings = get_settings()
    stats = AcceptanceStats()
    adapters: dict[int, DualAveraging] = {}
    start: int = 0
    draws_written: int = 0
    if checkpoint is not None:
        state: ChainState = checkpoint.state
        rng = restore_rng(checkpoint.rng_state)
        stats = checkpoint.stats.model_copy()
        adapters = {
            m: DualAveraging(s, cfg.target_accept)
            for m, s in checkpoint.step_sizes.items()
        }
        start = checkpoint.iteration
        draws_written = checkpoint.draws_written
        logger.info(f"Resuming chain at iteration {start}")
    else:
        state = initial if initial is not None else initial_state(target, 1)
    occupied: FloatArray = target.counts.occupied
    draw_functionals: Mapping[str, DrawFunctional] = functionals or {}

    def save(iteration: int) -> None:
        if store is None:
            return
        store.write_checkpoint(
            ChainCheckpoint(
                iteration=iteration,
                state=state,
                rng_state=rng_state(rng),
                step_sizes={m: a.state for m, a in adapters.items()},
                stats=stats,
                draws_written=draws_written,
            )
        )
        logger.info(
            f"Checkpoint at iteration {iteration}: m={state.m},"
            f" acceptance {stats.rates()}"
        )

    for iteration in range(start, schedule.iterations):
        if not schedule.fixed_m and iteration % schedule.hmc_per_jump == 0:
            jump: JumpOutcome = rj_step(target, state, rng)
            _record_jump(stats, jump)
            state = jump.state
        bound: BoundTarget = target.bind(state.m, state.q)
        epsilon: float = _step_size(bound, state, cfg, adapters, rng)
        outcome: HMCOutcome = hmc_step(bound, state, cfg, rng, epsilon)
        _record_hmc(stats, outcome)
        adapter: DualAveraging | None = adapters.get(state.m)
        if adapter is not None and adapter.state.updates < cfg.adapt_steps:
            adapter.update(outcome.accept_prob)
        state = _after_hmc(outcome, bound)
        if (iteration + 1) % schedule.thin == 0 and store is not None:
            store.append(
                draw_record(
                    target.model,
                    target.free_indices,
                    occupied,
                    state,
                    iteration,
                    draw_functionals,
                    target.config,
                )
            )
            draws_written += 1
            if draws_written % settings.CHECKPOINT_EVERY == 0:
                save(iteration + 1)
    save(schedule.iterations)
    logger.info(
        f"Chain finished with m={state.m}; acceptance {stats.rates()},"
        f" {stats.laplace_fallbacks} Laplace fallbacks"
    )
    return ChainRun(
        state=state,
        stats=stats,
        step_sizes={m: a.state for m, a in adapters.items()},
        draws_written=draws_written,
        iterations=schedule.iterations,
    )
