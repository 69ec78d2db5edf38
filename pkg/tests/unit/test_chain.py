"""
Tests for the chain driver: starting points, reproducibility and resume.
"""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.db.draw_store import DrawStore
from app.exceptions.exceptions import ConvergenceError
from app.schemas.chain import (
    ChainSchedule,
    HMCConfig,
    NormalMixturePrior,
    PriorConfig,
)
from app.schemas.model import PanelCounts
from app.services.chain import initial_state, run_chain
from app.services.likelihood import PosteriorTarget, log_m_prior
from conftest import ModelFactory

CFG: HMCConfig = HMCConfig(leapfrog_steps=3, adapt_steps=10)


def _target(
    random_model: ModelFactory, prior: PriorConfig, prior_only: bool = False
) -> PosteriorTarget:
    model = random_model(seed=2, K=3, J=1, n_theta=1, beta=0.8)
    counts = np.array([[30.0, 10.0], [12.0, 25.0], [8.0, 15.0]])
    return PosteriorTarget(
        PanelCounts(counts=counts), model, prior, prior_only=prior_only
    )


def _schedule(iterations: int) -> ChainSchedule:
    return ChainSchedule(iterations=iterations, thin=2, hmc_per_jump=4)


class InitialStateTestSuite:
    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_start_is_evaluated(
        self, random_model: ModelFactory, small_prior: PriorConfig, m: int
    ) -> None:
        target = _target(random_model, small_prior)
        state = initial_state(target, m)
        assert state.m == m
        assert np.asarray(state.chi).shape == (target.layout(m).size,)
        assert state.log_density is not None
        assert np.isfinite(state.log_density)
        assert state.q is not None

    def test_unsupported_start_is_refused(
        self, random_model: ModelFactory
    ) -> None:
        target = _target(random_model, PriorConfig(m_max=2, theta={}))
        with pytest.raises(ConvergenceError):
            initial_state(target, 3)


class RunChainTestSuite:
    def test_zero_iterations_keep_the_start(
        self,
        random_model: ModelFactory,
        small_prior: PriorConfig,
        tmp_path: Path,
    ) -> None:
        target = _target(random_model, small_prior)
        start = initial_state(target, 1)
        store = DrawStore(tmp_path)
        store.reset()
        run = run_chain(
            target,
            CFG,
            _schedule(0),
            np.random.default_rng(0),
            initial=start,
            store=store,
        )
        assert run.draws_written == 0
        np.testing.assert_array_equal(run.state.chi, start.chi)
        checkpoint = store.load_checkpoint()
        assert checkpoint is not None
        assert checkpoint.iteration == 0

    def test_same_seed_same_chain(
        self, random_model: ModelFactory, small_prior: PriorConfig
    ) -> None:
        target = _target(random_model, small_prior)
        runs = [
            run_chain(target, CFG, _schedule(12), np.random.default_rng(5))
            for _ in range(2)
        ]
        assert runs[0].state.m == runs[1].state.m
        np.testing.assert_array_equal(runs[0].state.chi, runs[1].state.chi)
        assert runs[0].stats == runs[1].stats

    def test_bookkeeping(
        self,
        random_model: ModelFactory,
        small_prior: PriorConfig,
        tmp_path: Path,
    ) -> None:
        target = _target(random_model, small_prior)
        store = DrawStore(tmp_path)
        store.reset()
        run = run_chain(
            target, CFG, _schedule(12), np.random.default_rng(6), store=store
        )
        assert run.stats.hmc_proposed == 12
        assert run.stats.birth_proposed + run.stats.death_proposed == 3
        assert run.draws_written == 6
        draws = store.read_draws()
        assert len(draws) == 6
        assert list(draws["iter"]) == [1, 3, 5, 7, 9, 11]
        assert set(run.step_sizes) >= {run.state.m}

    def test_fixed_m_never_jumps(
        self, random_model: ModelFactory, small_prior: PriorConfig
    ) -> None:
        target = _target(random_model, small_prior)
        schedule = _schedule(8).model_copy(update={"fixed_m": True})
        run = run_chain(
            target,
            CFG,
            schedule,
            np.random.default_rng(7),
            initial=initial_state(target, 2),
        )
        assert run.state.m == 2
        assert run.stats.birth_proposed + run.stats.death_proposed == 0

    def test_resume_is_bit_identical(
        self,
        random_model: ModelFactory,
        small_prior: PriorConfig,
        tmp_path: Path,
    ) -> None:
        target = _target(random_model, small_prior)
        whole = DrawStore(tmp_path / "whole")
        whole.reset()
        full = run_chain(
            target, CFG, _schedule(16), np.random.default_rng(9), store=whole
        )
        split = DrawStore(tmp_path / "split")
        split.reset()
        run_chain(
            target, CFG, _schedule(8), np.random.default_rng(9), store=split
        )
        checkpoint = split.load_checkpoint()
        assert checkpoint is not None
        assert checkpoint.iteration == 8
        resumed = run_chain(
            target,
            CFG,
            _schedule(16),
            np.random.default_rng(123),
            store=split,
            checkpoint=checkpoint,
        )
        assert resumed.state.m == full.state.m
        np.testing.assert_array_equal(resumed.state.chi, full.state.chi)
        assert resumed.draws_written == full.draws_written
        pd.testing.assert_frame_equal(split.read_draws(), whole.read_draws())

    @pytest.mark.slow
    def test_prior_only_visits_m_by_its_prior(
        self, random_model: ModelFactory
    ) -> None:
        prior = PriorConfig(
            m_max=4,
            dirichlet_concentration=4.0,
            log_scale=NormalMixturePrior.normal(0.0, 1.0),
        )
        cfg = HMCConfig(step_size=0.3, leapfrog_steps=5)
        target = _target(random_model, prior, prior_only=True)
        schedule = ChainSchedule(
            iterations=1, thin=1, hmc_per_jump=1, prior_only=True
        )
        state = initial_state(target, 1)
        rng = np.random.default_rng(11)
        visits = np.zeros(prior.m_max)
        for _ in range(6000):
            state = run_chain(target, cfg, schedule, rng, initial=state).state
            visits[state.m - 1] += 1
        expected = np.exp([log_m_prior(prior, m) for m in range(1, 5)])
        np.testing.assert_allclose(visits / visits.sum(), expected, atol=0.06)
