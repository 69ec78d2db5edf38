"""
Tests for the dimension-changing moves over the number of components.
"""

import math

import numpy as np
import pytest
from scipy import stats

from app.schemas.chain import ChainState, NormalMixturePrior, PriorConfig
from app.schemas.model import PanelCounts
from app.services.likelihood import (
    ChiLayout,
    PosteriorTarget,
    log_m_prior,
    transform,
)
from app.services.dp_solver import mixture_terms
from app.services.mixture import make_mixture
from app.services.reversible_jump import (
    LaplaceProposal,
    ReducedMixture,
    drop_last,
    jump_log_ratio,
    jump_prior_delta,
    laplace_proposal,
    log_gamma_prior,
    new_component_log_prior,
    reduce_state,
    residual_location,
    rj_step,
)
from conftest import ModelFactory

PRECISION: np.ndarray = np.array(
    [[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.5]]
)
MODE: np.ndarray = np.array([0.5, -0.2, 1.0])


def _seed_for(move: str) -> int:
    for seed in range(1000):
        birth = np.random.default_rng(seed).uniform() < 0.5
        if birth == (move == "birth"):
            return seed
    raise AssertionError("no seed found")


def _reduced(m: int = 2, J: int = 1) -> ReducedMixture:
    return ReducedMixture(
        theta_free=np.array([0.4]),
        log_scale=0.1,
        locations=np.arange(m * J, dtype=np.float64).reshape(m, J),
        log_component_scales=np.linspace(-0.2, 0.2, m),
        log_gammas=np.log(np.arange(1.0, m + 1.0)),
    )


def quadratic(eta: np.ndarray) -> tuple[float, np.ndarray]:
    gap = eta - MODE
    return -0.5 * float(gap @ PRECISION @ gap), -PRECISION @ gap


def _prior_only_target(
    random_model: ModelFactory, prior: PriorConfig
) -> PosteriorTarget:
    model = random_model(K=3, J=1, n_theta=2)
    counts = np.ones((3, 2))
    return PosteriorTarget(
        PanelCounts(counts=counts), model, prior, prior_only=True
    )


class ReducedMixtureTestSuite:
    def test_chi_round_trip(self) -> None:
        mix = make_mixture([0.2, 0.3, 0.5], [[0.0], [1.0], [-1.0]], [1, 2, 3])
        chi = transform(np.array([0.7]), mix)
        state = ChainState(m=3, chi=chi)
        reduced = reduce_state(state, ChiLayout(1, 3, 1), math.log(4.0))
        np.testing.assert_allclose(reduced.chi(), chi, atol=1e-12)
        np.testing.assert_allclose(
            np.exp(reduced.log_gammas), 4.0 * mix.weights, rtol=1e-12
        )

    def test_birth_inverts_death(self) -> None:
        full = _reduced(m=3, J=2)
        smaller, eta = drop_last(full)
        assert smaller.m == 2
        assert eta.size == 2 + 2
        np.testing.assert_allclose(smaller.extended_chi(eta), full.chi())


class JumpRatioTestSuite:
    def test_death_is_the_reverse_birth(self) -> None:
        birth = jump_log_ratio(-10.0, -2.0, -9.0, 0.3, "birth")
        death = jump_log_ratio(-10.0, -2.0, -9.0, 0.3, "death")
        assert birth == pytest.approx(-10.0 + 2.0 + 9.0 + 0.3)
        assert death == -birth

    def test_prior_delta_with_flat_shape(self) -> None:
        prior = PriorConfig(dirichlet_concentration=2.0, m_max=5)
        reduced = _reduced(m=1)
        expected = (
            log_m_prior(prior, 2)
            - log_m_prior(prior, 1)
            + (1.0 - 2.0) * float(reduced.log_gammas[0])
            - math.lgamma(1.0)
            + math.lgamma(2.0)
        )
        assert jump_prior_delta(prior, reduced) == pytest.approx(expected)

    def test_log_gamma_density(self) -> None:
        log_gamma = np.log(np.array([0.3, 1.0, 4.0]))
        expected = stats.gamma(2.5).logpdf(np.exp(log_gamma)) + log_gamma
        np.testing.assert_allclose(log_gamma_prior(2.5, log_gamma), expected)

    def test_component_prior_gradient(self) -> None:
        prior = PriorConfig(
            location=[
                NormalMixturePrior(
                    weights=(0.4, 0.6), means=(1.0, -1.0), sds=(0.5, 2.0)
                )
            ]
        )
        eta = np.array([0.3, -0.7, 0.2, -0.4])
        _, gradient = new_component_log_prior(prior, 1.5, eta)
        step = 1e-6
        numeric = np.array(
            [
                (
                    new_component_log_prior(prior, 1.5, eta + step * e)[0]
                    - new_component_log_prior(prior, 1.5, eta - step * e)[0]
                )
                / (2.0 * step)
                for e in np.eye(4)
            ]
        )
        np.testing.assert_allclose(gradient, numeric, atol=1e-7)


class LaplaceProposalTestSuite:
    def test_gaussian_conditional_is_matched(self) -> None:
        proposal = laplace_proposal(quadratic, _reduced(), PriorConfig())
        assert not proposal.fallback
        assert proposal.precision_cholesky is not None
        np.testing.assert_allclose(proposal.mean, MODE, atol=1e-6)
        cholesky = proposal.precision_cholesky
        np.testing.assert_allclose(cholesky @ cholesky.T, PRECISION, atol=1e-5)

    def test_density_matches_the_normal_law(self) -> None:
        cholesky = np.linalg.cholesky(PRECISION)
        proposal = LaplaceProposal(MODE, cholesky, 1.0, PriorConfig(), False)
        eta = np.array([0.1, 0.2, 0.3])
        expected = stats.multivariate_normal(
            MODE, np.linalg.inv(PRECISION)
        ).logpdf(eta)
        assert proposal.logpdf(eta) == pytest.approx(expected, rel=1e-10)

    def test_samples_follow_the_normal_law(self) -> None:
        cholesky = np.linalg.cholesky(PRECISION)
        proposal = LaplaceProposal(MODE, cholesky, 1.0, PriorConfig(), False)
        rng = np.random.default_rng(0)
        draws = np.array([proposal.sample(rng) for _ in range(20_000)])
        np.testing.assert_allclose(draws.mean(axis=0), MODE, atol=0.05)
        np.testing.assert_allclose(
            np.cov(draws.T), np.linalg.inv(PRECISION), atol=0.08
        )

    def test_falls_back_to_the_prior(self) -> None:
        def nowhere(eta: np.ndarray) -> tuple[float, np.ndarray]:
            return -math.inf, np.full(eta.size, np.nan)

        prior = PriorConfig()
        proposal = laplace_proposal(nowhere, _reduced(m=2, J=1), prior)
        assert proposal.fallback
        assert proposal.precision_cholesky is None
        assert proposal.concentration == pytest.approx(
            prior.dirichlet_concentration / 3.0
        )
        eta = proposal.sample(np.random.default_rng(1))
        assert eta.shape == (3,)
        assert proposal.logpdf(eta) == pytest.approx(
            new_component_log_prior(prior, proposal.concentration, eta)[0]
        )

    def test_search_starts_at_the_given_location(self) -> None:
        def nowhere(eta: np.ndarray) -> tuple[float, np.ndarray]:
            return -math.inf, np.full(eta.size, np.nan)

        proposal = laplace_proposal(
            nowhere, _reduced(m=2, J=1), PriorConfig(), np.array([2.5])
        )
        assert proposal.fallback
        assert proposal.mean[0] == 2.5


class ResidualLocationTestSuite:
    TRUE_LOCATION: np.ndarray = np.array([0.7, -0.4])

    def _target(
        self, random_model: ModelFactory, small_prior: PriorConfig
    ) -> PosteriorTarget:
        model = random_model(seed=5, K=4, J=2, n_theta=1, beta=0.0)
        truth = make_mixture([1.0], self.TRUE_LOCATION[None, :], [1.0])
        probabilities = mixture_terms(model, truth, np.zeros(4)).ccp
        counts = PanelCounts(counts=1e7 * probabilities)
        return PosteriorTarget(counts, model, small_prior)

    def test_recovers_the_location_behind_the_data(
        self, random_model: ModelFactory, small_prior: PriorConfig
    ) -> None:
        target = self._target(random_model, small_prior)
        reduced = ReducedMixture(
            theta_free=target.model.theta[[0]],
            log_scale=0.0,
            locations=np.array([[-1.0, 1.0]]),
            log_component_scales=np.zeros(1),
            log_gammas=np.zeros(1),
        )
        start = residual_location(target, reduced, np.zeros(4))
        assert start is not None
        np.testing.assert_allclose(start, self.TRUE_LOCATION, atol=1e-4)

    def test_needs_an_emax_and_the_likelihood(
        self, random_model: ModelFactory, small_prior: PriorConfig
    ) -> None:
        target = self._target(random_model, small_prior)
        reduced = ReducedMixture(
            theta_free=target.model.theta[[0]],
            log_scale=0.0,
            locations=np.zeros((1, 2)),
            log_component_scales=np.zeros(1),
            log_gammas=np.zeros(1),
        )
        assert residual_location(target, reduced, None) is None
        target.prior_only = True
        assert residual_location(target, reduced, np.zeros(4)) is None

class RJStepTestSuite:
    def test_death_from_one_component_is_rejected(
        self, random_model: ModelFactory
    ) -> None:
        prior = PriorConfig(m_max=3)
        target = _prior_only_target(random_model, prior)
        state = ChainState(m=1, chi=np.zeros(target.layout(1).size))
        outcome = rj_step(
            target, state, np.random.default_rng(_seed_for("death"))
        )
        assert outcome.move == "death"
        assert not outcome.accepted
        assert outcome.log_ratio == -math.inf
        assert outcome.state is state

    def test_birth_at_the_largest_count_is_rejected(
        self, random_model: ModelFactory
    ) -> None:
        prior = PriorConfig(m_max=2)
        target = _prior_only_target(random_model, prior)
        state = ChainState(m=2, chi=np.zeros(target.layout(2).size))
        outcome = rj_step(
            target, state, np.random.default_rng(_seed_for("birth"))
        )
        assert outcome.move == "birth"
        assert not outcome.accepted

    def test_states_stay_consistent(self, random_model: ModelFactory) -> None:
        prior = PriorConfig(m_max=4, log_scale=NormalMixturePrior.normal(0, 1))
        target = _prior_only_target(random_model, prior)
        state = ChainState(m=2, chi=np.zeros(target.layout(2).size))
        rng = np.random.default_rng(3)
        moves = set()
        for _ in range(60):
            outcome = rj_step(target, state, rng)
            state = outcome.state
            moves.add((outcome.move, outcome.accepted))
            assert 1 <= state.m <= prior.m_max
            size = target.layout(state.m).size
            assert np.asarray(state.chi).shape == (size,)
            assert state.log_density is not None
            assert math.isfinite(state.log_density)
        assert ("birth", True) in moves or ("death", True) in moves
