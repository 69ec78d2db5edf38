"""
Tests for illness-episode functionals and counterfactual evaluation.
"""

import numpy as np
import pytest

from app.exceptions.exceptions import InvalidModelError
from app.schemas.model import CCPMatrix, DDCModel, GilleskieParams
from app.services.counterfactual import (
    counterfactual_draws,
    counterfactual_model,
    default_functionals,
    draw_parameters,
    expected_absences,
    expected_visits,
    logit_functionals,
)
from app.services.ddc_model import build_gilleskie_model
from app.services.likelihood import transform
from app.services.mixture import make_mixture
from conftest import ModelFactory


def _episode_model(recovery: float) -> DDCModel:
    params = GilleskieParams(
        T=2,
        recovery_table=np.full((6, 4), recovery),
        recovery_coefficients=None,
    )
    return build_gilleskie_model(params, 0.9)


def _always(action: int, n_states: int = 6) -> CCPMatrix:
    probabilities = np.zeros((n_states, 4))
    probabilities[:, action] = 1.0
    return CCPMatrix(probabilities=probabilities)


class EpisodeFunctionalTestSuite:
    def test_visiting_every_period_of_a_long_illness(self) -> None:
        model = _episode_model(0.0)
        assert expected_visits(model, _always(1)) == pytest.approx(2.0)
        assert expected_absences(model, _always(1)) == pytest.approx(0.0)

    def test_visit_with_absence(self) -> None:
        model = _episode_model(0.0)
        assert expected_visits(model, _always(3)) == pytest.approx(2.0)
        assert expected_absences(model, _always(3)) == pytest.approx(2.0)

    def test_immediate_recovery_ends_the_episode(self) -> None:
        model = _episode_model(1.0)
        assert expected_visits(model, _always(1)) == pytest.approx(1.0)

    def test_never_visiting(self) -> None:
        model = _episode_model(0.3)
        assert expected_visits(model, _always(0)) == 0.0

    def test_partial_recovery(self) -> None:
        model = _episode_model(0.25)
        assert expected_visits(model, _always(1)) == pytest.approx(1.75)

    def test_requires_an_illness_model(
        self, random_model: ModelFactory
    ) -> None:
        model = random_model(K=6, J=3)
        with pytest.raises(InvalidModelError):
            expected_visits(model, _always(1))

    def test_ccp_shape_must_fit(self) -> None:
        with pytest.raises(InvalidModelError):
            expected_visits(_episode_model(0.0), _always(1, n_states=5))

    def test_functionals_per_family(self, random_model: ModelFactory) -> None:
        assert set(default_functionals(_episode_model(0.0))) == {
            "expected_visits",
            "expected_absences",
        }
        assert default_functionals(random_model()) == {}


class CounterfactualModelTestSuite:
    def test_no_override_returns_the_model(self) -> None:
        model = _episode_model(0.2)
        assert counterfactual_model(model, {}) is model

    def test_override_changes_only_the_design(self) -> None:
        model = _episode_model(0.2)
        changed = counterfactual_model(model, {"coinsurance": 0.0})
        assert changed.gilleskie is not None
        assert changed.gilleskie.coinsurance == 0.0
        np.testing.assert_array_equal(changed.transitions, model.transitions)
        np.testing.assert_array_equal(changed.theta, model.theta)
        assert not np.array_equal(changed.design, model.design)

    def test_unknown_key(self) -> None:
        with pytest.raises(InvalidModelError):
            counterfactual_model(_episode_model(0.2), {"wage": 3.0})

    def test_invalid_value(self) -> None:
        with pytest.raises(InvalidModelError):
            counterfactual_model(_episode_model(0.2), {"income": -1.0})

    def test_other_families_are_refused(
        self, random_model: ModelFactory
    ) -> None:
        with pytest.raises(InvalidModelError):
            counterfactual_model(random_model(), {"income": 50.0})


class CounterfactualDrawsTestSuite:
    def test_draws_are_decoded_into_model_and_mixture(self) -> None:
        model = _episode_model(0.2)
        mix = make_mixture(
            [0.4, 0.6], [[0.0, 1.0, -1.0], [0.5, 0.0, 0.2]], [1.0, 2.0]
        )
        chi = transform(np.array([1.5]), mix)
        drawn = draw_parameters(model, [0], 2, chi)
        assert drawn.model.theta[0] == pytest.approx(1.5)
        np.testing.assert_array_equal(drawn.model.theta[1:], model.theta[1:])
        np.testing.assert_allclose(drawn.mixture.weights, mix.weights)
        np.testing.assert_allclose(drawn.mixture.locations, mix.locations)

    def test_empty_overrides_reproduce_the_baseline(self) -> None:
        model = _episode_model(0.3)
        mixes = [
            make_mixture([1.0], [[0.0, 0.0, 0.0]], [1.0]),
            make_mixture([0.5, 0.5], [[0.0] * 3, [1.0] * 3], [1.0, 0.5]),
        ]
        draws = [
            (mix.weights.size, transform(np.empty(0), mix)) for mix in mixes
        ]
        baseline = counterfactual_draws(model, [], draws, {})
        assert baseline.shape == (2,)
        assert np.all((baseline >= 0.0) & (baseline <= 2.0))
        again = counterfactual_draws(model, [], draws, {})
        np.testing.assert_array_equal(baseline, again)

    def test_logit_functionals(self, random_model: ModelFactory) -> None:
        model = _episode_model(0.3)
        functionals = logit_functionals(model, {"coinsurance": 0.0})
        assert set(functionals) == {
            "expected_visits",
            "expected_absences",
            "counterfactual_expected_visits",
        }
        value = functionals["expected_visits"](model)
        assert 0.0 <= value <= 2.0
        assert logit_functionals(random_model(), {}) == {}
