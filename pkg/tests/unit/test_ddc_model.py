"""
Tests for the model builders, the count design and panel simulation.
"""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.exceptions.exceptions import DataMismatchError, InvalidModelError
from app.schemas.model import CCPMatrix, GilleskieParams, PanelCounts
from app.services.ddc_model import (
    build_custom_model,
    build_gilleskie_model,
    build_rust_model,
    ccps_to_counts,
    counts_from_panel,
    counts_from_table,
    counts_table,
    gilleskie_consumption,
    gilleskie_states,
    sickness_probability,
    simulate_panel,
)
from conftest import ModelFactory


def _uniform_ccp(n_states: int, n_actions: int) -> CCPMatrix:
    return CCPMatrix(
        probabilities=np.full((n_states, n_actions), 1.0 / n_actions)
    )


class RustModelTestSuite:
    def test_shapes_and_utilities(self) -> None:
        model = build_rust_model(-2.0, -0.1, 0.3, 0.5, 0.95, K=10)
        assert (model.n_states, model.n_actions, model.J) == (10, 2, 1)
        utilities = model.utilities
        np.testing.assert_allclose(
            utilities[:, 0], -2.0 - 0.1 * np.arange(1, 11)
        )
        np.testing.assert_array_equal(utilities[:, 1], 0.0)

    def test_replacement_resets_mileage(self) -> None:
        model = build_rust_model(-2.0, -0.1, 0.3, 0.5, 0.95, K=10)
        replace = model.transitions[1]
        np.testing.assert_array_equal(replace[:, 0], 1.0)
        np.testing.assert_array_equal(replace[:, 1:], 0.0)

    def test_keeping_piles_overflow_on_the_last_bin(self) -> None:
        model = build_rust_model(-2.0, -0.1, 0.3, 0.5, 0.95, K=10)
        keep = model.transitions[0]
        np.testing.assert_allclose(keep[0, :3], [0.3, 0.5, 0.2])
        assert keep[8, 9] == pytest.approx(0.7)
        assert keep[9, 9] == pytest.approx(1.0)
        np.testing.assert_allclose(keep.sum(axis=1), 1.0)

    def test_intercept_is_tied_to_the_shock(self) -> None:
        model = build_rust_model(-2.0, -0.1, 0.3, 0.5, 0.95)
        assert model.intercept_indices == (0,)
        assert model.intercept_signs == (-1.0,)
        assert model.n_states == 90

    @pytest.mark.parametrize(
        "theta2, theta3, K", [(0.7, 0.5, 10), (-0.1, 0.5, 10), (0.3, 0.3, 1)]
    )
    def test_invalid_inputs(
        self, theta2: float, theta3: float, K: int
    ) -> None:
        with pytest.raises(InvalidModelError):
            build_rust_model(-2.0, -0.1, theta2, theta3, 0.95, K=K)

    def test_discount_factor_bounds(self) -> None:
        with pytest.raises(InvalidModelError):
            build_rust_model(-2.0, -0.1, 0.3, 0.5, 1.0, K=10)


class GilleskieModelTestSuite:
    @pytest.mark.parametrize("T, K", [(2, 6), (3, 15), (8, 205)])
    def test_state_count(self, T: int, K: int) -> None:
        assert len(gilleskie_states(T)) == K
        assert GilleskieParams(T=T).n_states == K

    def test_state_order(self) -> None:
        states = gilleskie_states(2)
        assert states[0] == (0, 0, 0)
        assert states[1] == (1, 0, 0)
        assert states[2:] == [(2, 0, 0), (2, 0, 1), (2, 1, 0), (2, 1, 1)]

    def test_transitions_are_stochastic(self) -> None:
        model = build_gilleskie_model(GilleskieParams(T=4), 0.9)
        assert model.transitions.shape == (4, 31, 31)
        np.testing.assert_allclose(model.transitions.sum(axis=2), 1.0)
        assert model.J == 3
        assert model.intercept_indices == (0, 1, 2)

    def test_last_period_returns_to_well(self) -> None:
        model = build_gilleskie_model(GilleskieParams(T=2), 0.9)
        np.testing.assert_array_equal(model.transitions[:, 2:, 0], 1.0)

    def test_well_state_falls_sick(self) -> None:
        params = GilleskieParams(T=2, sick_probability=0.25)
        model = build_gilleskie_model(params, 0.9)
        np.testing.assert_allclose(model.transitions[:, 0, 1], 0.25)
        np.testing.assert_allclose(model.transitions[:, 0, 0], 0.75)

    def test_sickness_index(self) -> None:
        params = GilleskieParams(sick_index=0.0)
        assert sickness_probability(params) == pytest.approx(0.5)

    def test_visit_and_absence_counts_advance(self) -> None:
        params = GilleskieParams(
            T=2, recovery_table=np.zeros((6, 4)), recovery_coefficients=None
        )
        model = build_gilleskie_model(params, 0.9)
        states = gilleskie_states(2)
        targets = [(2, 0, 0), (2, 1, 0), (2, 0, 1), (2, 1, 1)]
        for d, target in enumerate(targets):
            assert model.transitions[d, 1, states.index(target)] == 1.0

    def test_recovery_table_size(self) -> None:
        params = GilleskieParams(
            T=2, recovery_table=np.zeros((5, 4)), recovery_coefficients=None
        )
        with pytest.raises(InvalidModelError):
            build_gilleskie_model(params, 0.9)

    def test_consumption(self) -> None:
        params = GilleskieParams()
        assert gilleskie_consumption(params, (0, 0, 0), 3) == params.income
        sick = (1, 0, 0)
        assert gilleskie_consumption(params, sick, 0) == params.income
        assert gilleskie_consumption(params, sick, 1) == pytest.approx(
            params.income - params.coinsurance
        )
        assert gilleskie_consumption(params, sick, 2) < params.income

    def test_well_state_design(self) -> None:
        model = build_gilleskie_model(GilleskieParams(T=2), 0.9)
        well = model.design[0]
        np.testing.assert_array_equal(well[1:, 3], 1.0)
        assert well[0, 4] == 1.0
        np.testing.assert_array_equal(well[:, 5], 0.0)

    def test_missing_laws_are_rejected(self) -> None:
        with pytest.raises(ValueError):
            GilleskieParams(sick_probability=None, sick_index=None)


class CustomModelTestSuite:
    def test_utility_table_becomes_a_design(self) -> None:
        transitions = np.stack([np.eye(3), np.full((3, 3), 1.0 / 3.0)])
        utilities = np.array([[0.0, 1.0], [0.5, -1.0], [2.0, 0.0]])
        model = build_custom_model(transitions, utilities, 0.8)
        np.testing.assert_array_equal(model.utilities, utilities)
        assert model.n_theta == 1

    def test_non_stochastic_rows(self) -> None:
        transitions = np.stack([np.eye(2), 0.5 * np.eye(2)])
        with pytest.raises(InvalidModelError):
            build_custom_model(transitions, np.zeros((2, 2)), 0.8)

    def test_utility_shape(self) -> None:
        transitions = np.stack([np.eye(2), np.eye(2)])
        with pytest.raises(InvalidModelError):
            build_custom_model(transitions, np.zeros((2, 3)), 0.8)

    def test_with_theta(self, random_model: ModelFactory) -> None:
        model = random_model(n_theta=3)
        updated = model.with_theta(np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(updated.theta, [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            model.with_theta(np.zeros(2))


class CountsTestSuite:
    def test_count_design_scales_probabilities(self) -> None:
        ccp = CCPMatrix(probabilities=np.array([[0.25, 0.75], [1.0, 0.0]]))
        counts = ccps_to_counts(ccp, 1000.0)
        np.testing.assert_allclose(counts.counts, [[250.0, 750.0], [1000, 0]])

    def test_count_design_needs_positive_n(self) -> None:
        with pytest.raises(DataMismatchError):
            ccps_to_counts(_uniform_ccp(2, 2), 0.0)

    def test_panel_totals(self, random_model: ModelFactory) -> None:
        model = random_model(K=5, J=2)
        records, counts = simulate_panel(
            model, _uniform_ccp(5, 3), 40, 7, 0, np.random.default_rng(1)
        )
        assert list(records.columns) == ["i", "t", "x", "d"]
        assert len(records) == 280
        assert counts.counts.sum() == 280.0
        assert np.all(records.groupby("i")["t"].count() == 7)

    def test_degenerate_choices(self, random_model: ModelFactory) -> None:
        model = random_model(K=4, J=1)
        probabilities = np.zeros((4, 2))
        probabilities[:, 0] = 1.0
        _, counts = simulate_panel(
            model,
            CCPMatrix(probabilities=probabilities),
            30,
            5,
            [0.25, 0.25, 0.25, 0.25],
            np.random.default_rng(2),
        )
        np.testing.assert_array_equal(counts.counts[:, 1], 0.0)

    def test_panel_is_reproducible(self, random_model: ModelFactory) -> None:
        model = random_model(K=5, J=2)
        ccp = _uniform_ccp(5, 3)
        first, _ = simulate_panel(
            model, ccp, 20, 4, 1, np.random.default_rng(3)
        )
        second, _ = simulate_panel(
            model, ccp, 20, 4, 1, np.random.default_rng(3)
        )
        pd.testing.assert_frame_equal(first, second)

    def test_first_period_starts_in_the_initial_state(
        self, random_model: ModelFactory
    ) -> None:
        model = random_model(K=5, J=2)
        records, _ = simulate_panel(
            model, _uniform_ccp(5, 3), 10, 3, 4, np.random.default_rng(4)
        )
        assert np.all(records.loc[records["t"] == 0, "x"] == 4)

    def test_ccp_shape_must_match(self, random_model: ModelFactory) -> None:
        model = random_model(K=5, J=2)
        with pytest.raises(DataMismatchError):
            simulate_panel(
                model, _uniform_ccp(4, 3), 10, 3, 0, np.random.default_rng(5)
            )

    def test_counts_from_panel(self) -> None:
        records = pd.DataFrame(
            {"i": [0, 0, 1], "t": [0, 1, 0], "x": [0, 1, 1], "d": [1, 0, 0]}
        )
        counts = counts_from_panel(records, 2, 2)
        np.testing.assert_array_equal(counts.counts, [[0.0, 1.0], [2.0, 0.0]])

    def test_counts_from_panel_out_of_range(self) -> None:
        records = pd.DataFrame({"i": [0], "t": [0], "x": [3], "d": [0]})
        with pytest.raises(DataMismatchError):
            counts_from_panel(records, 2, 2)

    def test_counts_table_is_long(self, tmp_path: Path) -> None:
        counts = PanelCounts(counts=np.array([[3.0, 1.0], [2.0, 4.5]]))
        table = counts_table(counts)
        assert list(table.columns) == ["d", "x", "n"]
        assert table.values.tolist() == [
            [0, 0, 3.0],
            [0, 1, 2.0],
            [1, 0, 1.0],
            [1, 1, 4.5],
        ]
        path = tmp_path / "counts.csv"
        table.to_csv(path, index=False)
        shuffled = pd.read_csv(path).iloc[[3, 0, 2, 1]]
        restored = counts_from_table(shuffled, 2, 2)
        np.testing.assert_array_equal(restored.counts, counts.counts)

    @pytest.mark.parametrize(
        "rows",
        [
            [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)],
            [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 0, 2.0)],
            [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (2, 1, 1.0)],
            [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0)],
        ],
    )
    def test_counts_table_must_cover_every_pair(
        self, rows: list[tuple[int, int, float]]
    ) -> None:
        table = pd.DataFrame(rows, columns=["d", "x", "n"])
        with pytest.raises(DataMismatchError):
            counts_from_table(table, 2, 2)

    def test_counts_table_columns(self) -> None:
        table = pd.DataFrame({"x": [0, 1], "n_0": [1, 2], "n_1": [3, 4]})
        with pytest.raises(DataMismatchError):
            counts_from_table(table, 2, 2)
