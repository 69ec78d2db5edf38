"""
Tests for the special functions, root finding and interval helpers.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import special, stats

from app.exceptions.exceptions import (
    BracketingError,
    EmptySampleError,
    NumericalDomainError,
)
from app.schemas.interval import Interval
from app.services.numerics import (
    EULER_GAMMA,
    chi_square_quantile,
    e1_of_exp_neg,
    exp_integral_e1,
    expand_bracket,
    find_root,
    gumbel_max_excess,
    hpd_interval,
)


class ExpIntegralTestSuite:
    @pytest.mark.parametrize(
        "z, expected", [(1.0, 0.2193839344), (0.5, 0.5597735948)]
    )
    def test_reference_values(self, z: float, expected: float) -> None:
        assert exp_integral_e1(z) == pytest.approx(expected, abs=1e-9)

    def test_bracketing_bound_at_ten(self) -> None:
        value = exp_integral_e1(10.0)
        assert math.exp(-10.0) / 11.0 < value <= math.exp(-10.0) / 10.0

    def test_matches_scipy_on_a_grid(self) -> None:
        z = np.geomspace(1e-8, 50.0, 200)
        np.testing.assert_allclose(
            exp_integral_e1(z), special.exp1(z), rtol=1e-10
        )

    def test_strictly_decreasing(self) -> None:
        values = exp_integral_e1(np.linspace(0.01, 20.0, 500))
        assert np.all(np.diff(values) < 0.0)

    def test_small_argument_limit(self) -> None:
        for z in (1e-4, 1e-6):
            gap = exp_integral_e1(z) + math.log(z) + EULER_GAMMA
            assert abs(gap) <= 2.0 * z

    def test_shape_is_preserved(self) -> None:
        assert exp_integral_e1(np.ones((2, 3))).shape == (2, 3)
        assert isinstance(exp_integral_e1(2.0), float)

    @pytest.mark.parametrize("z", [0.0, -1.0, float("nan")])
    def test_rejects_non_positive(self, z: float) -> None:
        with pytest.raises(NumericalDomainError):
            exp_integral_e1(z)

    def test_e1_of_exp_neg(self) -> None:
        a = np.array([-5.0, -0.5, 0.0, 0.7, 3.0, 20.0])
        np.testing.assert_allclose(
            e1_of_exp_neg(a), special.exp1(np.exp(-a)), rtol=1e-11
        )

    def test_e1_of_exp_neg_survives_underflow(self) -> None:
        value = e1_of_exp_neg(np.array([800.0]))[0]
        assert value == pytest.approx(800.0 - EULER_GAMMA)


class GumbelMaxExcessTestSuite:
    def test_matches_definition(self) -> None:
        a = np.linspace(-6.0, 6.0, 49)
        expected = EULER_GAMMA - a + special.exp1(np.exp(-a))
        np.testing.assert_allclose(
            gumbel_max_excess(a), expected, rtol=1e-10, atol=1e-13
        )

    def test_non_negative_and_decreasing(self) -> None:
        values = gumbel_max_excess(np.linspace(-30.0, 60.0, 400))
        assert np.all(values >= 0.0)
        assert np.all(np.diff(values) <= 0.0)

    def test_large_argument_tail(self) -> None:
        assert gumbel_max_excess(np.array([50.0]))[0] == pytest.approx(
            math.exp(-50.0), rel=1e-6
        )


class RootFindingTestSuite:
    def test_linear_root(self) -> None:
        root = find_root(lambda x: x - 2.0, Interval(lo=0.0, hi=5.0), 1e-12)
        assert root == pytest.approx(2.0, abs=1e-12)

    def test_square_root_of_two(self) -> None:
        root = find_root(lambda x: x * x - 2.0, Interval(lo=1.0, hi=2.0))
        assert root == pytest.approx(math.sqrt(2.0), abs=1e-10)

    def test_root_on_an_endpoint(self) -> None:
        assert find_root(lambda x: x, Interval(lo=0.0, hi=1.0)) == 0.0

    def test_missing_sign_change(self) -> None:
        with pytest.raises(BracketingError):
            find_root(lambda x: x * x + 1.0, Interval(lo=-1.0, hi=1.0))

    def test_expand_bracket_finds_far_root(self) -> None:
        bracket = expand_bracket(lambda x: x - 100.0, 0.0, 1.0)
        assert bracket.contains(100.0)

    def test_expand_bracket_gives_up(self) -> None:
        with pytest.raises(BracketingError):
            expand_bracket(lambda x: 1.0, 0.0, 1.0, max_doublings=5)


class ChiSquareQuantileTestSuite:
    @pytest.mark.parametrize(
        "p, dof, expected, tol",
        [
            (0.95, 1, 3.8414588, 1e-5),
            (0.5, 2, 2.0 * math.log(2.0), 1e-6),
            (0.95, 12, 21.0261, 1e-3),
        ],
    )
    def test_reference_values(
        self, p: float, dof: int, expected: float, tol: float
    ) -> None:
        assert chi_square_quantile(p, dof) == pytest.approx(expected, abs=tol)

    @pytest.mark.parametrize("dof", [1, 3, 10, 60, 400])
    def test_inverts_the_cdf(self, dof: int) -> None:
        for p in (0.01, 0.5, 0.95, 0.999):
            x = chi_square_quantile(p, dof)
            assert stats.chi2.cdf(x, dof) == pytest.approx(p, abs=1e-8)

    @pytest.mark.parametrize("p, dof", [(0.0, 1), (1.0, 1), (0.5, 0)])
    def test_domain(self, p: float, dof: int) -> None:
        with pytest.raises(NumericalDomainError):
            chi_square_quantile(p, dof)


class HPDIntervalTestSuite:
    def test_integers_tie_to_lowest_start(self) -> None:
        interval = hpd_interval(np.arange(1.0, 101.0), 0.95)
        assert (interval.lo, interval.hi) == (1.0, 95.0)

    def test_uniform_length(self, rng: np.random.Generator) -> None:
        interval = hpd_interval(rng.uniform(size=1_000_000), 0.95)
        assert interval.length == pytest.approx(0.95, abs=0.005)

    def test_normal_endpoints(self, rng: np.random.Generator) -> None:
        interval = hpd_interval(rng.standard_normal(1_000_000), 0.95)
        assert interval.lo == pytest.approx(-1.96, abs=0.02)
        assert interval.hi == pytest.approx(1.96, abs=0.02)

    def test_not_longer_than_equal_tails(
        self, rng: np.random.Generator
    ) -> None:
        draws = rng.gamma(2.0, size=20_000)
        lo, hi = np.quantile(draws, [0.025, 0.975])
        assert hpd_interval(draws, 0.95).length <= hi - lo

    def test_unsorted_input(self) -> None:
        interval = hpd_interval(np.array([5.0, 1.0, 3.0, 2.0, 4.0]), 0.6)
        assert (interval.lo, interval.hi) == (1.0, 3.0)

    def test_needs_two_draws(self) -> None:
        with pytest.raises(EmptySampleError):
            hpd_interval(np.array([1.0]))

    def test_mass_domain(self) -> None:
        with pytest.raises(NumericalDomainError):
            hpd_interval(np.arange(10.0), 1.0)


class IntervalTestSuite:
    def test_rejects_reversed_bounds(self) -> None:
        with pytest.raises(ValidationError):
            Interval(lo=2.0, hi=1.0)

    def test_length_and_membership(self) -> None:
        interval = Interval(lo=-1.0, hi=2.0)
        assert interval.length == 3.0
        assert interval.contains(2.0)
        assert not interval.contains(2.5)
