"""
Tests for Gumbel mixtures: densities, sampling, functionals and distances.
"""

import math

import numpy as np
import pytest
from scipy import integrate

from app.exceptions.exceptions import (
    DimensionMismatchError,
    InvalidMixtureError,
    NumericalDomainError,
)
from app.schemas.mixture import GumbelMixture
from app.services.mixture import (
    coordinate_mixture,
    density,
    log_density,
    logistic_gumbel_mixture,
    make_mixture,
    marginal_cdf,
    marginal_median,
    mixture_mean,
    rho_distance,
    rho_distance_quadrature,
    sample,
    scale_factor,
    truncated_mean_above,
)
from app.services.numerics import EULER_GAMMA
from conftest import MixtureFactory

STANDARD_KERNEL_AT_ZERO: float = 0.3201716


def _standard(dim: int = 1) -> GumbelMixture:
    return make_mixture([1.0], np.zeros((1, dim)), [1.0])


class MakeMixtureTestSuite:
    def test_flat_locations_become_a_column(self) -> None:
        mix = make_mixture([0.4, 0.6], [0.0, 1.0], [1.0, 2.0], 0.5)
        assert (mix.m, mix.dim) == (2, 1)
        np.testing.assert_array_equal(mix.sigmas, [0.5, 1.0])

    @pytest.mark.parametrize(
        "weights, locations, scales, scale",
        [
            ([0.5, 0.6], [0.0, 1.0], [1.0, 1.0], 1.0),
            ([0.5, 0.5], [0.0, 1.0], [1.0, -1.0], 1.0),
            ([0.5, 0.5], [0.0, 1.0, 2.0], [1.0, 1.0], 1.0),
            ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0], 1.0),
            ([1.0], [0.0], [1.0], 0.0),
            ([1.0], [math.nan], [1.0], 1.0),
        ],
    )
    def test_invalid_parameters(
        self,
        weights: list[float],
        locations: list[float],
        scales: list[float],
        scale: float,
    ) -> None:
        with pytest.raises(InvalidMixtureError):
            make_mixture(weights, locations, scales, scale)


class DensityTestSuite:
    def test_standard_kernel_at_zero(self) -> None:
        value = density(_standard(), np.array([0.0]))
        assert value == pytest.approx(STANDARD_KERNEL_AT_ZERO, abs=1e-7)

    def test_product_across_coordinates(self) -> None:
        single = float(density(_standard(), np.array([0.0])))
        value = density(_standard(2), np.array([0.0, 0.0]))
        assert value == pytest.approx(single**2, rel=1e-12)

    def test_identical_components_collapse(self) -> None:
        twin = make_mixture([0.3, 0.7], [[1.0], [1.0]], [2.0, 2.0])
        single = make_mixture([1.0], [[1.0]], [2.0])
        points = np.linspace(-5.0, 10.0, 31).reshape(-1, 1)
        np.testing.assert_allclose(
            density(twin, points), density(single, points), rtol=1e-12
        )

    def test_integrates_to_one(self, random_mixture: MixtureFactory) -> None:
        mix = random_mixture(seed=3, m=3, J=1)

        def integrand(x: float) -> float:
            return float(density(mix, np.array([x])))

        total, _ = integrate.quad(
            integrand,
            -40.0,
            80.0,
            points=mix.locations[:, 0].tolist(),
            limit=300,
        )
        assert total == pytest.approx(1.0, abs=1e-7)

    def test_stack_of_points(self, random_mixture: MixtureFactory) -> None:
        mix = random_mixture(m=2, J=2)
        points = np.zeros((4, 3, 2))
        values = log_density(mix, points)
        assert np.shape(values) == (4, 3)

    def test_far_tail_is_finite(self) -> None:
        value = log_density(_standard(), np.array([-60.0]))
        assert value < -1e20
        assert math.isfinite(value)

    def test_wrong_dimension(self) -> None:
        with pytest.raises(DimensionMismatchError):
            log_density(_standard(2), np.array([0.0, 0.0, 0.0]))


class SampleTestSuite:
    def test_single_draw_is_a_vector(self, rng: np.random.Generator) -> None:
        assert sample(_standard(3), rng).shape == (3,)

    def test_moments(self, rng: np.random.Generator) -> None:
        n = 200_000
        mix = make_mixture([1.0], [[1.5]], [1.0], 2.0)
        draws = sample(mix, rng, n)[:, 0]
        sd = 2.0 * math.pi / math.sqrt(6.0)
        tolerance = 4.0 * sd / math.sqrt(n)
        assert draws.mean() == pytest.approx(1.5, abs=tolerance)
        assert draws.std() == pytest.approx(sd, rel=0.02)

    def test_mixture_mean(self, rng: np.random.Generator) -> None:
        n = 200_000
        mix = make_mixture([0.3, 0.7], [[0.0], [10.0]], [1.0, 1.0])
        draws = sample(mix, rng, n)[:, 0]
        assert float(mixture_mean(mix)[0]) == pytest.approx(7.0)
        assert draws.mean() == pytest.approx(7.0, abs=0.05)

    def test_doubling_the_scale_doubles_the_draws(self) -> None:
        base = make_mixture([0.4, 0.6], np.zeros((2, 2)), [1.0, 3.0])
        doubled = base.model_copy(update={"scale": 2.0})
        first = sample(base, np.random.default_rng(7), 50)
        second = sample(doubled, np.random.default_rng(7), 50)
        np.testing.assert_array_equal(second, 2.0 * first)


class MarginalFunctionalsTestSuite:
    def test_single_component_median(self) -> None:
        mix = make_mixture([1.0], [[2.0]], [0.5])
        assert marginal_median(mix, 0) == pytest.approx(1.8946487, abs=1e-7)
        assert marginal_cdf(mix, 0, marginal_median(mix, 0)) == pytest.approx(
            0.5
        )

    def test_two_component_median(self, rng: np.random.Generator) -> None:
        mix = make_mixture([0.4, 0.6], [[-1.0], [2.0]], [1.0, 0.5])
        draws = sample(mix, rng, 400_000)[:, 0]
        assert marginal_median(mix, 0) == pytest.approx(
            float(np.median(draws)), abs=0.02
        )

    def test_cdf_limits(self, random_mixture: MixtureFactory) -> None:
        mix = random_mixture(m=3, J=2)
        values = marginal_cdf(mix, 1, np.array([-200.0, 0.0, 500.0]))
        assert values[0] == 0.0
        assert 0.0 < values[1] < 1.0
        assert values[2] == pytest.approx(1.0)

    @pytest.mark.parametrize("cut", [-2.0, 0.3, 4.0])
    def test_truncated_mean_matches_quadrature(
        self, random_mixture: MixtureFactory, cut: float
    ) -> None:
        mix = random_mixture(seed=5, m=2, J=2)
        marginal = coordinate_mixture(mix, 1)

        def integrand(x: float) -> float:
            return x * float(density(marginal, np.array([x])))

        expected, _ = integrate.quad(integrand, cut, 80.0, limit=300)
        assert truncated_mean_above(mix, 1, cut) == pytest.approx(
            expected, abs=1e-8
        )

    def test_truncated_mean_without_truncation(
        self, random_mixture: MixtureFactory
    ) -> None:
        mix = random_mixture(m=3, J=2)
        assert truncated_mean_above(mix, 0, -math.inf) == pytest.approx(
            float(mixture_mean(mix)[0])
        )

    def test_coordinate_shift(self, random_mixture: MixtureFactory) -> None:
        mix = random_mixture(m=2, J=2)
        shifted = coordinate_mixture(mix, 1, 3.0)
        np.testing.assert_allclose(
            shifted.locations[:, 0], mix.locations[:, 1] + 3.0
        )
        assert shifted.dim == 1

    def test_coordinate_out_of_range(self) -> None:
        with pytest.raises(DimensionMismatchError):
            marginal_median(_standard(2), 2)


class ScaleFactorTestSuite:
    def test_logistic_approximation_has_unit_factor(self) -> None:
        assert scale_factor(logistic_gumbel_mixture(400)) == pytest.approx(
            1.0, abs=0.02
        )

    def test_inverse_homogeneity(self, random_mixture: MixtureFactory) -> None:
        mix = random_mixture(seed=2, m=3, J=2)
        wider = mix.model_copy(
            update={
                "scale": 3.0 * mix.scale,
                "locations": 3.0 * mix.locations,
            }
        )
        assert scale_factor(wider) == pytest.approx(
            scale_factor(mix) / 3.0, rel=1e-8
        )

    def test_single_standard_component(self) -> None:
        median = -math.log(math.log(2.0)) - EULER_GAMMA
        upper = truncated_mean_above(_standard(), 0, median)
        assert scale_factor(_standard()) == pytest.approx(
            math.log(2.0) / upper
        )


class RhoDistanceTestSuite:
    def test_zero_for_identical_mixtures(
        self, random_mixture: MixtureFactory, rng: np.random.Generator
    ) -> None:
        mix = random_mixture(m=2, J=2)
        estimate = rho_distance(mix, mix, 1_000, rng)
        assert estimate.value == 0.0
        assert estimate.standard_error == 0.0

    def test_quadrature_symmetry(self) -> None:
        f1 = make_mixture([1.0], [[0.0]], [1.0])
        f2 = make_mixture([0.5, 0.5], [[-1.0], [2.0]], [1.0, 0.7])
        assert rho_distance_quadrature(f1, f2) == pytest.approx(
            rho_distance_quadrature(f2, f1), rel=1e-8
        )

    def test_grows_with_separation(self) -> None:
        base = make_mixture([1.0], [[0.0]], [1.0])
        gaps = [
            rho_distance_quadrature(base, make_mixture([1.0], [[d]], [1.0]))
            for d in (0.25, 1.0, 4.0)
        ]
        assert gaps[0] < gaps[1] < gaps[2]

    def test_monte_carlo_agrees_with_quadrature(
        self, rng: np.random.Generator
    ) -> None:
        f1 = make_mixture([1.0], [[0.0]], [1.0])
        f2 = make_mixture([0.5, 0.5], [[-1.0], [2.0]], [1.0, 0.7])
        estimate = rho_distance(f1, f2, 100_000, rng)
        exact = rho_distance_quadrature(f1, f2)
        assert abs(estimate.value - exact) < 5.0 * estimate.standard_error

    def test_needs_enough_draws(self, rng: np.random.Generator) -> None:
        with pytest.raises(NumericalDomainError):
            rho_distance(_standard(), _standard(), 99, rng)

    def test_dimensions_must_match(self, rng: np.random.Generator) -> None:
        with pytest.raises(DimensionMismatchError):
            rho_distance(_standard(1), _standard(2), 1_000, rng)

    def test_quadrature_needs_univariate(self) -> None:
        with pytest.raises(DimensionMismatchError):
            rho_distance_quadrature(_standard(2), _standard(2))
