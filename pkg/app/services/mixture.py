"""
A module for mixture in the app.services package.
"""

import logging
import math
from typing import NamedTuple

import numpy as np
from pydantic import ValidationError
from scipy import integrate
from scipy.special import logsumexp

from app.exceptions.exceptions import (
    DimensionMismatchError,
    InvalidMixtureError,
    NumericalDomainError,
)
from app.schemas.arrays import FloatArray
from app.schemas.mixture import GumbelMixture
from app.services.numerics import (
    EULER_GAMMA,
    e1_of_exp_neg,
    expand_bracket,
    find_root,
)

logger: logging.Logger = logging.getLogger(__name__)

LOG2: float = math.log(2.0)
MIN_RHO_DRAWS: int = 100


class RhoEstimate(NamedTuple):
    """Monte Carlo estimate of the weighted L1 distance and its error."""

    value: float
    standard_error: float


def make_mixture(
    weights: FloatArray | list[float],
    locations: FloatArray | list[list[float]] | list[float],
    component_scales: FloatArray | list[float],
    scale: float = 1.0,
) -> GumbelMixture:
    """
    Build a validated Gumbel mixture

    :param weights: Component weights
    :type weights: FloatArray | list[float]
    :param locations: Component locations, (m, J) or (m,) for J=1
    :type locations: FloatArray | list[list[float]] | list[float]
    :param component_scales: Relative component scales
    :type component_scales: FloatArray | list[float]
    :param scale: Common scale
    :type scale: float
    :return: The mixture
    :rtype: GumbelMixture
    :raises InvalidMixtureError: If the parameters violate an invariant
    """
    try:
        return GumbelMixture(
            weights=weights,
            locations=locations,
            component_scales=component_scales,
            scale=scale,
        )
    except ValidationError as e:
        raise InvalidMixtureError(detail=f"Invalid mixture: {e}") from e


def _check_dim(mix: GumbelMixture, j: int) -> None:
    if not 0 <= j < mix.dim:
        raise DimensionMismatchError(
            detail=f"Coordinate {j} outside a {mix.dim}-dimensional mixture"
        )


def log_density(mix: GumbelMixture, z: FloatArray) -> FloatArray | float:
    """
    Log density of the mixture at one point or a stack of points

    :param mix: The mixture
    :type mix: GumbelMixture
    :param z: Point(s) with last axis of length J
    :type z: FloatArray
    :return: Log density, scalar for a single point
    :rtype: FloatArray | float
    :raises DimensionMismatchError: If the last axis is not J
    """
    points: FloatArray = np.asarray(z, dtype=np.float64)
    if points.ndim == 0 or points.shape[-1] != mix.dim:
        raise DimensionMismatchError(
            detail=f"Expected points of dimension {mix.dim}, got shape"
            f" {points.shape}"
        )
    sigmas: FloatArray = mix.sigmas
    t: FloatArray = (points[..., None, :] - mix.locations) / sigmas[:, None]
    with np.errstate(over="ignore"):
        kernel: FloatArray = -t - EULER_GAMMA - np.exp(-t - EULER_GAMMA)
    per_component: FloatArray = (
        np.log(mix.weights)
        - mix.dim * np.log(sigmas)
        + np.sum(kernel, axis=-1)
    )
    result = logsumexp(per_component, axis=-1)
    return float(result) if np.ndim(result) == 0 else np.asarray(result)


def density(mix: GumbelMixture, z: FloatArray) -> FloatArray | float:
    """
    Mixture density sum_k w_k prod_j phi((z_j - mu_jk)/s_k)/s_k with the
     centered Gumbel kernel phi(t) = exp(-t - gamma - exp(-t - gamma))

    :param mix: The mixture
    :type mix: GumbelMixture
    :param z: Point(s) with last axis of length J
    :type z: FloatArray
    :return: The density
    :rtype: FloatArray | float
    """
    value = log_density(mix, z)
    return float(np.exp(value)) if np.ndim(value) == 0 else np.exp(value)


def sample(
    mix: GumbelMixture, rng: np.random.Generator, size: int | None = None
) -> FloatArray:
    """
    Draw shock vectors: pick component k with probability w_k, then
     mu_k + s_k (G - gamma) per coordinate with G standard Gumbel

    :param mix: The mixture
    :type mix: GumbelMixture
    :param rng: Random generator
    :type rng: np.random.Generator
    :param size: Number of draws; None returns a single vector
    :type size: int | None
    :return: Array of shape (J,) or (size, J)
    :rtype: FloatArray
    """
    n: int = 1 if size is None else size
    components = rng.choice(mix.m, size=n, p=mix.weights)
    shocks: FloatArray = rng.gumbel(size=(n, mix.dim)) - EULER_GAMMA
    draws: FloatArray = (
        mix.locations[components] + mix.sigmas[components, None] * shocks
    )
    return draws[0] if size is None else draws


def marginal_cdf(
    mix: GumbelMixture, j: int, x: float | FloatArray
) -> float | FloatArray:
    """
    Marginal CDF of coordinate j, sum_k w_k exp(-exp(-(x-mu_jk)/s_k - gamma))

    :param mix: The mixture
    :type mix: GumbelMixture
    :param j: Coordinate (0-based)
    :type j: int
    :param x: Evaluation point(s)
    :type x: float | FloatArray
    :return: The CDF
    :rtype: float | FloatArray
    """
    _check_dim(mix, j)
    values: FloatArray = np.asarray(x, dtype=np.float64)
    t: FloatArray = (values[..., None] - mix.locations[:, j]) / mix.sigmas
    with np.errstate(over="ignore", under="ignore"):
        cdf: FloatArray = np.sum(
            mix.weights * np.exp(-np.exp(-t - EULER_GAMMA)), axis=-1
        )
    return float(cdf) if np.ndim(cdf) == 0 else cdf


def mixture_mean(mix: GumbelMixture) -> FloatArray:
    """
    Mean vector sum_k w_k mu_k

    :param mix: The mixture
    :type mix: GumbelMixture
    :return: Array of shape (J,)
    :rtype: FloatArray
    """
    return np.asarray(mix.weights @ mix.locations)


def marginal_median(mix: GumbelMixture, j: int) -> float:
    """
    Median of coordinate j, closed form for one component and by root
     finding on the marginal CDF otherwise

    :param mix: The mixture
    :type mix: GumbelMixture
    :param j: Coordinate (0-based)
    :type j: int
    :return: The median
    :rtype: float
    :raises BracketingError: If no bracket around the median is found
    """
    _check_dim(mix, j)
    locations: FloatArray = mix.locations[:, j]
    sigmas: FloatArray = mix.sigmas
    if mix.m == 1:
        return float(
            locations[0]
            - sigmas[0] * math.log(LOG2)
            - sigmas[0] * EULER_GAMMA
        )
    center: float = float(mix.weights @ locations)
    half_width: float = 10.0 * float(
        np.max(sigmas + np.abs(locations - center))
    )

    def excess(x: float) -> float:
        return float(marginal_cdf(mix, j, x)) - 0.5

    bracket = expand_bracket(excess, center, half_width)
    return find_root(excess, bracket)


def truncated_mean_above(mix: GumbelMixture, j: int, M: float) -> float:
    """
    E[X 1(X >= M)] for coordinate X of the mixture, in closed form:
     sum_k w_k (mu_k - M exp(-exp(-b_k)) + s_k E1(exp(-b_k))) with
     b_k = (M - mu_k)/s_k + gamma

    :param mix: The mixture
    :type mix: GumbelMixture
    :param j: Coordinate (0-based)
    :type j: int
    :param M: Truncation point
    :type M: float
    :return: The truncated first moment
    :rtype: float
    """
    _check_dim(mix, j)
    locations: FloatArray = mix.locations[:, j]
    if M == -math.inf:
        return float(mix.weights @ locations)
    sigmas: FloatArray = mix.sigmas
    b: FloatArray = (M - locations) / sigmas + EULER_GAMMA
    with np.errstate(under="ignore"):
        below: FloatArray = np.exp(-np.exp(np.minimum(-b, 700.0)))
    terms: FloatArray = locations - M * below + sigmas * e1_of_exp_neg(b)
    return float(mix.weights @ terms)


def coordinate_mixture(
    mix: GumbelMixture, j: int, shift: float = 0.0
) -> GumbelMixture:
    """
    Univariate mixture of coordinate j with locations moved by shift

    :param mix: The mixture
    :type mix: GumbelMixture
    :param j: Coordinate (0-based)
    :type j: int
    :param shift: Added to every location
    :type shift: float
    :return: The marginal mixture
    :rtype: GumbelMixture
    """
    _check_dim(mix, j)
    return make_mixture(
        mix.weights,
        (mix.locations[:, j] + shift).reshape(-1, 1),
        mix.component_scales,
        mix.scale,
    )


def scale_factor(mix: GumbelMixture) -> float:
    """
    Factor s = log 2 / E[e 1(e >= median)] for the demeaned first
     coordinate e, which rescales shocks to the logistic convention

    :param mix: The mixture
    :type mix: GumbelMixture
    :return: The positive scale factor
    :rtype: float
    """
    mean: float = float(mixture_mean(mix)[0])
    centered: GumbelMixture = coordinate_mixture(mix, 0, -mean)
    median: float = marginal_median(centered, 0)
    upper: float = truncated_mean_above(centered, 0, median)
    if not upper > 0.0:
        raise NumericalDomainError(
            detail=f"Truncated mean above the median is {upper}, expected"
            " a positive value"
        )
    return LOG2 / upper


def _weighted_gap(
    f1: GumbelMixture, f2: GumbelMixture, points: FloatArray
) -> tuple[FloatArray, FloatArray]:
    log1: FloatArray = np.asarray(log_density(f1, points))
    log2: FloatArray = np.asarray(log_density(f2, points))
    weight: FloatArray = 1.0 + np.sum(np.abs(points), axis=-1)
    log_average: FloatArray = np.logaddexp(log1, log2) - LOG2
    ratio: FloatArray = np.abs(np.exp(log1 - log_average) - np.exp(
        log2 - log_average
    ))
    return weight * ratio, log_average


def rho_distance(
    f1: GumbelMixture,
    f2: GumbelMixture,
    n_mc: int,
    rng: np.random.Generator,
) -> RhoEstimate:
    """
    Monte Carlo estimate of the integral of (1 + sum_j |e_j|) |f1 - f2|.

    Half of the draws come from each mixture, which stratifies the
    importance density (f1 + f2)/2.

    :param f1: First mixture
    :type f1: GumbelMixture
    :param f2: Second mixture
    :type f2: GumbelMixture
    :param n_mc: Total number of draws
    :type n_mc: int
    :param rng: Random generator
    :type rng: np.random.Generator
    :return: The estimate and its standard error
    :rtype: RhoEstimate
    :raises DimensionMismatchError: If the mixtures differ in dimension
    :raises NumericalDomainError: If fewer than 100 draws are requested
    """
    if f1.dim != f2.dim:
        raise DimensionMismatchError(
            detail=f"Mixture dimensions differ: {f1.dim} and {f2.dim}"
        )
    if n_mc < MIN_RHO_DRAWS:
        raise NumericalDomainError(
            detail=f"rho_distance needs at least {MIN_RHO_DRAWS} draws"
        )
    half: int = n_mc // 2
    parts: list[FloatArray] = []
    for source, size in ((f1, half), (f2, n_mc - half)):
        values, _ = _weighted_gap(f1, f2, sample(source, rng, size))
        parts.append(values)
    value: float = 0.5 * float(parts[0].mean() + parts[1].mean())
    variance: float = 0.25 * sum(
        float(p.var(ddof=1)) / p.size for p in parts
    )
    return RhoEstimate(value=value, standard_error=math.sqrt(variance))


def rho_distance_quadrature(f1: GumbelMixture, f2: GumbelMixture) -> float:
    """
    Deterministic rho distance for univariate mixtures by adaptive
     quadrature over a range covering both supports

    :param f1: First mixture
    :type f1: GumbelMixture
    :param f2: Second mixture
    :type f2: GumbelMixture
    :return: The distance
    :rtype: float
    :raises DimensionMismatchError: If either mixture is not univariate
    """
    if f1.dim != 1 or f2.dim != 1:
        raise DimensionMismatchError(
            detail="Quadrature rho distance needs univariate mixtures"
        )
    locations: FloatArray = np.concatenate(
        [f1.locations[:, 0], f2.locations[:, 0]]
    )
    widest: float = float(max(f1.sigmas.max(), f2.sigmas.max()))
    lo: float = float(locations.min()) - 10.0 * widest
    hi: float = float(locations.max()) + 60.0 * widest

    def integrand(x: float) -> float:
        point: FloatArray = np.array([x])
        gap: float = abs(float(density(f1, point)) - float(density(f2, point)))
        return (1.0 + abs(x)) * gap

    value, _ = integrate.quad(
        integrand, lo, hi, points=np.unique(locations).tolist(), limit=500
    )
    return float(value)


def logistic_gumbel_mixture(m: int = 400) -> GumbelMixture:
    """
    Equal-weight unit-scale Gumbel mixture approximating the standard
     logistic law.

    A logistic variable is a difference G1 - G2 of standard Gumbels, so
    conditioning on quantiles g_k of G2 gives components with mean
    gamma - g_k.

    :param m: Number of components
    :type m: int
    :return: The approximating mixture
    :rtype: GumbelMixture
    """
    levels: FloatArray = (np.arange(1, m + 1) - 0.5) / m
    quantiles: FloatArray = -np.log(-np.log(levels))
    return make_mixture(
        np.full(m, 1.0 / m),
        (EULER_GAMMA - quantiles).reshape(-1, 1),
        np.ones(m),
    )
