"""
A module for priors in the app.services package.
"""

import numpy as np
from scipy.special import logsumexp

from app.schemas.arrays import FloatArray
from app.schemas.chain import NormalMixturePrior

_LOG_SQRT_2PI: float = 0.5 * float(np.log(2.0 * np.pi))


def _component_terms(
    prior: NormalMixturePrior, x: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    weights: FloatArray = np.asarray(prior.weights, dtype=np.float64)
    means: FloatArray = np.asarray(prior.means, dtype=np.float64)
    sds: FloatArray = np.asarray(prior.sds, dtype=np.float64)
    z: FloatArray = (np.asarray(x, dtype=np.float64)[..., None] - means) / sds
    log_terms: FloatArray = (
        np.log(weights) - np.log(sds) - _LOG_SQRT_2PI - 0.5 * z * z
    )
    return log_terms, z, sds


def normal_mixture_logpdf(
    prior: NormalMixturePrior, x: float | FloatArray
) -> float:
    """
    Sum of log densities of a normal mixture prior over all values in x

    :param prior: The prior
    :type prior: NormalMixturePrior
    :param x: Scalar or array of values
    :type x: float | FloatArray
    :return: The summed log density
    :rtype: float
    """
    log_terms, _, _ = _component_terms(prior, np.atleast_1d(x))
    return float(np.sum(logsumexp(log_terms, axis=-1)))


def normal_mixture_grad(
    prior: NormalMixturePrior, x: float | FloatArray
) -> FloatArray:
    """
    Elementwise derivative of the log density

    :param prior: The prior
    :type prior: NormalMixturePrior
    :param x: Scalar or array of values
    :type x: float | FloatArray
    :return: d log p(x) / dx with the shape of np.atleast_1d(x)
    :rtype: FloatArray
    """
    log_terms, z, sds = _component_terms(prior, np.atleast_1d(x))
    responsibilities: FloatArray = np.exp(
        log_terms - logsumexp(log_terms, axis=-1, keepdims=True)
    )
    return np.asarray(np.sum(responsibilities * (-z / sds), axis=-1))


def normal_mixture_sample(
    prior: NormalMixturePrior, rng: np.random.Generator, size: int = 1
) -> FloatArray:
    """
    Draws from a normal mixture prior

    :param prior: The prior
    :type prior: NormalMixturePrior
    :param rng: Random generator
    :type rng: np.random.Generator
    :param size: Number of draws
    :type size: int
    :return: Draws of shape (size,)
    :rtype: FloatArray
    """
    components = rng.choice(len(prior.weights), size=size, p=prior.weights)
    means: FloatArray = np.asarray(prior.means)[components]
    sds: FloatArray = np.asarray(prior.sds)[components]
    return np.asarray(means + sds * rng.standard_normal(size))
