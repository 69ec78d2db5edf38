"""
A module for diagnostics in the app.services package.
"""

import logging
import math

import numpy as np
from scipy import stats

from app.exceptions.exceptions import EmptySampleError, NumericalDomainError
from app.schemas.arrays import FloatArray
from app.schemas.report import GewekeResult

logger: logging.Logger = logging.getLogger(__name__)

MIN_GEWEKE_LENGTH: int = 100


def batch_means_variance(series: FloatArray) -> float:
    """
    Variance of the sample mean of a correlated series by non-overlapping
     batch means with about sqrt(n) batches

    :param series: The series
    :type series: FloatArray
    :return: Estimated variance of its mean
    :rtype: float
    """
    n: int = series.size
    batches: int = max(2, math.isqrt(n))
    size: int = n // batches
    means: FloatArray = series[: batches * size].reshape(batches, size).mean(
        axis=1
    )
    return float(np.var(means, ddof=1) / batches)


def geweke_diagnostic(
    series: FloatArray, early: float = 0.1, late: float = 0.5
) -> GewekeResult:
    """
    Mean equality z-test between the first and the last part of a chain.

    :param series: Draws of a scalar, in iteration order
    :type series: FloatArray
    :param early: Fraction forming the early segment
    :type early: float
    :param late: Fraction forming the late segment
    :type late: float
    :return: z statistic, two-sided p-value and segment means
    :rtype: GewekeResult
    :raises EmptySampleError: If the series has fewer than 100 values
    :raises NumericalDomainError: If the fractions overlap or are empty
    """
    values: FloatArray = np.asarray(series, dtype=np.float64).ravel()
    n: int = values.size
    if n < MIN_GEWEKE_LENGTH:
        raise EmptySampleError(
            detail=f"Geweke diagnostic needs {MIN_GEWEKE_LENGTH} values,"
            f" got {n}"
        )
    if not (0.0 < early and 0.0 < late and early + late <= 1.0):
        raise NumericalDomainError(
            detail=f"Segment fractions {early}, {late} must be positive and"
            " not overlap"
        )
    head: FloatArray = values[: max(2, int(early * n))]
    tail: FloatArray = values[n - max(2, int(late * n)) :]
    early_mean: float = float(head.mean())
    late_mean: float = float(tail.mean())
    variance: float = batch_means_variance(head) + batch_means_variance(tail)
    gap: float = early_mean - late_mean
    if variance > 0.0:
        z: float = gap / math.sqrt(variance)
    else:
        z = 0.0 if gap == 0.0 else math.copysign(math.inf, gap)
    p_value: float = float(2.0 * stats.norm.sf(abs(z)))
    if p_value < 0.05:
        logger.warning(f"Geweke test rejects equal means: z={z:.3f}")
    return GewekeResult(
        z=z, p_value=p_value, early_mean=early_mean, late_mean=late_mean
    )
