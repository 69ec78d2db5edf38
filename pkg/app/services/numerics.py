"""
A module for numerics in the app.services package.
"""

import logging
import math
from collections.abc import Callable

import numpy as np
from scipy import optimize, special

from app.exceptions.exceptions import (
    BracketingError,
    EmptySampleError,
    NumericalDomainError,
)
from app.schemas.arrays import FloatArray
from app.schemas.interval import Interval

logger: logging.Logger = logging.getLogger(__name__)

EULER_GAMMA: float = float(np.euler_gamma)
_SERIES_TERMS: int = 32
_CF_MAX_ITER: int = 500
_CF_EPS: float = 1e-16
_CF_TINY: float = 1e-300
_EXP_CLIP: float = 700.0


def _e1_series_tail(z: FloatArray) -> FloatArray:
    """
    Sum_{n>=1} (-z)^n / (n n!) for 0 <= z <= 1

    :param z: Arguments in [0, 1]
    :type z: FloatArray
    :return: The series value
    :rtype: FloatArray
    """
    term: FloatArray = np.ones_like(z)
    total: FloatArray = np.zeros_like(z)
    for n in range(1, _SERIES_TERMS + 1):
        term = term * (-z) / n
        total = total + term / n
    return total


def _e1_continued_fraction(z: FloatArray) -> FloatArray:
    """
    E1 by the modified Lentz continued fraction, valid for z > 1

    :param z: Arguments greater than one
    :type z: FloatArray
    :return: E1(z), flushed to zero where exp(-z) underflows
    :rtype: FloatArray
    """
    b: FloatArray = z + 1.0
    c: FloatArray = np.full_like(z, 1.0 / _CF_TINY)
    d: FloatArray = 1.0 / b
    h: FloatArray = d.copy()
    for i in range(1, _CF_MAX_ITER + 1):
        an: float = -float(i * i)
        b = b + 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta: FloatArray = c * d
        h = h * delta
        if np.all(np.abs(delta - 1.0) < _CF_EPS):
            break
    with np.errstate(under="ignore"):
        return np.asarray(np.exp(-z + np.log(h)))


def exp_integral_e1(z: float | FloatArray) -> float | FloatArray:
    """
    Exponential integral E1(z), the integral of exp(-t)/t over [z, inf)

    A power series is used for z <= 1 and a continued fraction above;
     values whose exp(-z) underflows are returned as 0.

    :param z: Positive argument(s)
    :type z: float | FloatArray
    :return: E1(z) with the shape of the input
    :rtype: float | FloatArray
    :raises NumericalDomainError: If some z <= 0
    """
    values: FloatArray = np.atleast_1d(np.asarray(z, dtype=np.float64))
    if np.any(~(values > 0.0)):
        raise NumericalDomainError(
            detail="The exponential integral needs strictly positive"
            " arguments"
        )
    result: FloatArray = np.empty_like(values)
    small: FloatArray = values <= 1.0
    if np.any(small):
        zs: FloatArray = values[small]
        result[small] = -EULER_GAMMA - np.log(zs) - _e1_series_tail(zs)
    if np.any(~small):
        result[~small] = _e1_continued_fraction(values[~small])
    if np.ndim(z) == 0:
        return float(result[0])
    return result.reshape(np.shape(z))


def e1_of_exp_neg(a: FloatArray) -> FloatArray:
    """
    E1(exp(-a)) evaluated from a without forming tiny or huge
     intermediates.

    For a >= 0 this is -gamma + a - tail(exp(-a)), which stays finite when
     exp(-a) underflows (forced actions); for a < 0 the continued fraction
     is used.

    :param a: Real array
    :type a: FloatArray
    :return: E1(exp(-a))
    :rtype: FloatArray
    """
    a = np.asarray(a, dtype=np.float64)
    result: FloatArray = np.empty_like(a)
    upper: FloatArray = a >= 0.0
    if np.any(upper):
        au: FloatArray = a[upper]
        with np.errstate(under="ignore"):
            zu: FloatArray = np.exp(-au)
        result[upper] = -EULER_GAMMA + au - _e1_series_tail(zu)
    if np.any(~upper):
        zl: FloatArray = np.exp(np.minimum(-a[~upper], _EXP_CLIP))
        result[~upper] = _e1_continued_fraction(zl)
    return result


def gumbel_max_excess(a: FloatArray) -> FloatArray:
    """
    h(a) = gamma - a + E1(exp(-a)), the expected gain of the best
     alternative over the baseline in units of the component scale.

    Evaluated as minus the alternating series tail for a >= 0 and with the
    continued fraction otherwise, so both forced and dominated baselines
    stay free of cancellation.

    :param a: Real array
    :type a: FloatArray
    :return: Non-negative h(a)
    :rtype: FloatArray
    """
    a = np.asarray(a, dtype=np.float64)
    result: FloatArray = np.empty_like(a)
    upper: FloatArray = a >= 0.0
    if np.any(upper):
        with np.errstate(under="ignore"):
            result[upper] = -_e1_series_tail(np.exp(-a[upper]))
    if np.any(~upper):
        al: FloatArray = a[~upper]
        zl: FloatArray = np.exp(np.minimum(-al, _EXP_CLIP))
        result[~upper] = EULER_GAMMA - al + _e1_continued_fraction(zl)
    return result


def find_root(
    f: Callable[[float], float], bracket: Interval, tol: float = 1e-12
) -> float:
    """
    Root of a continuous scalar function inside a sign-changing bracket

    :param f: The function
    :type f: Callable[[float], float]
    :param bracket: Interval with f(lo) f(hi) <= 0
    :type bracket: Interval
    :param tol: Absolute tolerance on the root location
    :type tol: float
    :return: The root
    :rtype: float
    :raises BracketingError: If f does not change sign on the bracket
    """
    f_lo: float = f(bracket.lo)
    f_hi: float = f(bracket.hi)
    if f_lo == 0.0:
        return bracket.lo
    if f_hi == 0.0:
        return bracket.hi
    if not (np.isfinite(f_lo) and np.isfinite(f_hi)) or f_lo * f_hi > 0.0:
        raise BracketingError(
            detail=f"No sign change on [{bracket.lo}, {bracket.hi}]:"
            f" f(lo)={f_lo}, f(hi)={f_hi}"
        )
    root: float = optimize.brentq(f, bracket.lo, bracket.hi, xtol=tol)
    return float(root)


def expand_bracket(
    f: Callable[[float], float],
    center: float,
    half_width: float,
    max_doublings: int = 60,
) -> Interval:
    """
    Symmetric bracket around a center, doubled until f changes sign

    :param f: The function
    :type f: Callable[[float], float]
    :param center: Bracket center
    :type center: float
    :param half_width: Initial half width
    :type half_width: float
    :param max_doublings: Doubling budget
    :type max_doublings: int
    :return: A sign-changing bracket
    :rtype: Interval
    :raises BracketingError: If no sign change is found
    """
    width: float = half_width
    for _ in range(max_doublings):
        lo, hi = center - width, center + width
        if f(lo) * f(hi) <= 0.0:
            return Interval(lo=lo, hi=hi)
        width *= 2.0
    raise BracketingError(
        detail=f"No sign change within {width} of {center}"
    )


def chi_square_quantile(p: float, dof: int) -> float:
    """
    Quantile of the chi-square distribution, by root finding on the
     regularized lower incomplete gamma function

    :param p: Probability in (0, 1)
    :type p: float
    :param dof: Degrees of freedom
    :type dof: int
    :return: x with P(dof/2, x/2) = p
    :rtype: float
    :raises NumericalDomainError: If p is outside (0, 1) or dof < 1
    """
    if not 0.0 < p < 1.0:
        raise NumericalDomainError(detail=f"p={p} must lie in (0, 1)")
    if dof < 1:
        raise NumericalDomainError(detail=f"dof={dof} must be positive")
    half: float = dof / 2.0

    def excess(x: float) -> float:
        return float(special.gammainc(half, x / 2.0)) - p

    hi: float = float(dof) + 10.0 * math.sqrt(2.0 * dof) + 10.0
    while excess(hi) < 0.0:
        hi *= 2.0
    return find_root(excess, Interval(lo=0.0, hi=hi), tol=1e-13)


def hpd_interval(draws: FloatArray, mass: float = 0.95) -> Interval:
    """
    Highest posterior density interval as the shortest window of sorted
     draws holding ceil(mass n) of them; ties go to the lowest start

    :param draws: Sample of reals
    :type draws: FloatArray
    :param mass: Probability mass in (0, 1)
    :type mass: float
    :return: The HPD interval
    :rtype: Interval
    :raises EmptySampleError: If fewer than two draws are given
    """
    values: FloatArray = np.sort(np.asarray(draws, dtype=np.float64).ravel())
    n: int = values.size
    if n < 2:
        raise EmptySampleError(
            detail=f"An HPD interval needs at least 2 draws, got {n}"
        )
    if not 0.0 < mass < 1.0:
        raise NumericalDomainError(detail=f"mass={mass} must lie in (0, 1)")
    window: int = max(1, math.ceil(mass * n - 1e-9))
    widths: FloatArray = values[window - 1 :] - values[: n - window + 1]
    start: int = int(np.argmin(widths))
    return Interval(
        lo=float(values[start]), hi=float(values[start + window - 1])
    )
