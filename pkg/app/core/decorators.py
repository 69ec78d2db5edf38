"""
A module for decorators in the app-core package.
"""

import functools
import logging
from collections.abc import Callable
from time import perf_counter
from typing import ParamSpec, TypeVar

from app.exceptions.exceptions import DDCError

logger: logging.Logger = logging.getLogger(__name__)

P = ParamSpec("P")
R = TypeVar("R")


def log_stage(func: Callable[P, R]) -> Callable[P, R]:
    """
    Log the start, the wall time and the outcome of a pipeline stage
     such as a command, a chain or the logit fit. Domain failures are
     logged with their detail and re-raised unchanged.

    :param func: The stage to be decorated
    :type func: Callable[P, R]
    :return: The decorated stage
    :rtype: Callable[P, R]
    """

    @functools.wraps(func)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
        logger.info("Stage %s started", func.__name__)
        start_time: float = perf_counter()
        try:
            value: R = func(*args, **kwargs)
        except DDCError as exc:
            logger.error(
                "Stage %s failed after %.3f s: %s",
                func.__name__,
                perf_counter() - start_time,
                exc.detail,
            )
            raise
        logger.info(
            "Stage %s finished in %.3f s",
            func.__name__,
            perf_counter() - start_time,
        )
        return value

    return wrapper
