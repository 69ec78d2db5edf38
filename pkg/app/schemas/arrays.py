"""
A module for array field types in the app-schemas package.
"""

from typing import Annotated, Any, TypeAlias

import numpy as np
import numpy.typing as npt
from pydantic import BeforeValidator, PlainSerializer

FloatArray: TypeAlias = npt.NDArray[np.float64]


def as_float_array(value: Any) -> FloatArray:
    """
    Coerce nested sequences or arrays into a float64 numpy array

    :param value: Any array-like value
    :type value: Any
    :return: The value as a float64 array
    :rtype: FloatArray
    """
    return np.asarray(value, dtype=np.float64)


def _to_list(value: FloatArray) -> Any:
    return value.tolist()


NDArray = Annotated[
    np.ndarray,  # type: ignore[type-arg]
    BeforeValidator(as_float_array),
    PlainSerializer(_to_list, when_used="json"),
]
