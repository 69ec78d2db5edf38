"""
A module for mixture in the app-schemas package.
"""

from typing import Self

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

from app.schemas.arrays import FloatArray, NDArray

WEIGHT_SUM_TOL: float = 1e-12


class GumbelMixture(BaseModel):
    """
    J-dimensional location-scale mixture of centered Gumbel kernels.

    Component k has weight omega_k, location vector mu_k and effective
    scale sigma * sigma_tilde_k shared by all coordinates.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weights: NDArray = Field(
        ..., title="Weights", description="Component probabilities, shape (m,)"
    )
    locations: NDArray = Field(
        ...,
        title="Locations",
        description="Component location vectors, shape (m, J)",
    )
    component_scales: NDArray = Field(
        ...,
        title="Component scales",
        description="Relative component scales sigma_tilde_k, shape (m,)",
    )
    scale: float = Field(
        1.0, gt=0.0, title="Common scale", description="Common scale sigma"
    )

    @field_validator("locations")
    def ensure_matrix(cls, v: FloatArray) -> FloatArray:
        """
        Accept a flat location vector for univariate mixtures

        :param v: The locations array
        :type v: FloatArray
        :return: The locations as an (m, J) matrix
        :rtype: FloatArray
        """
        return v.reshape(-1, 1) if v.ndim == 1 else v

    @model_validator(mode="after")
    def check_invariants(self) -> Self:
        """
        Check shapes, positivity and that the weights sum to one

        :return: The validated mixture
        :rtype: Self
        """
        if self.weights.ndim != 1 or self.weights.shape[0] < 1:
            raise ValueError("weights must be a non-empty vector")
        m: int = self.weights.shape[0]
        if self.locations.ndim != 2 or self.locations.shape[0] != m:
            raise ValueError(
                f"locations must have shape (m, J) with m={m}, got"
                f" {self.locations.shape}"
            )
        if self.component_scales.shape != (m,):
            raise ValueError(
                f"component_scales must have shape ({m},), got"
                f" {self.component_scales.shape}"
            )
        if not np.all(self.weights > 0.0):
            raise ValueError("all weights must be positive")
        if abs(float(self.weights.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(
                f"weights sum to {self.weights.sum()!r}, expected 1"
            )
        if not np.all(self.component_scales > 0.0):
            raise ValueError("component scales must be positive")
        if not (
            np.all(np.isfinite(self.locations))
            and np.all(np.isfinite(self.component_scales))
        ):
            raise ValueError("mixture parameters must be finite")
        return self

    @property
    def dim(self) -> int:
        """
        Number of shock coordinates J

        :return: J
        :rtype: int
        """
        return int(self.locations.shape[1])

    @property
    def m(self) -> int:
        """
        Number of components

        :return: m
        :rtype: int
        """
        return int(self.weights.shape[0])

    @property
    def sigmas(self) -> FloatArray:
        """
        Effective component scales sigma * sigma_tilde_k

        :return: Array of shape (m,)
        :rtype: FloatArray
        """
        return self.scale * self.component_scales
