"""
A module for report in the app-schemas package.
"""

from typing import Any

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.arrays import NDArray
from app.schemas.interval import Interval


class FunctionalEstimate(BaseModel):
    """Point estimate of a functional with its delta-method interval."""

    estimate: float
    standard_error: float
    interval: Interval


class LogitMLEResult(BaseModel):
    """Dynamic logit maximum likelihood fit."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    theta: NDArray = Field(..., description="Full parameter vector at the MLE")
    free_indices: tuple[int, ...]
    covariance: NDArray = Field(
        ..., description="Inverse negative Hessian of the free parameters"
    )
    standard_errors: NDArray
    log_likelihood: float
    converged: bool
    starts: int = Field(..., description="Number of quasi-Newton starts")
    functionals: dict[str, FunctionalEstimate] = Field(default_factory=dict)


class GewekeResult(BaseModel):
    """Mean equality test between an early and a late chain segment."""

    z: float
    p_value: float
    early_mean: float
    late_mean: float


class FunctionalSummary(BaseModel):
    """Posterior summary of one scalar quantity."""

    mean: float
    sd: float
    hpd: Interval
    identified_set: Interval | None = Field(
        None,
        serialization_alias="B_hat_interval",
        description="Credible interval of the identified set, written as"
        " B_hat_interval",
    )


class CredibleSetSummary(BaseModel):
    """Metadata of the CCP ellipsoid."""

    dim: int
    threshold: float
    ridge: float
    members: int
    draws: int


class PosteriorReport(BaseModel):
    """Summary document written by the summarize command."""

    n_draws: int
    burn_in: int
    thin: int
    credible_mass: float
    functionals: dict[str, FunctionalSummary]
    m_pmf: dict[int, float]
    credible_set: CredibleSetSummary | None = None
    diagnostics: dict[str, Any] = Field(default_factory=dict)
    config_hash: str | None = None


class ComparisonRow(BaseModel):
    """One functional compared across truth, posterior and logit MLE."""

    name: str
    true_value: float | None = None
    posterior: FunctionalSummary
    logit: FunctionalEstimate | None = None


class CounterfactualReport(BaseModel):
    """Baseline and counterfactual expected-visit comparison."""

    overrides: dict[str, float]
    rows: list[ComparisonRow]
    draws: int
    config_hash: str | None = None


class CCPCredibleSet(BaseModel):
    """
    Ellipsoid {P: (P - center)' covariance^-1 (P - center) <= threshold}
    over stacked choice probabilities.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    center: NDArray = Field(..., description="Mean CCP vector over draws")
    covariance: NDArray = Field(
        ..., description="Draw covariance, ridge included"
    )
    cholesky: NDArray = Field(
        ..., description="Lower Cholesky factor of the covariance"
    )
    threshold: float = Field(
        ..., gt=0.0, description="Chi-square quantile with dim dof"
    )
    ridge: float = Field(
        0.0, ge=0.0, description="Diagonal ridge added to the covariance"
    )

    @property
    def dim(self) -> int:
        """
        Length of the stacked CCP vector

        :return: J K over occupied states
        :rtype: int
        """
        return int(self.center.shape[0])
