"""
A module for chain in the app-schemas package.
"""

from typing import Any, Self

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    model_validator,
)

from app.schemas.arrays import NDArray


class NormalMixturePrior(BaseModel):
    """Univariate mixture of normals used as a prior on one coordinate."""

    model_config = ConfigDict(frozen=True)

    weights: tuple[float, ...] = Field(
        (1.0,), title="Weights", description="Mixture weights"
    )
    means: tuple[float, ...] = Field(
        (0.0,), title="Means", description="Component means"
    )
    sds: tuple[PositiveFloat, ...] = Field(
        (1.0,), title="Standard deviations", description="Component sds"
    )

    @model_validator(mode="after")
    def check_components(self) -> Self:
        """
        Check matching lengths and normalized weights

        :return: The validated prior
        :rtype: Self
        """
        if not len(self.weights) == len(self.means) == len(self.sds) > 0:
            raise ValueError("weights, means and sds must share their length")
        if any(w <= 0.0 for w in self.weights):
            raise ValueError("mixture weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to one")
        return self

    @classmethod
    def normal(cls, mean: float, sd: float) -> "NormalMixturePrior":
        """
        Single normal prior

        :param mean: The mean
        :type mean: float
        :param sd: The standard deviation
        :type sd: float
        :return: The prior
        :rtype: NormalMixturePrior
        """
        return cls(weights=(1.0,), means=(mean,), sds=(sd,))


class PriorConfig(BaseModel):
    """Hyperparameters of the prior over (theta_free, sigma, m, mixture)."""

    model_config = ConfigDict(frozen=True)

    dirichlet_concentration: PositiveFloat = Field(
        10.0,
        title="a_bar",
        description="Total Dirichlet concentration; each weight gets a_bar/m",
    )
    a_m: PositiveFloat = Field(
        0.05,
        title="A_m",
        description="Penalty of Pi(m) proportional to exp(-A_m m (log m)^tau)",
    )
    tau: float = Field(5.0, ge=0.0, title="tau", description="Penalty power")
    m_max: PositiveInt = Field(
        10, title="m_max", description="Largest admissible component count"
    )
    location: tuple[NormalMixturePrior, ...] = Field(
        (NormalMixturePrior.normal(0.0, 2.0),),
        title="Location priors",
        description="Prior of mu_jk per coordinate j; a single entry is"
        " shared by all coordinates",
    )
    log_component_scale: NormalMixturePrior = Field(
        NormalMixturePrior.normal(0.0, 1.0),
        title="log sigma_tilde prior",
        description="Prior of every log sigma_tilde_k",
    )
    log_scale: NormalMixturePrior = Field(
        NormalMixturePrior.normal(0.0, 0.01),
        title="log sigma prior",
        description="Prior of the common log scale",
    )
    theta: dict[int, NormalMixturePrior] = Field(
        default_factory=dict,
        title="Free utility parameter priors",
        description="Prior per free theta index; the keys define which"
        " utility parameters are sampled",
    )

    @property
    def free_theta_indices(self) -> tuple[int, ...]:
        """
        Sorted indices of the sampled utility parameters

        :return: The free indices
        :rtype: tuple[int, ...]
        """
        return tuple(sorted(self.theta))

    def location_prior(self, j: int) -> NormalMixturePrior:
        """
        Prior of the j-th location coordinate (0-based)

        :param j: Shock coordinate
        :type j: int
        :return: The prior
        :rtype: NormalMixturePrior
        """
        return self.location[j] if len(self.location) > 1 else self.location[0]


class ChainState(BaseModel):
    """
    Position of the sampler: component count m and unbounded vector chi,
    with cached evaluations of the current position.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    m: PositiveInt = Field(..., title="m", description="Component count")
    chi: NDArray = Field(
        ..., title="chi", description="Transformed parameter vector"
    )
    log_density: float | None = Field(
        None, title="Log posterior", description="Cached target value"
    )
    gradient: NDArray | None = Field(
        None, title="Gradient", description="Cached target gradient"
    )
    log_likelihood: float | None = Field(
        None, title="Log likelihood", description="Cached likelihood value"
    )
    q: NDArray | None = Field(
        None, title="Emax", description="Emax fixed point at this position"
    )
    residual: float | None = Field(
        None, title="Residual", description="Emax residual at this position"
    )


class HMCConfig(BaseModel):
    """Settings of the Hamiltonian block."""

    model_config = ConfigDict(frozen=True)

    step_size: PositiveFloat | None = Field(
        None,
        title="Step size",
        description="Fixed leapfrog step; None tunes it per m",
    )
    leapfrog_steps: PositiveInt = Field(
        10, title="Leapfrog steps", description="Integration length L"
    )
    mass_diagonal: tuple[PositiveFloat, ...] | None = Field(
        None,
        title="Mass diagonal",
        description="Diagonal mass matrix, used when its length matches the"
        " dimension of chi; identity otherwise",
    )
    target_accept: float = Field(
        0.7, gt=0.0, lt=1.0, title="Target acceptance", description="delta"
    )
    adapt_steps: NonNegativeInt = Field(
        1000,
        title="Adaptation steps",
        description="Dual averaging updates per distinct m before freezing",
    )

    def inverse_mass(self, dim: int) -> np.ndarray:  # type: ignore[type-arg]
        """
        Inverse diagonal mass for a position of the given dimension

        :param dim: Dimension of chi
        :type dim: int
        :return: Inverse mass vector
        :rtype: np.ndarray
        """
        if self.mass_diagonal is not None and len(self.mass_diagonal) == dim:
            return 1.0 / np.asarray(self.mass_diagonal, dtype=np.float64)
        return np.ones(dim)


class ChainSchedule(BaseModel):
    """Iteration layout of a chain."""

    model_config = ConfigDict(frozen=True)

    iterations: NonNegativeInt = Field(
        1000, title="Iterations", description="Number of HMC iterations"
    )
    burn_in: NonNegativeInt | None = Field(
        None,
        title="Burn-in",
        description="Iterations discarded by summaries; default 20%",
    )
    thin: PositiveInt = Field(10, title="Thin", description="Store every n-th")
    hmc_per_jump: PositiveInt = Field(
        10,
        title="HMC per jump",
        description="HMC iterations run after each jump proposal",
    )
    fixed_m: bool = Field(
        False, title="Fixed m", description="Disable the jump block"
    )
    prior_only: bool = Field(
        False,
        title="Prior only",
        description="Replace the likelihood by a constant",
    )

    @property
    def effective_burn_in(self) -> int:
        """
        Burn-in length, defaulting to a fifth of the run

        :return: Burn-in iterations
        :rtype: int
        """
        if self.burn_in is not None:
            return self.burn_in
        return self.iterations // 5


class AcceptanceStats(BaseModel):
    """Proposal bookkeeping per block."""

    hmc_proposed: NonNegativeInt = 0
    hmc_accepted: NonNegativeInt = 0
    hmc_nonfinite: NonNegativeInt = 0
    birth_proposed: NonNegativeInt = 0
    birth_accepted: NonNegativeInt = 0
    death_proposed: NonNegativeInt = 0
    death_accepted: NonNegativeInt = 0
    laplace_fallbacks: NonNegativeInt = 0

    @staticmethod
    def _rate(accepted: int, proposed: int) -> float:
        return accepted / proposed if proposed else 0.0

    def rates(self) -> dict[str, float]:
        """
        Acceptance rates per block

        :return: Rates keyed by block name
        :rtype: dict[str, float]
        """
        return {
            "hmc": self._rate(self.hmc_accepted, self.hmc_proposed),
            "birth": self._rate(self.birth_accepted, self.birth_proposed),
            "death": self._rate(self.death_accepted, self.death_proposed),
        }


class StepSizeState(BaseModel):
    """Dual averaging state of the step size for one value of m."""

    step_size: PositiveFloat
    mu: float
    log_step_bar: float = 0.0
    h_bar: float = 0.0
    updates: NonNegativeInt = 0


class ChainCheckpoint(BaseModel):
    """Everything needed to continue a chain bit-for-bit."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    iteration: NonNegativeInt = Field(
        ..., title="Iteration", description="Next iteration to run"
    )
    state: ChainState = Field(
        ..., title="State", description="Position with its cached evaluation"
    )
    rng_state: dict[str, Any]
    step_sizes: dict[int, StepSizeState] = Field(default_factory=dict)
    stats: AcceptanceStats = Field(default_factory=AcceptanceStats)
    draws_written: NonNegativeInt = 0
