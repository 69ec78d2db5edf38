"""
A module for run config in the app-schemas package.
"""

from pathlib import Path
from typing import Literal, Self

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    FilePath,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    model_validator,
)

from app.schemas.chain import ChainSchedule, HMCConfig, PriorConfig
from app.schemas.model import GilleskieParams

COUNTERFACTUAL_KEYS: frozenset[str] = frozenset(
    {"income", "coinsurance", "sick_leave_coverage"}
)


class RustBlock(BaseModel):
    """Bus engine replacement settings."""

    model_config = ConfigDict(extra="forbid")

    theta: tuple[float, float] = Field(
        (5.0727, -0.002293),
        title="Utility parameters",
        description="theta_0 (intercept) and theta_1 (mileage slope)",
    )
    mileage_transition: tuple[float, float] = Field(
        (0.3919, 0.5953),
        title="Mileage transition",
        description="theta_2, theta_3: probabilities of +0 and +1 mileage"
        " bins",
    )
    states: PositiveInt = Field(90, title="K", description="Mileage bins")


class CustomBlock(BaseModel):
    """Model given by explicit tables."""

    model_config = ConfigDict(extra="forbid")

    transitions_file: FilePath = Field(
        ..., title="Transitions", description="CSV with columns d,x,y,p"
    )
    utilities_file: FilePath = Field(
        ..., title="Utilities", description="CSV with columns d,x,u"
    )


class ModelBlock(BaseModel):
    """Which dynamic model to build."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["rust", "gilleskie", "custom"] = Field(
        ..., title="Kind", description="Model family"
    )
    beta: float = Field(..., ge=0.0, lt=1.0, title="Discount factor")
    rust: RustBlock | None = None
    gilleskie: GilleskieParams | None = None
    custom: CustomBlock | None = None
    logit_free: tuple[int, ...] | None = Field(
        None,
        title="Logit free parameters",
        description="theta indices estimated by the dynamic logit MLE",
    )

    @model_validator(mode="after")
    def check_kind_block(self) -> Self:
        """
        Fill the default block of the chosen kind and reject custom models
         without tables

        :return: The validated block
        :rtype: Self
        """
        if self.kind == "rust" and self.rust is None:
            self.rust = RustBlock()
        if self.kind == "gilleskie" and self.gilleskie is None:
            self.gilleskie = GilleskieParams()
        if self.kind == "custom" and self.custom is None:
            raise ValueError("a custom model needs a [model.custom] block")
        return self

    @property
    def logit_free_indices(self) -> tuple[int, ...]:
        """
        Logit MLE parameters, defaulting per model family

        :return: theta indices
        :rtype: tuple[int, ...]
        """
        if self.logit_free is not None:
            return self.logit_free
        defaults: dict[str, tuple[int, ...]] = {
            "rust": (0, 1),
            "gilleskie": (0, 1, 2, 5),
            "custom": (),
        }
        return defaults[self.kind]


class MixtureBlock(BaseModel):
    """Plain-list mixture specification."""

    model_config = ConfigDict(extra="forbid")

    weights: list[float]
    locations: list[list[float]]
    component_scales: list[PositiveFloat]
    scale: PositiveFloat = 1.0


class DGPBlock(BaseModel):
    """Data generating process and sample design."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["mixture", "logit"] = Field(
        "logit", title="Shock law", description="Mixture or i.i.d. Gumbel"
    )
    mixture: MixtureBlock | None = None
    seed: NonNegativeInt = Field(
        ..., title="Seed", description="Explicit seed of the data RNG"
    )
    decision_makers: PositiveInt | None = Field(
        None,
        title="N",
        description="Count design n_dx = p(d|x) N",
    )
    individuals: PositiveInt | None = Field(
        None, title="n", description="Simulated individuals"
    )
    periods: PositiveInt | None = Field(
        None, title="T", description="Simulated periods per individual"
    )
    initial_state: NonNegativeInt | None = Field(
        None,
        title="Initial state",
        description="State index where simulated histories start",
    )

    @model_validator(mode="after")
    def check_design(self) -> Self:
        """
        Check that exactly one sample design and a mixture when needed are
         given

        :return: The validated block
        :rtype: Self
        """
        panel: bool = self.individuals is not None or self.periods is not None
        if (self.decision_makers is None) == (not panel):
            raise ValueError(
                "give either decision_makers or individuals and periods"
            )
        if panel and (self.individuals is None or self.periods is None):
            raise ValueError("a panel design needs individuals and periods")
        if self.kind == "mixture" and self.mixture is None:
            raise ValueError("a mixture DGP needs a [dgp.mixture] block")
        return self


class PriorBlock(PriorConfig):
    """Prior hyperparameters plus the name of the preset they came from."""

    preset: str = Field(
        "custom", title="Preset", description="Name of the prior setting"
    )


class MCMCBlock(BaseModel):
    """Sampler settings."""

    model_config = ConfigDict(extra="forbid")

    iterations: NonNegativeInt = 1000
    burn_in: NonNegativeInt | None = None
    thin: PositiveInt = 10
    hmc_per_jump: PositiveInt = 10
    seed: NonNegativeInt = Field(
        ..., title="Seed", description="Explicit seed of the chain RNG"
    )
    leapfrog_steps: PositiveInt = 10
    step_size: PositiveFloat | None = None
    target_accept: float = Field(0.7, gt=0.0, lt=1.0)
    adapt_steps: NonNegativeInt = 1000
    initial_m: PositiveInt = 1
    fixed_m: bool = False
    prior_only: bool = False

    def hmc_config(self) -> HMCConfig:
        """
        The Hamiltonian block settings

        :return: HMC configuration
        :rtype: HMCConfig
        """
        return HMCConfig(
            step_size=self.step_size,
            leapfrog_steps=self.leapfrog_steps,
            target_accept=self.target_accept,
            adapt_steps=self.adapt_steps,
        )

    def schedule(self) -> ChainSchedule:
        """
        The chain iteration layout

        :return: Chain schedule
        :rtype: ChainSchedule
        """
        return ChainSchedule(
            iterations=self.iterations,
            burn_in=self.burn_in,
            thin=self.thin,
            hmc_per_jump=self.hmc_per_jump,
            fixed_m=self.fixed_m,
            prior_only=self.prior_only,
        )


class ReportBlock(BaseModel):
    """Posterior summary settings."""

    model_config = ConfigDict(extra="forbid")

    credible_mass: float = Field(0.95, gt=0.0, lt=1.0)
    alpha: float = Field(
        0.05,
        gt=0.0,
        lt=1.0,
        description="Level of the identified-set credible set",
    )
    burn_in: NonNegativeInt | None = Field(
        None, description="Iterations dropped; defaults to the chain burn-in"
    )
    thin: PositiveInt = 1
    density_points: PositiveInt = 200


class CounterfactualBlock(BaseModel):
    """Policy experiment overrides of the consumption technology."""

    model_config = ConfigDict(extra="forbid")

    overrides: dict[str, float] = Field(
        default_factory=lambda: {"coinsurance": 0.0},
        description="Keys among income, coinsurance, sick_leave_coverage",
    )

    @model_validator(mode="after")
    def check_keys(self) -> Self:
        """
        Reject overrides of unknown quantities

        :return: The validated block
        :rtype: Self
        """
        unknown: set[str] = set(self.overrides) - COUNTERFACTUAL_KEYS
        if unknown:
            raise ValueError(f"unknown counterfactual keys: {sorted(unknown)}")
        return self


class OutputBlock(BaseModel):
    """Where results go."""

    model_config = ConfigDict(extra="forbid")

    directory: Path = Field(Path("runs"), description="Output directory")


class RunConfig(BaseModel):
    """Complete, reproducible definition of an experiment."""

    model_config = ConfigDict(extra="forbid")

    name: str = Field("experiment", description="Experiment name")
    model: ModelBlock
    dgp: DGPBlock
    prior: PriorBlock = Field(default_factory=PriorBlock)
    mcmc: MCMCBlock
    report: ReportBlock = Field(default_factory=ReportBlock)
    counterfactual: CounterfactualBlock = Field(
        default_factory=CounterfactualBlock
    )
    output: OutputBlock = Field(default_factory=OutputBlock)
