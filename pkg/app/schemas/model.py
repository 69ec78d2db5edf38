"""
A module for model in the app-schemas package.
"""

from typing import Literal, Self

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    model_validator,
)

from app.schemas.arrays import FloatArray, NDArray

STOCHASTIC_TOL: float = 1e-12
CCP_ROW_TOL: float = 1e-10

RecoveryCoefficients = tuple[
    float, float, float, float, float, float, float, float, float
]


class GilleskieParams(BaseModel):
    """
    Consumption technology, utility coefficients and transition
    laws of the illness-episode model.

    The sickness and recovery laws are given either as probability tables
    or as logit coefficients; the shipped coefficient defaults are
    placeholders, not estimates.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    T: int = Field(8, ge=2, title="Episode length", description="Max periods")
    income: PositiveFloat = Field(100.0, title="Y", description="Income")
    coinsurance: NonNegativeFloat = Field(
        15.0, title="PC", description="Out-of-pocket price of a visit"
    )
    sick_leave_coverage: float = Field(
        0.7, gt=0.0, lt=1.0, title="L", description="Sick leave coverage rate"
    )
    phi1: float = Field(5.6, title="phi1", description="Sick leave intercept")
    phi2: float = Field(
        -1.75, title="phi2", description="Sick leave absence slope"
    )
    theta: tuple[float, float, float, float, float, float] = Field(
        (-1.25, -0.83, -2.08, -10000.0, 1.0, 0.0469),
        title="Utility coefficients",
        description="theta_1..theta_6; theta_4 forces the well-state choice",
    )
    sick_probability: float | None = Field(
        None,
        ge=0.0,
        le=1.0,
        title="Sickness probability",
        description="Fixed probability of contracting an illness",
    )
    sick_index: float | None = Field(
        2.2,
        title="Sickness index",
        description="delta'H; the sickness probability is 1/(1+exp(delta'H))",
    )
    recovery_table: NDArray | None = Field(
        None,
        title="Recovery table",
        description="Recovery probabilities per (state, action), shape (K, 4)",
    )
    recovery_coefficients: RecoveryCoefficients | None = Field(
        (-1.2, 0.35, 0.0, 0.3, 0.0, 0.0, 0.05, 0.0, 0.0),
        title="Recovery coefficients",
        description="eta_0..eta_8 of the logit recovery law",
    )
    recovery_shift: float = Field(
        0.0, title="Recovery shift", description="xi'H added to the index"
    )

    @model_validator(mode="after")
    def check_transition_spec(self) -> Self:
        """
        Check that both the sickness and the recovery law are specified

        :return: The validated parameters
        :rtype: Self
        """
        if self.sick_probability is None and self.sick_index is None:
            raise ValueError("either sick_probability or sick_index is needed")
        if self.recovery_table is None and self.recovery_coefficients is None:
            raise ValueError(
                "either recovery_table or recovery_coefficients is needed"
            )
        if self.recovery_table is not None:
            table: FloatArray = self.recovery_table
            if table.ndim != 2 or table.shape[1] != 4:
                raise ValueError("recovery_table must have shape (K, 4)")
            if np.any(table < 0.0) or np.any(table > 1.0):
                raise ValueError("recovery probabilities must lie in [0, 1]")
        return self

    @property
    def n_states(self) -> int:
        """
        Number of (t, v, a) states, 1 + T(T+1)(2T+1)/6

        :return: K
        :rtype: int
        """
        return 1 + self.T * (self.T + 1) * (2 * self.T + 1) // 6


class DDCModel(BaseModel):
    """
    Finite-state, finite-action dynamic discrete choice model with
    utilities linear in parameters, u(x, d) = design[x, d] . theta.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: Literal["rust", "gilleskie", "custom"] = Field(
        ..., title="Model name", description="Application family"
    )
    beta: float = Field(
        ..., ge=0.0, lt=1.0, title="Discount factor", description="beta"
    )
    transitions: NDArray = Field(
        ...,
        title="Transitions",
        description="Row-stochastic matrices G^d, shape (J+1, K, K)",
    )
    design: NDArray = Field(
        ...,
        title="Design tensor",
        description="Utility regressors Z, shape (K, J+1, d_theta)",
    )
    theta: NDArray = Field(
        ..., title="Utility parameters", description="theta, shape (d_theta,)"
    )
    intercept_indices: tuple[int, ...] = Field(
        (),
        title="Intercept indices",
        description="theta index of the intercept tied to each shock"
        " coordinate j=1..J",
    )
    intercept_signs: tuple[float, ...] = Field(
        (),
        title="Intercept signs",
        description="+1 when the shock enters like the intercept, -1 when it"
        " enters the baseline action",
    )
    theta_names: tuple[str, ...] = Field(
        (), title="Parameter names", description="Labels of theta"
    )
    state_labels: tuple[str, ...] = Field(
        (), title="State labels", description="Labels of the K states"
    )
    gilleskie: GilleskieParams | None = Field(
        None,
        title="Illness parameters",
        description="Set for illness-episode models only",
    )

    @model_validator(mode="after")
    def check_invariants(self) -> Self:
        """
        Check shapes and row-stochastic transition matrices

        :return: The validated model
        :rtype: Self
        """
        g: FloatArray = self.transitions
        if g.ndim != 3 or g.shape[1] != g.shape[2] or g.shape[0] < 2:
            raise ValueError(
                f"transitions must have shape (J+1, K, K), got {g.shape}"
            )
        if np.any(g < 0.0):
            raise ValueError("transition probabilities must be non-negative")
        row_error: float = float(np.max(np.abs(g.sum(axis=2) - 1.0)))
        if row_error > STOCHASTIC_TOL:
            raise ValueError(
                f"transition rows must sum to one (max error {row_error:.3e})"
            )
        n_actions, n_states = g.shape[0], g.shape[1]
        z: FloatArray = self.design
        if z.ndim != 3 or z.shape[:2] != (n_states, n_actions):
            raise ValueError(
                f"design must have shape ({n_states}, {n_actions}, d_theta),"
                f" got {z.shape}"
            )
        if self.theta.shape != (z.shape[2],):
            raise ValueError(
                f"theta must have shape ({z.shape[2]},), got"
                f" {self.theta.shape}"
            )
        if len(self.intercept_indices) != len(self.intercept_signs):
            raise ValueError("intercept indices and signs differ in length")
        if self.intercept_indices and len(self.intercept_indices) != (
            n_actions - 1
        ):
            raise ValueError("one intercept per shock coordinate is needed")
        if any(not 0 <= i < z.shape[2] for i in self.intercept_indices):
            raise ValueError("intercept index out of range")
        return self

    @property
    def n_states(self) -> int:
        """
        Number of observed states K

        :return: K
        :rtype: int
        """
        return int(self.transitions.shape[1])

    @property
    def n_actions(self) -> int:
        """
        Number of actions J+1

        :return: J+1
        :rtype: int
        """
        return int(self.transitions.shape[0])

    @property
    def J(self) -> int:
        """
        Number of non-baseline actions, which equals the shock dimension

        :return: J
        :rtype: int
        """
        return self.n_actions - 1

    @property
    def n_theta(self) -> int:
        """
        Length of the utility parameter vector

        :return: d_theta
        :rtype: int
        """
        return int(self.theta.shape[0])

    @property
    def utilities(self) -> FloatArray:
        """
        Flow utilities u(x, d)

        :return: Array of shape (K, J+1)
        :rtype: FloatArray
        """
        return np.asarray(self.design @ self.theta, dtype=np.float64)

    def with_theta(self, theta: FloatArray) -> "DDCModel":
        """
        Copy of the model with a different parameter vector

        :param theta: The new parameter vector
        :type theta: FloatArray
        :return: The updated model
        :rtype: DDCModel
        """
        values: FloatArray = np.asarray(theta, dtype=np.float64)
        if values.shape != self.theta.shape:
            raise ValueError(
                f"theta must have shape {self.theta.shape}, got {values.shape}"
            )
        return self.model_copy(update={"theta": values})


class PanelCounts(BaseModel):
    """Choice counts n_dx, stored with shape (K, J+1)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    counts: NDArray = Field(
        ..., title="Counts", description="Real-valued counts, shape (K, J+1)"
    )

    @model_validator(mode="after")
    def check_counts(self) -> Self:
        """
        Check non-negativity and that some count is positive

        :return: The validated counts
        :rtype: Self
        """
        if self.counts.ndim != 2 or self.counts.shape[1] < 2:
            raise ValueError("counts must have shape (K, J+1)")
        if not np.all(np.isfinite(self.counts)) or np.any(self.counts < 0.0):
            raise ValueError("counts must be finite and non-negative")
        if not np.any(self.counts > 0.0):
            raise ValueError("at least one count must be positive")
        return self

    @property
    def n_states(self) -> int:
        """
        Number of states K

        :return: K
        :rtype: int
        """
        return int(self.counts.shape[0])

    @property
    def n_actions(self) -> int:
        """
        Number of actions J+1

        :return: J+1
        :rtype: int
        """
        return int(self.counts.shape[1])

    @property
    def occupied(self) -> np.ndarray:  # type: ignore[type-arg]
        """
        States with at least one observation

        :return: Boolean mask of shape (K,)
        :rtype: np.ndarray
        """
        return np.asarray(self.counts.sum(axis=1) > 0.0)


class CCPMatrix(BaseModel):
    """Conditional choice probabilities p(d|x), shape (K, J+1)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    probabilities: NDArray = Field(
        ..., title="CCPs", description="Row-stochastic matrix, shape (K, J+1)"
    )

    @model_validator(mode="after")
    def check_rows(self) -> Self:
        """
        Check bounds and unit row sums

        :return: The validated CCP matrix
        :rtype: Self
        """
        p: FloatArray = self.probabilities
        if p.ndim != 2 or p.shape[1] < 2:
            raise ValueError("probabilities must have shape (K, J+1)")
        if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("choice probabilities must lie in [0, 1]")
        row_error: float = float(np.max(np.abs(p.sum(axis=1) - 1.0)))
        if row_error > CCP_ROW_TOL:
            raise ValueError(
                f"choice probability rows must sum to one (error"
                f" {row_error:.3e})"
            )
        return self

    @property
    def n_states(self) -> int:
        """
        Number of states K

        :return: K
        :rtype: int
        """
        return int(self.probabilities.shape[0])

    @property
    def n_actions(self) -> int:
        """
        Number of actions J+1

        :return: J+1
        :rtype: int
        """
        return int(self.probabilities.shape[1])


class EmaxSolution(BaseModel):
    """Fixed point of the Bellman operator with convergence metadata."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    q: NDArray = Field(..., title="Emax", description="Q(x), shape (K,)")
    residual: float = Field(
        ..., ge=0.0, title="Residual", description="sup |Q - T(Q)|"
    )
    successive_iterations: NonNegativeInt = Field(
        0, title="Successive iterations", description="Plain Bellman steps"
    )
    newton_iterations: NonNegativeInt = Field(
        0, title="Newton iterations", description="Newton-Kantorovich steps"
    )
    converged: bool = Field(
        ..., title="Converged", description="residual <= tolerance"
    )
    tolerance: float = Field(
        ..., gt=0.0, title="Tolerance", description="Target residual"
    )
    residual_trace: list[float] = Field(
        default_factory=list,
        title="Residual trace",
        description="Residual after every iteration",
    )
    factorization: (
        tuple[np.ndarray, np.ndarray] | None  # type: ignore[type-arg]
    ) = Field(
        None,
        exclude=True,
        repr=False,
        title="LU factors",
        description="LU factorization of I - T'(Q) at the returned Q",
    )

    @model_validator(mode="after")
    def check_flag(self) -> Self:
        """
        Check that a converged solution meets its tolerance

        :return: The validated solution
        :rtype: Self
        """
        if self.converged and self.residual > self.tolerance:
            raise ValueError("converged solution exceeds its tolerance")
        return self


class EmaxConfig(BaseModel):
    """Tolerances and iteration budgets of the Emax solver."""

    model_config = ConfigDict(frozen=True)

    tol: PositiveFloat = Field(
        1e-10, title="Tolerance", description="Target sup-norm residual"
    )
    switch_tol: PositiveFloat = Field(
        1e-2,
        title="Switch tolerance",
        description="Residual below which Newton steps replace successive"
        " approximation",
    )
    max_successive: NonNegativeInt = Field(
        200,
        title="Successive budget",
        description="Successive approximation steps before switching",
    )
    max_newton: NonNegativeInt = Field(
        50, title="Newton budget", description="Newton-Kantorovich steps"
    )
