"""
A module for settings in the app.config package.
"""

import logging
from pathlib import Path

from pydantic import Field, PositiveFloat, PositiveInt, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Settings class based on Pydantic Base Settings"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="allow",
    )

    LOG_LEVEL: str = Field(
        "INFO",
        title="Log level",
        description="Level name for the root logger",
    )
    LOGS_DIR: Path = Field(
        Path("logs"),
        title="Logs directory",
        description="Directory for the rotating command log files",
    )
    LOG_TO_FILE: bool = Field(
        True,
        title="Log to file",
        description="Whether commands also write their log to LOGS_DIR",
    )
    EMAX_TOL: PositiveFloat = Field(
        1e-10,
        title="Emax tolerance",
        description="Sup-norm residual at which the Bellman fixed point is"
        " accepted",
    )
    EMAX_SWITCH_TOL: PositiveFloat = Field(
        1e-2,
        title="Newton switch tolerance",
        description="Residual below which successive approximation hands"
        " over to Newton-Kantorovich",
    )
    EMAX_MAX_SUCCESSIVE: PositiveInt = Field(
        200,
        title="Successive approximation budget",
        description="Maximum number of plain Bellman iterations",
    )
    EMAX_MAX_NEWTON: PositiveInt = Field(
        50,
        title="Newton budget",
        description="Maximum number of Newton-Kantorovich iterations",
    )
    CHECKPOINT_EVERY: PositiveInt = Field(
        1000,
        title="Checkpoint interval",
        description="Stored draws between two persisted chain checkpoints",
    )
    MLE_MULTISTARTS: PositiveInt = Field(
        5,
        title="MLE multistarts",
        description="Jittered quasi-Newton starts of the dynamic logit MLE",
    )
    MLE_JITTER: PositiveFloat = Field(
        0.1,
        title="MLE jitter",
        description="Standard deviation of the multistart perturbations",
    )
    LAPLACE_MAX_NEWTON: PositiveInt = Field(
        50,
        title="Laplace Newton budget",
        description="Maximum Newton iterations of the jump proposal mode"
        " search",
    )
    FD_STEP: PositiveFloat = Field(
        1e-5,
        title="Finite difference step",
        description="Central difference step for numerical Hessians",
    )
    CHAINS_MAX_WORKERS: PositiveInt | None = Field(
        None,
        title="Chain workers",
        description="Process pool size for parallel chains",
    )

    @field_validator("LOG_LEVEL", mode="before")
    def validate_log_level(cls, v: str) -> str:
        """
        Normalize and validate the log level name

        :param v: The raw log level name
        :type v: str
        :return: The upper-cased level name
        :rtype: str
        """
        level: str = str(v).upper()
        if level not in logging.getLevelNamesMapping():
            raise ValueError(f"Unknown log level: {v}")
        return level
