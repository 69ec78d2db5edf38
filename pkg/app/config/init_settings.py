"""
A module for init settings in the app.config package.
"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class InitSettings(BaseSettings):
    """Init Settings class based on Pydantic Base Settings"""

    model_config = SettingsConfigDict(
        case_sensitive=True,
        extra="allow",
    )

    PROJECT_NAME: str = "ddc-gumbel-mixture"
    VERSION: str = "0.1.0"
    ENCODING: str = "UTF-8"
    DATETIME_FORMAT: str = "%Y-%m-%d %H:%M:%S"
    FILE_DATE_FORMAT: str = "%d-%b-%Y-%H-%M-%S"
    LOG_FORMAT: str = (
        "[%(name)s][%(asctime)s][%(levelname)s][%(module)s]"
        "[%(funcName)s][%(lineno)d]: %(message)s"
    )
    CSV_FLOAT_FORMAT: str = "%.17g"
    COUNTS_FILE: str = "counts.csv"
    PANEL_FILE: str = "panel.csv"
    MANIFEST_FILE: str = "manifest.json"
    DRAWS_FILE: str = "draws.csv"
    SIDECAR_FILE: str = "draws.json"
    CHECKPOINT_FILE: str = "checkpoint.json"
    ESTIMATE_FILE: str = "estimate.json"
    SUMMARY_FILE: str = "summary.json"
    COUNTERFACTUAL_FILE: str = "counterfactual.json"
    COUNTERFACTUAL_DRAWS_FILE: str = "counterfactual_draws.csv"
    TRACES_FILE: str = "traces.csv"
    TRACE_FILE_TEMPLATE: str = "trace_{name}.csv"
    M_PMF_FILE: str = "m_pmf.csv"
    DENSITIES_FILE: str = "densities.csv"
    SCATTER_FILE: str = "scatter.csv"
    DATA_DIR: str = "data"
    ESTIMATE_DIR: str = "estimate"
    SUMMARY_DIR: str = "summary"
    COUNTERFACTUAL_DIR: str = "counterfactual"
    CHAIN_DIR_PREFIX: str = "chain"
