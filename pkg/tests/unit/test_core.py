"""
Tests for command logging and the stage decorator.
"""

import logging
from pathlib import Path

import pytest

from app.config.config import get_init_settings
from app.config.settings import Settings
from app.core.decorators import log_stage
from app.core.logging_setup import setup_logging
from app.exceptions.exceptions import ConvergenceError


class LoggingSetupTestSuite:
    def test_file_logging_per_command(self, tmp_path: Path) -> None:
        init_settings = get_init_settings()
        settings = Settings(LOGS_DIR=tmp_path / "logs", LOG_TO_FILE=True)
        try:
            log_path = setup_logging(
                init_settings, settings, logging.INFO, "estimate"
            )
            assert log_path is not None
            assert log_path.parent == tmp_path / "logs"
            assert log_path.name.startswith("estimate-")
            logging.getLogger("app.test").info("chain started")
        finally:
            quiet = Settings(LOG_TO_FILE=False)
            assert setup_logging(init_settings, quiet) is None
        assert "chain started" in log_path.read_text()

    def test_handlers_are_replaced(self) -> None:
        init_settings = get_init_settings()
        settings = Settings(LOG_TO_FILE=False)
        root = logging.getLogger()
        setup_logging(init_settings, settings, logging.DEBUG)
        before = len(root.handlers)
        setup_logging(init_settings, settings, logging.WARNING)
        assert len(root.handlers) == before
        assert root.level == logging.WARNING
        setup_logging(init_settings, settings)
        assert root.level == logging.getLevelNamesMapping()[
            settings.LOG_LEVEL
        ]


class LogStageTestSuite:
    def test_returns_the_result(self, caplog: pytest.LogCaptureFixture) -> None:
        @log_stage
        def fit(x: int) -> int:
            return 2 * x

        with caplog.at_level(logging.INFO, logger="app.core.decorators"):
            assert fit(3) == 6
        assert "Stage fit finished" in caplog.text
        assert fit.__name__ == "fit"

    def test_failures_are_logged_and_reraised(
        self, caplog: pytest.LogCaptureFixture
    ) -> None:
        @log_stage
        def solve() -> None:
            raise ConvergenceError(detail="residual stalled")

        with caplog.at_level(logging.INFO, logger="app.core.decorators"):
            with pytest.raises(ConvergenceError):
                solve()
        assert "residual stalled" in caplog.text
