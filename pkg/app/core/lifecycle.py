"""
A module for lifecycle in the app-core package.
"""

import logging
from collections.abc import Generator
from contextlib import contextmanager
from pathlib import Path
from typing import NamedTuple

from app.config.config import get_init_settings, get_settings
from app.config.init_settings import InitSettings
from app.config.settings import Settings
from app.core.logging_setup import setup_logging

logger: logging.Logger = logging.getLogger(__name__)


class CommandContext(NamedTuple):
    """Settings handed to a running command."""

    init_settings: InitSettings
    settings: Settings


@contextmanager
def command_lifespan(
    command: str, log_level: int | None = None
) -> Generator[CommandContext, None, None]:
    """
    The lifespan of a CLI command: configure logging, load the settings
     and report the outcome

    :param command: The command name used in the log lines
    :type command: str
    :param log_level: Explicit level overriding the configured one
    :type log_level: int | None
    :return: A generator yielding the command context
    :rtype: Generator[CommandContext, None, None]
    """
    init_settings: InitSettings = get_init_settings()
    settings: Settings = get_settings()
    log_path: Path | None = setup_logging(
        init_settings, settings, log_level, command
    )
    logger.info(
        "Starting %s (%s %s)...",
        command,
        init_settings.PROJECT_NAME,
        init_settings.VERSION,
    )
    if log_path is not None:
        logger.info("Writing the %s log to %s", command, log_path)
    try:
        yield CommandContext(init_settings, settings)
    except Exception as exc:
        logger.error("Command %s failed: %s", command, exc)
        raise
    finally:
        logger.info("Command %s completed.", command)
