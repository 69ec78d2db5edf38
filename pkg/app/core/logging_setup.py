"""
A module for logging setup in the app-core package.
"""

import logging
from datetime import datetime
from pathlib import Path

from app.config.init_settings import InitSettings
from app.config.settings import Settings

_managed_handlers: list[logging.Handler] = []


def _attach(
    logger: logging.Logger,
    handler: logging.Handler,
    log_level: int,
    init_settings: InitSettings,
) -> None:
    """
    Give a handler the shared level and format, then register it so the
     next command can detach it

    :param logger: The logger receiving the handler
    :type logger: logging.Logger
    :param handler: The console or file handler
    :type handler: logging.Handler
    :param log_level: The level for the handler
    :type log_level: int
    :param init_settings: Dependency method for cached init setting object
    :type init_settings: InitSettings
    :return: None
    :rtype: NoneType
    """
    handler.setLevel(log_level)
    handler.setFormatter(
        logging.Formatter(
            init_settings.LOG_FORMAT, init_settings.DATETIME_FORMAT
        )
    )
    logger.addHandler(handler)
    _managed_handlers.append(handler)


def _detach_managed(logger: logging.Logger) -> None:
    while _managed_handlers:
        handler: logging.Handler = _managed_handlers.pop()
        logger.removeHandler(handler)
        handler.close()


def command_log_path(
    command: str, init_settings: InitSettings, settings: Settings
) -> Path:
    """
    Build the log file path of one command run, creating LOGS_DIR when
     needed. Each run gets its own file named after the command.

    :param command: The CLI command being run
    :type command: str
    :param init_settings: Dependency method for cached init setting object
    :type init_settings: InitSettings
    :param settings: Dependency method for cached setting object
    :type settings: Settings
    :return: The path of the log file
    :rtype: Path
    """
    settings.LOGS_DIR.mkdir(parents=True, exist_ok=True)
    stamp: str = datetime.now().strftime(init_settings.FILE_DATE_FORMAT)
    return settings.LOGS_DIR / f"{command}-{stamp}.log"


def setup_logging(
    init_settings: InitSettings,
    settings: Settings,
    log_level: int | None = None,
    command: str = "ddc",
) -> Path | None:
    """
    Initialize logging for a command run. Handlers left by an earlier
     command in the same process are replaced.

    :param init_settings: Dependency method for cached init setting object
    :type init_settings: InitSettings
    :param settings: Dependency method for cached setting object
    :type settings: Settings
    :param log_level: Explicit level overriding settings.LOG_LEVEL
    :type log_level: int | None
    :param command: The CLI command naming the log file
    :type command: str
    :return: The log file path when file logging is enabled
    :rtype: Path | None
    """
    level: int = (
        log_level
        if log_level is not None
        else logging.getLevelNamesMapping()[settings.LOG_LEVEL]
    )
    logger: logging.Logger = logging.getLogger()
    _detach_managed(logger)
    logger.setLevel(level)
    _attach(logger, logging.StreamHandler(), level, init_settings)
    if not settings.LOG_TO_FILE:
        return None
    log_path: Path = command_log_path(command, init_settings, settings)
    _attach(
        logger,
        logging.FileHandler(log_path, encoding=init_settings.ENCODING),
        level,
        init_settings,
    )
    return log_path
