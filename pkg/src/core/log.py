"""
This module configures console logging for the command-line application.

Library modules only create loggers with ``logging.getLogger(__name__)``;
handlers are installed here, once, by the entry point.
"""
import logging

from rich.console import Console
from rich.logging import RichHandler

ROOT_LOGGER = "src"

_LEVELS = {0: logging.WARNING, 1: logging.INFO}


def configure_logging(verbosity: int = 0, console: Console | None = None) -> logging.Logger:
    """
    Installs a rich handler on the package logger.

    Args:
        verbosity (int): 0 for warnings only, 1 for progress information,
                         2 or more for debug output.
        console (Console, optional): Console to write to. Defaults to stderr.

    Returns:
        logging.Logger: The configured package logger.
    """
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(_LEVELS.get(verbosity, logging.DEBUG))
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)
    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
        markup=False,
    )
    handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    logger.addHandler(handler)
    logger.propagate = False
    return logger
