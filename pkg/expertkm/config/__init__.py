"""Logging configuration."""

import sys

from loguru import logger

from expertkm.utils import constants


def configure_logging(level: str | None = None) -> None:
    """Install a single stderr sink at the requested level."""
    logger.remove()
    logger.add(
        sys.stderr,
        level=(level or constants.LOG_LEVEL).upper(),
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {name}:{function} - {message}",
    )
