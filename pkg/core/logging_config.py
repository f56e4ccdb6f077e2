"""Logging setup shared by the CLI and the HTTP app."""

import logging
import sys

from core.config import Settings

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"


def configure_logging(settings: Settings) -> None:
    """Configure root logging on stderr so reports on stdout stay clean."""
    level = logging.DEBUG if settings.debug else getattr(
        logging, settings.log_level.upper(), logging.INFO
    )
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)
