"""Logging setup shared by the CLI and the HTTP service."""

import logging

ROOT_LOGGER = "tbdtrack"


def configure_logging(level: str = "INFO") -> logging.Logger:
    """Attach a single stream handler to the tbdtrack logger (idempotent)."""
    logger = logging.getLogger(ROOT_LOGGER)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s %(message)s"))
        logger.addHandler(handler)
    logger.setLevel(level.upper())
    return logger
