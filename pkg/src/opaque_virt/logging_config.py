"""Structured logging setup shared by every entry point."""

import logging
import sys

import structlog

from .errors import ValidationFailure

LOG_LEVELS = ("debug", "info", "warning", "error")


def configure_logging(level: str = "info", json_output: bool = False) -> None:
    """Route structlog through stdlib logging to standard error.

    Standard output is reserved for machine-readable command results.
    """
    if level.lower() not in LOG_LEVELS:
        raise ValidationFailure(f"Unknown log level: {level}")
    numeric = getattr(logging, level.upper())

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(numeric)

    renderer = (
        structlog.processors.JSONRenderer()
        if json_output
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )
