"""
Logging for polarphase runs: BetterStack when a source token is configured,
a plain stream handler otherwise. Library modules log under "polarphase.*"
and share whatever handlers the CLI installs.
"""

import os
import logging
import sys
from typing import List, Optional, TextIO, Tuple
from logtail import LogtailHandler
import logtail

DEFAULT_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LIBRARY_LOGGER = "polarphase"


def _stream_handler(stream: Optional[TextIO], formatter: logging.Formatter) -> logging.Handler:
    handler = logging.StreamHandler(stream or sys.stdout)
    handler.setFormatter(formatter)
    return handler


def _build_handlers(stream: Optional[TextIO], formatter: logging.Formatter) -> Tuple[List[logging.Handler], List[str]]:
    """Return the handlers to install plus any warnings to emit once they are live."""
    token = os.getenv("BETTERSTACK_TOKEN")
    if not token:
        return [_stream_handler(stream, formatter)], []

    kwargs = {'source_token': token}
    endpoint = os.getenv("BETTERSTACK_ENDPOINT")
    if endpoint:
        kwargs['host'] = endpoint
    try:
        return [LogtailHandler(**kwargs)], []
    except Exception as e:
        return [_stream_handler(stream, formatter)], [
            f"Failed to initialize BetterStack logging: {e}",
            "Falling back to console logging",
        ]


def setup_logging(
    service_name: str = LIBRARY_LOGGER,
    log_level: Optional[str] = None,
    log_format: str = DEFAULT_FORMAT,
    stream: Optional[TextIO] = None
) -> logging.Logger:
    """
    Configure the named logger and mirror its handlers onto the library logger.

    Args:
        service_name: Logger to configure
        log_level: Level name; POLARPHASE_LOG_LEVEL is used when omitted, then INFO
        log_format: Pattern for the console formatter
        stream: Console stream, stdout when omitted (the CLI passes stderr)
    """
    level = getattr(logging, (log_level or os.getenv("POLARPHASE_LOG_LEVEL") or "INFO").upper())
    handlers, warnings = _build_handlers(stream, logging.Formatter(log_format))

    logger = logging.getLogger(service_name)
    logger.setLevel(level)
    logger.handlers = list(handlers)

    library_logger = logging.getLogger(LIBRARY_LOGGER)
    if library_logger is not logger:
        library_logger.setLevel(level)
        library_logger.handlers = list(handlers)

    for warning in warnings:
        logger.warning(warning)
    if os.getenv("BETTERSTACK_TOKEN") and not warnings:
        logger.info("BetterStack logging enabled")
    return logger


def get_logger(name: str = LIBRARY_LOGGER) -> logging.Logger:
    """Return `name`, configuring it with defaults on first use."""
    logger = logging.getLogger(name)
    if not logger.handlers:
        logger = setup_logging(name)
    return logger


def log_with_context(logger: logging.Logger, level: str, message: str, **context):
    """Emit `message` at `level` with the keyword arguments attached as record extras."""
    getattr(logger, level.lower())(message, extra=context)


class RunLogger:
    """
    Logger bound to one CLI invocation.

    Inside the `with` block the run id and command are pushed into the
    logtail context; every record also carries them flat in `extra` so the
    console formatter and plain handlers see them too.
    """

    def __init__(self, logger: logging.Logger, run_id: str, command: str):
        self.logger = logger
        self.run_id = run_id
        self.command = command
        self.context = None

    def __enter__(self):
        try:
            self.context = logtail.context(run={'id': self.run_id, 'command': self.command})
            self.context.__enter__()
        except (ValueError, AttributeError):
            self.context = None
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.context:
            self.context.__exit__(exc_type, exc_val, exc_tb)

    def _fields(self, extra: dict) -> dict:
        return {'run_id': self.run_id, 'command': self.command, **extra}

    def info(self, message: str, **extra):
        self.logger.info(message, extra=self._fields(extra))

    def warning(self, message: str, **extra):
        self.logger.warning(message, extra=self._fields(extra))

    def error(self, message: str, **extra):
        self.logger.error(message, extra=self._fields(extra))

    def exception(self, message: str, **extra):
        self.logger.exception(message, extra=self._fields(extra))
