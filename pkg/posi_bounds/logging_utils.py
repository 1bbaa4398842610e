import logging
import sys

PACKAGE_LOGGER = "posi_bounds"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level="WARNING"):
    """
    Attach a single stderr handler to the package logger.

    Logs never go to stdout, so command output stays byte-identical between
    runs whatever the log level.

    Args:
        level (str | int): Logging level name or number (default: "WARNING").

    Returns:
        logging.Logger: The configured package logger.
    """
    logger = logging.getLogger(PACKAGE_LOGGER)
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.WARNING
    logger.setLevel(level)

    for handler in list(logger.handlers):
        if getattr(handler, "_posi_bounds", False):
            logger.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._posi_bounds = True
    logger.addHandler(handler)
    logger.propagate = False
    return logger
