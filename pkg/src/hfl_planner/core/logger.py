#!/usr/bin/env python3
"""
Logging setup for hfl-planner. Logs go to stderr; results go to stdout or --out.
"""

import logging
import os
import sys

logger = logging.getLogger("hfl_planner")

PLAIN_LOGS_ENV = "HFL_PLANNER_PLAIN_LOGS"
TIMESTAMPED_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"
PLAIN_FORMAT = "%(levelname)s - %(name)s - %(message)s"


def setup_logging(log_level: str = "INFO") -> logging.Logger:
    """
    Configure the root handler and the package logger level.

    Args:
        log_level: Level name (DEBUG, INFO, WARNING, ERROR, CRITICAL); unknown names mean INFO

    Numerical warnings (overflow in the round bound, root bracketing) are
    routed through logging as well.
    """
    level = getattr(logging, log_level.upper(), None)
    if not isinstance(level, int):
        level = logging.INFO

    # Plain lines for batch runs
    log_format = PLAIN_FORMAT if os.environ.get(PLAIN_LOGS_ENV) else TIMESTAMPED_FORMAT

    logging.basicConfig(level=level, format=log_format, stream=sys.stderr)
    logging.captureWarnings(True)
    logger.setLevel(level)

    return logger
