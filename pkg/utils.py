"""
Utility functions shared across the toolkit.
Provides logging, seeded random streams and small formatting helpers.
"""

import sys
import logging
from datetime import datetime
from logging import StreamHandler

import numpy as np

from config import LOGS_DIR


class UnbufferedHandler(StreamHandler):
    """Stream handler that flushes after every record so long runs show progress live."""

    def emit(self, record):
        super().emit(record)
        self.flush()


def setup_logger(name: str = "ngrl") -> logging.Logger:
    """
    Set up and return a logger with file and console handlers.

    Args:
        name: Logger name

    Returns:
        Configured logger instance
    """
    from config import LOG_LEVEL, LOG_TO_FILE

    logger = logging.getLogger(name)

    level = getattr(logging, LOG_LEVEL, logging.INFO)
    logger.setLevel(level)

    # Prevent duplicate handlers
    if logger.handlers:
        return logger

    if LOG_TO_FILE:
        log_file = LOGS_DIR / f"{name}_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
        file_handler = logging.FileHandler(log_file, encoding='utf-8', delay=True)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(
            logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        )
        logger.addHandler(file_handler)

    console_handler = UnbufferedHandler(sys.stdout)
    console_handler.setLevel(level)
    console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
    logger.addHandler(console_handler)

    return logger


def derive_rng(master_seed: int, *stream: int) -> np.random.Generator:
    """
    Derive an independent random stream from a master seed and a counter path.

    The same (seed, stream) always yields the same generator, so episodes can be
    evaluated in any order or in parallel and still reproduce sequential runs.

    Args:
        master_seed: Experiment master seed
        *stream: Counter path, e.g. (repetition, phase, episode)

    Returns:
        Seeded numpy Generator
    """
    return np.random.default_rng([int(master_seed), *(int(s) for s in stream)])


def format_duration(seconds: float) -> str:
    """Format duration in human-readable format."""
    if seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 3600:
        return f"{seconds / 60:.1f}m"
    hours = seconds / 3600
    minutes = (seconds % 3600) / 60
    return f"{int(hours)}h {int(minutes)}m"
