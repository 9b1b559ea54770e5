#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Progress display for long-running training, evaluation and suite loops.
Uses Rich for progress bars and terminal output.
"""

import logging

from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn, TimeRemainingColumn

from config import LOG_LEVEL
from utils import UnbufferedHandler


class ProgressManager:
    """Single owner of every progress bar shown by the toolkit."""

    def __init__(self, console: Console = None):
        self.console = console or Console()
        self.progress = None

    def setup_logging(self, level: str = LOG_LEVEL):
        """Route console logging through a rich handler on the progress console; file handlers stay."""
        logging.basicConfig(
            level=level,
            format="%(message)s",
            handlers=[RichHandler(console=self.console, rich_tracebacks=True)],
            force=True,
        )
        for logger in list(logging.root.manager.loggerDict.values()):
            if not isinstance(logger, logging.Logger):
                continue
            for handler in [h for h in logger.handlers if isinstance(h, UnbufferedHandler)]:
                logger.removeHandler(handler)

    def create_progress(self) -> Progress:
        """Create the Progress instance (use as a context manager)."""
        self.progress = Progress(
            SpinnerColumn(spinner_name="dots"),
            TextColumn("{task.description}"),
            BarColumn(bar_width=None),
            TaskProgressColumn(),
            TimeRemainingColumn(),
            console=self.console,
            expand=True
        )
        return self.progress

    def training_task(self, name: str, episodes: int, repetition: int = 0) -> int:
        """
        Training episodes of one repetition.

        Args:
            name: Experiment name
            episodes: Number of training episodes
            repetition: Repetition index (0-based)
        """
        return self.progress.add_task(f"Training {name} [rep {repetition + 1}]", total=episodes)

    def evaluation_task(self, name: str, episodes: int, repetition: int = 0) -> int:
        """Greedy test episodes of one repetition."""
        return self.progress.add_task(f"Testing {name} [rep {repetition + 1}]", total=episodes)

    def suite_task(self, total_rows: int) -> int:
        """One tick per finished suite row."""
        return self.progress.add_task(f"Running suite... ({total_rows} experiments)", total=total_rows)

    def advance(self, task_id: int, amount: int = 1):
        if self.progress is not None:
            self.progress.advance(task_id, amount)

    def finish(self, task_id: int):
        if self.progress is not None:
            self.progress.remove_task(task_id)
