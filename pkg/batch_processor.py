#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Suite runner for experiment configurations.
Runs independent experiments concurrently with per-row error capture and writes
CSV, markdown and JSON reports.
"""

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

from config import RESULTS_DIR
from experiment import ExperimentConfig, ResultsRow, render_csv, render_markdown, run_experiment
from progress_manager import ProgressManager
from utils import format_duration, setup_logger

logger = setup_logger("batch_processor")


class SuiteResult:
    """Outcome of one suite row."""

    def __init__(self, index: int, config: ExperimentConfig):
        self.index = index
        self.config = config
        self.status = 'pending'  # pending, running, success, failed
        self.start_time = None
        self.end_time = None
        self.row: Optional[ResultsRow] = None
        self.error = None
        self.duration = 0

    def to_dict(self) -> Dict:
        """Convert to dictionary for JSON serialization."""
        return {
            'index': self.index,
            'name': self.config.name,
            'status': self.status,
            'duration_seconds': self.duration,
            'row': self.row.to_dict() if self.row else None,
            'error': self.error
        }

    def as_row(self) -> ResultsRow:
        if self.row is not None:
            return self.row
        return ResultsRow(
            name=self.config.name, agent=self.config.agent.value, monitored=self.config.monitored,
            features=self.config.features, wall_time=self.duration, status=self.status, error=self.error,
        )


class SuiteRunner:
    """Runs a list of experiment configs, optionally in parallel."""

    def __init__(self, max_workers: int = 1, continue_on_error: bool = True,
                 results_dir: Path = RESULTS_DIR, trace_dir: Optional[Path] = None):
        """
        Initialize suite runner.

        Args:
            max_workers: Number of experiments run concurrently
            continue_on_error: Whether to continue after a failing experiment
            results_dir: Where suite reports are written
            trace_dir: Optional directory for per-experiment supervisor traces
        """
        self.max_workers = max_workers
        self.continue_on_error = continue_on_error
        self.results_dir = Path(results_dir)
        self.trace_dir = Path(trace_dir) if trace_dir else None
        self.results: List[SuiteResult] = []
        self.lock = threading.Lock()
        self.start_time = None
        self.end_time = None

    def run_single(self, cfg: ExperimentConfig, index: int, total: int,
                   progress: Optional[ProgressManager] = None) -> SuiteResult:
        """Run one experiment, recording failures instead of raising."""
        result = SuiteResult(index, cfg)
        result.status = 'running'
        result.start_time = time.time()
        trace = self.trace_dir / f"{cfg.name}.trace" if self.trace_dir else None
        try:
            logger.info(f"[{index}/{total}] Running: {cfg.name}")
            result.row = run_experiment(cfg, trace_path=trace, progress=progress)
            result.status = 'success'
            logger.info(f"[{index}/{total}] ✓ Done: {cfg.name}")
        except Exception as e:
            result.status = 'failed'
            result.error = str(e)
            logger.error(f"[{index}/{total}] ✗ Failed: {cfg.name} - {e}")
            if not self.continue_on_error:
                raise
        finally:
            result.end_time = time.time()
            result.duration = result.end_time - result.start_time
        return result

    def run_suite(self, configs: List[ExperimentConfig], progress: Optional[ProgressManager] = None) -> List[ResultsRow]:
        """
        Execute every config with a ThreadPoolExecutor.

        Args:
            configs: Non-empty list of experiment configs
            progress: Optional progress display

        Returns:
            Results rows in input order (failed rows carry status and error)
        """
        if not configs:
            raise ValueError("run_suite needs at least one config")
        self.start_time = time.time()
        self.results = []
        total = len(configs)
        logger.info(f"Starting suite of {total} experiments with {self.max_workers} workers")
        task = progress.suite_task(total) if progress and progress.progress else None

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = {
                executor.submit(self.run_single, cfg, idx, total, progress): (idx, cfg)
                for idx, cfg in enumerate(configs, 1)
            }
            for future in as_completed(futures):
                idx, cfg = futures[future]
                try:
                    result = future.result()
                except Exception as e:
                    logger.critical(f"Critical error in {cfg.name}, stopping suite: {e}")
                    executor.shutdown(wait=False, cancel_futures=True)
                    raise
                with self.lock:
                    self.results.append(result)
                if task is not None:
                    progress.advance(task)

        self.end_time = time.time()
        self.results.sort(key=lambda r: r.index)
        return [r.as_row() for r in self.results]

    def write_reports(self, suite_name: str) -> Dict[str, Path]:
        """Write `<suite>.csv`, `<suite>.md` and `<suite>.json` to the results directory."""
        self.results_dir.mkdir(parents=True, exist_ok=True)
        rows = [r.as_row() for r in self.results]
        paths = {
            'csv': self.results_dir / f"{suite_name}.csv",
            'md': self.results_dir / f"{suite_name}.md",
            'json': self.results_dir / f"{suite_name}.json",
        }
        paths['csv'].write_text(render_csv(rows), encoding='utf-8')
        paths['md'].write_text(render_markdown(rows), encoding='utf-8')
        self._save_json_report(paths['json'], suite_name)
        logger.info(f"Reports written to {self.results_dir}")
        return paths

    def generate_report(self) -> str:
        """Plain-text summary of the last suite run."""
        if not self.results:
            return "No results to report."
        total = len(self.results)
        successful = sum(1 for r in self.results if r.status == 'success')
        total_duration = self.end_time - self.start_time if self.end_time else 0

        lines = [
            "=" * 80,
            "Suite Summary",
            "=" * 80,
            f"Experiments:      {total}",
            f"  ✓ Successful:   {successful}",
            f"  ✗ Failed:       {total - successful}",
            f"Total Duration:   {format_duration(total_duration)}",
        ]
        failed = [r for r in self.results if r.status == 'failed']
        if failed:
            lines.extend(["", "Failed Experiments:", "-" * 80])
            for result in failed:
                lines.append(f"  {result.index}. {result.config.name}\n     Error: {result.error}")
        lines.append("=" * 80)
        return "\n".join(lines)

    def _save_json_report(self, output_path: Path, suite_name: str):
        successful = sum(1 for r in self.results if r.status == 'success')
        report_data = {
            'suite': suite_name,
            'start_time': datetime.fromtimestamp(self.start_time).isoformat() if self.start_time else None,
            'end_time': datetime.fromtimestamp(self.end_time).isoformat() if self.end_time else None,
            'total_duration_seconds': (self.end_time - self.start_time) if self.end_time else 0,
            'total_experiments': len(self.results),
            'successful': successful,
            'failed': len(self.results) - successful,
            'concurrent_workers': self.max_workers,
            'results': [r.to_dict() for r in self.results],
        }
        with open(output_path, 'w', encoding='utf-8') as f:
            json.dump(report_data, f, indent=2, ensure_ascii=False)
