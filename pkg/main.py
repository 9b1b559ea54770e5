#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Norm-Guided RL Toolkit - Main Entry Point

Train and evaluate norm-compliant Pac-Man agents, run experiment suites,
and debug normative systems with the defeasible deontic prover.
"""

import argparse
import sys
import os
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

# Set Windows console to UTF-8
if sys.platform == 'win32':
    try:
        os.system('chcp 65001 > nul')
        sys.stdout.reconfigure(encoding='utf-8')
        sys.stderr.reconfigure(encoding='utf-8')
    except Exception:
        pass

from rich.console import Console
from rich.table import Table

from config import CHECKPOINTS_DIR, RESULTS_DIR
from ddl import DefeasibleTheory, Literal, TheoryError, dump_conclusions, prove
from norms import CompileError, ParseError, compile_system, load_norm_file
from pacman import ACTIONS, LayoutError
from supervisor import ComplianceTrace, VocabularyError, action_atom, theory_rules
from agents import load_checkpoint, save_checkpoint
from experiment import (
    ConfigError, ResultsRow, build_env, build_supervisor, evaluate_agent, load_config, load_suite,
    render_csv, render_markdown, results_table, train_agent, with_overrides,
)
from progress_manager import ProgressManager
from batch_processor import SuiteRunner
from utils import setup_logger

logger = setup_logger("main")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
CONFIG_ERRORS = (ConfigError, ParseError, CompileError, LayoutError, FileNotFoundError, TheoryError, VocabularyError)

console = Console()


def _print_rows(rows: List[ResultsRow], out: str):
    if out == 'csv':
        print(render_csv(rows), end='')
        return
    if out == 'md':
        print(render_markdown(rows), end='')
        return
    header, body = results_table(rows)
    table = Table(title="Results")
    for column in header:
        table.add_column(column)
    for row, cells in zip(rows, body):
        table.add_row(*cells, style=None if row.status == "success" else "red")
    console.print(table)


def handle_train(args) -> int:
    """Train one repetition and save its checkpoint."""
    cfg = with_overrides(load_config(args.config), seed=args.seed)
    env = build_env(cfg)
    supervisor = build_supervisor(cfg, env)
    progress = ProgressManager(console)
    with progress.create_progress():
        q = train_agent(cfg, env, supervisor, args.repetition, progress)
    path = Path(args.checkpoint) if args.checkpoint else CHECKPOINTS_DIR / f"{cfg.name}.json"
    save_checkpoint(q, path, meta={"name": cfg.name, "agent": cfg.agent.value, "seed": cfg.seed,
                                   "repetition": args.repetition, "features": cfg.features})
    print(f"Checkpoint saved to: {path}")
    return EXIT_OK


def handle_eval(args) -> int:
    """Evaluate a saved checkpoint on the config's test episodes."""
    cfg = with_overrides(load_config(args.config), seed=args.seed)
    if args.jobs:
        cfg = replace(cfg, eval_workers=args.jobs)
    env = build_env(cfg)
    supervisor = build_supervisor(cfg, env, ComplianceTrace(args.trace) if args.trace else None)
    q, meta = load_checkpoint(args.checkpoint, env)
    progress = ProgressManager(console)
    with progress.create_progress():
        tally = evaluate_agent(cfg, env, supervisor, q, meta.get("repetition", 0), progress)
    row = ResultsRow(
        name=cfg.name, agent=cfg.agent.value, monitored=cfg.monitored, features=cfg.features,
        games=tally.games, won=tally.won, total_score=tally.score,
        ghosts_eaten={**{c.value: 0 for c, _ in env.layout.ghost_starts}, **tally.ghosts},
        violations=tally.violations,
    )
    _print_rows([row], args.out)
    return EXIT_OK


def handle_suite(args) -> int:
    """Run every config of a suite directory and write the reports."""
    directory = Path(args.suite)
    configs = [with_overrides(c, seed=args.seed) for c in load_suite(directory)]
    runner = SuiteRunner(max_workers=args.jobs or 1, results_dir=Path(args.results_dir),
                         trace_dir=Path(args.trace) if args.trace else None)
    print(f"\n[Suite Mode] {len(configs)} experiments from: {directory}")
    print(f"Concurrent jobs: {runner.max_workers}")
    print("-" * 80)
    progress = ProgressManager(console)
    with progress.create_progress():
        rows = runner.run_suite(configs, progress)
    paths = runner.write_reports(directory.name)
    _print_rows(rows, args.out)
    print("\n" + runner.generate_report())
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return EXIT_RUNTIME if any(r.status == 'failed' for r in rows) else EXIT_OK


def _actions(raw: Optional[str]):
    if not raw:
        return [action_atom(a) for a in ACTIONS]
    return [Literal.parse(token).atom for token in raw.split(';') if token.strip()]


def handle_prove(args) -> int:
    """Compile a norm file with the given facts and print the conclusions."""
    system = load_norm_file(args.norms)
    compiled = compile_system(system, _actions(args.actions))
    facts = [Literal.parse(token) for token in (args.facts or '').split(';') if token.strip()]
    theory = DefeasibleTheory(facts, theory_rules(compiled), compiled.superiority)
    print(dump_conclusions(prove(theory), positive_only=not args.all))
    return EXIT_OK


def handle_check_norms(args) -> int:
    """Parse and compile norm files, reporting rule counts."""
    actions = _actions(args.actions)
    for path in args.norms:
        system = load_norm_file(path)
        compiled = compile_system(system, actions)
        print(f"✓ {path}: {len(system.constitutive)} constitutive, {len(system.regulative)} regulative, "
              f"{len(system.priorities)} priorities -> {len(compiled.rules)} rules, "
              f"{len(compiled.superiority)} superiority pairs (fingerprint {system.fingerprint()})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Norm-Guided Reinforcement Learning Toolkit',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Train a scalarized agent on the mini layout and save a checkpoint
  python main.py train --config experiments/mini_tabular/2_scalarized.cfg

  # Evaluate the checkpoint with a supervisor trace
  python main.py eval --config experiments/mini_tabular/2_scalarized.cfg --checkpoint checkpoints/scalarized.json --trace results/scalarized.trace

  # Run a whole suite (4 experiments at a time)
  python main.py suite experiments/mini_tabular --jobs 4

  # Debug a normative system for one situation
  python main.py prove norms/benevolent.norms --facts "scared(blueGhost); at(blueGhost,north)"

  # Validate norm files
  python main.py check-norms norms/*.norms
        """
    )
    commands = parser.add_subparsers(dest='command', required=True)

    train = commands.add_parser('train', help='Train an agent and save a checkpoint')
    train.add_argument('--config', required=True, metavar='PATH', help='Experiment config file')
    train.add_argument('--seed', type=int, help='Override the master seed')
    train.add_argument('--checkpoint', metavar='PATH', help='Checkpoint output (default: checkpoints/<name>.json)')
    train.add_argument('--repetition', type=int, default=0, help='Repetition index selecting the seed stream')
    train.set_defaults(handler=handle_train)

    evaluate = commands.add_parser('eval', help='Evaluate a checkpoint')
    evaluate.add_argument('--config', required=True, metavar='PATH', help='Experiment config file')
    evaluate.add_argument('--checkpoint', required=True, metavar='PATH', help='Checkpoint to evaluate')
    evaluate.add_argument('--seed', type=int, help='Override the master seed')
    evaluate.add_argument('--trace', metavar='PATH', help='Write the supervisor transparency trace')
    evaluate.add_argument('--jobs', type=int, help='Parallel evaluation workers')
    evaluate.add_argument('--out', choices=['table', 'csv', 'md'], default='table', help='Output format')
    evaluate.set_defaults(handler=handle_eval)

    suite = commands.add_parser('suite', help='Run a directory of experiment configs')
    suite.add_argument('suite', metavar='DIR', help='Suite directory (one .cfg per experiment)')
    suite.add_argument('--seed', type=int, help='Override every master seed')
    suite.add_argument('--jobs', type=int, default=1, help='Experiments run concurrently (default: 1)')
    suite.add_argument('--trace', metavar='DIR', help='Directory for per-experiment supervisor traces')
    suite.add_argument('--results-dir', default=str(RESULTS_DIR), help='Where reports are written')
    suite.add_argument('--out', choices=['table', 'csv', 'md'], default='md', help='Output format')
    suite.set_defaults(handler=handle_suite)

    prove_cmd = commands.add_parser('prove', help='Prove a norm file against a set of facts')
    prove_cmd.add_argument('norms', metavar='NORMS', help='Norm file')
    prove_cmd.add_argument('--facts', help='Semicolon-separated fact literals')
    prove_cmd.add_argument('--actions', help='Semicolon-separated action atoms (default: move(<direction>))')
    prove_cmd.add_argument('--all', action='store_true', help='Also print negative tags')
    prove_cmd.set_defaults(handler=handle_prove)

    check = commands.add_parser('check-norms', help='Parse and compile norm files')
    check.add_argument('norms', nargs='+', metavar='NORMS', help='Norm files')
    check.add_argument('--actions', help='Semicolon-separated action atoms (default: move(<direction>))')
    check.set_defaults(handler=handle_check_norms)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    ProgressManager(console).setup_logging()
    try:
        return args.handler(args)
    except CONFIG_ERRORS as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n\nOperation cancelled by user")
        sys.exit(0)
