"""
Experiment harness: flat key/value experiment configs, seeded train/test
repetitions, and results rows rendered as CSV or markdown tables.
"""

from __future__ import annotations

import csv
import io
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values

import config
from agents import ComplianceBinding, Hyperparams, Selector, VectorQ, greedy_policy, make_q, train
from norms import load_norm_file
from pacman import PacmanEnv, load_layout_file, run_episode
from progress_manager import ProgressManager
from supervisor import ComplianceTrace, NormativeSupervisor
from utils import derive_rng, setup_logger

logger = setup_logger("experiment")

CONFIG_SUFFIX = ".cfg"
TABULAR_MAX_CELLS = 15

# RNG stream phases
TRAIN_PHASE, TEST_PHASE = 0, 1


class ConfigError(ValueError):
    """Raised for invalid experiment configuration files or values."""


_KEYS = {
    "NAME", "LAYOUT", "NORMS", "AGENT", "MONITORED", "FEATURES", "ALPHA", "GAMMA",
    "EPSILON_START", "EPSILON_END", "EPSILON_DECAY_EPISODES", "PENALTY", "WEIGHT", "THRESHOLD_N",
    "TRAIN_EPISODES", "TEST_EPISODES", "MAX_STEPS", "SEED", "REPETITIONS", "SCARED_DURATION",
    "GHOST_NO_REVERSAL", "GHOST_RESPAWN", "ALLOW_LARGE_TABULAR", "EVAL_WORKERS",
}


def _bool(key: str, raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _number(key: str, raw: str, kind=float):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def _resolve(raw: str, base_dir: Optional[Path]) -> Path:
    path = Path(raw)
    if path.is_absolute():
        return path
    if base_dir is not None and (base_dir / path).exists():
        return base_dir / path
    return config.PROJECT_ROOT / path


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    layout: Path
    norms: Optional[Path]
    agent: Selector = Selector.PLAIN
    monitored: bool = False
    features: Optional[str] = None
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    seed: int = config.MASTER_SEED
    repetitions: int = config.REPETITIONS
    scared_duration: int = config.SCARED_DURATION
    ghost_no_reversal: bool = config.GHOST_NO_REVERSAL
    ghost_respawn: bool = config.GHOST_RESPAWN
    allow_large_tabular: bool = False
    eval_workers: int = config.EVAL_WORKERS

    @classmethod
    def from_mapping(cls, values: Mapping[str, Optional[str]], base_dir: Optional[Path] = None,
                     default_name: str = "experiment") -> "ExperimentConfig":
        """
        Build a config from string key/value pairs; defaults come from config.py.

        Raises:
            ConfigError: Unknown keys, missing LAYOUT, malformed values
        """
        values = {k.upper(): (v or "").strip() for k, v in values.items()}
        unknown = sorted(set(values) - _KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if not values.get("LAYOUT"):
            raise ConfigError("LAYOUT is required")

        try:
            agent = Selector(values.get("AGENT") or Selector.PLAIN.value)
        except ValueError:
            raise ConfigError(f"AGENT must be one of {[s.value for s in Selector]}") from None
        features = values.get("FEATURES", "").lower()
        features = None if features in ("", "none", "tabular") else features
        norms = values.get("NORMS", "")

        get = values.get
        hp_args = {
            "alpha": _number("ALPHA", get("ALPHA") or str(config.ALPHA)),
            "gamma": _number("GAMMA", get("GAMMA") or str(config.GAMMA)),
            "epsilon_start": _number("EPSILON_START", get("EPSILON_START") or str(config.EPSILON_START)),
            "epsilon_end": _number("EPSILON_END", get("EPSILON_END") or str(config.EPSILON_END)),
            "epsilon_decay_episodes": _number("EPSILON_DECAY_EPISODES", get("EPSILON_DECAY_EPISODES"), int)
            if get("EPSILON_DECAY_EPISODES") else None,
            "penalty": _number("PENALTY", get("PENALTY") or str(config.PENALTY)),
            "weight": _number("WEIGHT", get("WEIGHT") or str(config.WEIGHT)),
            "threshold_n": _number("THRESHOLD_N", get("THRESHOLD_N") or str(config.THRESHOLD_N)),
            "train_episodes": _number("TRAIN_EPISODES", get("TRAIN_EPISODES") or str(config.TRAIN_EPISODES), int),
            "test_episodes": _number("TEST_EPISODES", get("TEST_EPISODES") or str(config.TEST_EPISODES), int),
            "max_steps": _number("MAX_STEPS", get("MAX_STEPS") or str(config.MAX_STEPS), int),
        }
        try:
            hyperparams = Hyperparams(**hp_args)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        _require_test_episodes(hyperparams)

        result = cls(
            name=get("NAME") or default_name,
            layout=_resolve(values["LAYOUT"], base_dir),
            norms=_resolve(norms, base_dir) if norms and norms.lower() != "none" else None,
            agent=agent,
            monitored=_bool("MONITORED", get("MONITORED") or "false"),
            features=features,
            hyperparams=hyperparams,
            seed=_number("SEED", get("SEED") or str(config.MASTER_SEED), int),
            repetitions=_number("REPETITIONS", get("REPETITIONS") or str(config.REPETITIONS), int),
            scared_duration=_number("SCARED_DURATION", get("SCARED_DURATION") or str(config.SCARED_DURATION), int),
            ghost_no_reversal=_bool("GHOST_NO_REVERSAL", get("GHOST_NO_REVERSAL") or str(config.GHOST_NO_REVERSAL)),
            ghost_respawn=_bool("GHOST_RESPAWN", get("GHOST_RESPAWN") or str(config.GHOST_RESPAWN)),
            allow_large_tabular=_bool("ALLOW_LARGE_TABULAR", get("ALLOW_LARGE_TABULAR") or "false"),
            eval_workers=_number("EVAL_WORKERS", get("EVAL_WORKERS") or str(config.EVAL_WORKERS), int),
        )
        if result.repetitions < 1 or result.eval_workers < 1:
            raise ConfigError("REPETITIONS and EVAL_WORKERS must be at least 1")
        if result.monitored and result.norms is None:
            raise ConfigError("MONITORED needs a NORMS file")
        return result


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read one experiment config file (flat KEY=value lines).

    Raises:
        FileNotFoundError: If the file doesn't exist
        ConfigError: If the contents are invalid
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    return ExperimentConfig.from_mapping(dotenv_values(path), path.parent, default_name=path.stem)


def load_suite(directory: Union[str, Path]) -> List[ExperimentConfig]:
    """Every config file in a suite directory, in sorted filename order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Suite directory not found: {directory}")
    files = sorted(directory.glob(f"*{CONFIG_SUFFIX}"))
    if not files:
        raise ConfigError(f"no {CONFIG_SUFFIX} files in {directory}")
    return [load_config(f) for f in files]


# =============================================================================
# Results
# =============================================================================
@dataclass
class ResultsRow:
    name: str
    agent: str
    monitored: bool
    features: Optional[str] = None
    games: int = 0
    won: int = 0
    total_score: int = 0
    ghosts_eaten: Dict[str, int] = field(default_factory=dict)
    violations: int = 0
    wall_time: float = 0.0
    status: str = "success"
    error: Optional[str] = None

    @property
    def pct_won(self) -> float:
        return 100.0 * self.won / self.games if self.games else 0.0

    @property
    def avg_score(self) -> float:
        return self.total_score / self.games if self.games else 0.0

    def avg_ghosts(self, colour: Optional[str] = None) -> float:
        if not self.games:
            return 0.0
        eaten = sum(self.ghosts_eaten.values()) if colour is None else self.ghosts_eaten.get(colour, 0)
        return eaten / self.games

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "agent": self.agent,
            "monitored": self.monitored,
            "features": self.features,
            "games": self.games,
            "pct_won": self.pct_won,
            "avg_score": self.avg_score,
            "ghosts_eaten": dict(sorted(self.ghosts_eaten.items())),
            "violations": self.violations,
            "wall_time_seconds": self.wall_time,
            "status": self.status,
            "error": self.error,
        }


@dataclass
class _Tally:
    games: int = 0
    won: int = 0
    score: int = 0
    ghosts: Counter = field(default_factory=Counter)
    violations: int = 0

    def __iadd__(self, other: "_Tally") -> "_Tally":
        self.games += other.games
        self.won += other.won
        self.score += other.score
        self.ghosts.update(other.ghosts)
        self.violations += other.violations
        return self


def _colours(rows: List[ResultsRow]) -> List[str]:
    return sorted({c for r in rows for c in r.ghosts_eaten})


def _columns(rows: List[ResultsRow]) -> List[str]:
    colours = _colours(rows)
    ghosts = ["Avg Ghosts Eaten"] if len(colours) <= 1 else [f"Avg {c.title()} Ghosts Eaten" for c in colours]
    return ["Experiment", "Agent", "Monitored", "% Games Won", "Avg Game Score", *ghosts, "Violations", "Wall Time (s)"]


def _cells(row: ResultsRow, colours: List[str]) -> List[str]:
    agent = row.agent + (f" ({row.features})" if row.features else "")
    if row.status != "success":
        blanks = ["-"] * (3 + max(1, len(colours)))
        return [row.name, agent, "yes" if row.monitored else "no", *blanks, f"{row.wall_time:.1f}"]
    ghosts = [f"{row.avg_ghosts():.3f}"] if len(colours) <= 1 else [f"{row.avg_ghosts(c):.3f}" for c in colours]
    return [
        row.name, agent, "yes" if row.monitored else "no",
        f"{row.pct_won:.1f}", f"{row.avg_score:.2f}", *ghosts, str(row.violations), f"{row.wall_time:.1f}",
    ]


def results_table(rows: List[ResultsRow]) -> Tuple[List[str], List[List[str]]]:
    """Human-readable header and cells, shared by the markdown and console renderers."""
    colours = _colours(rows)
    return _columns(rows), [_cells(r, colours) for r in rows]


def render_csv(rows: List[ResultsRow]) -> str:
    """Machine-readable results, one line per row."""
    colours = _colours(rows)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["name", "agent", "features", "monitored", "games", "pct_won", "avg_score",
                     *[f"avg_ghosts_{c}" for c in colours], "violations", "wall_time", "status", "error"])
    for r in rows:
        writer.writerow([
            r.name, r.agent, r.features or "", int(r.monitored), r.games, f"{r.pct_won:.4f}", f"{r.avg_score:.4f}",
            *[f"{r.avg_ghosts(c):.4f}" for c in colours], r.violations, f"{r.wall_time:.3f}", r.status, r.error or "",
        ])
    return buffer.getvalue()


def render_markdown(rows: List[ResultsRow]) -> str:
    """Aligned markdown results table."""
    header, body = results_table(rows)
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(header)]

    def line(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

    lines = [line(header), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    lines += [line(b) for b in body]
    return "\n".join(lines) + "\n"


# =============================================================================
# Running experiments
# =============================================================================
def build_env(cfg: ExperimentConfig) -> PacmanEnv:
    layout = load_layout_file(cfg.layout)
    if cfg.features is None and not cfg.allow_large_tabular and len(layout.open_cells()) > TABULAR_MAX_CELLS:
        raise ConfigError(
            f"tabular agents are limited to layouts with at most {TABULAR_MAX_CELLS} open cells "
            f"({layout.name} has {len(layout.open_cells())}); set ALLOW_LARGE_TABULAR=true to override"
        )
    return PacmanEnv(layout, cfg.scared_duration, cfg.ghost_no_reversal, cfg.ghost_respawn)


def build_supervisor(cfg: ExperimentConfig, env: PacmanEnv,
                     trace: Optional[ComplianceTrace] = None) -> Optional[NormativeSupervisor]:
    if cfg.norms is None:
        return None
    return NormativeSupervisor.for_env(load_norm_file(cfg.norms), env, trace)


def train_agent(cfg: ExperimentConfig, env: PacmanEnv, supervisor: Optional[NormativeSupervisor],
                repetition: int = 0, progress: Optional[ProgressManager] = None) -> VectorQ:
    """Train one repetition from its own seeded stream."""
    hp = cfg.hyperparams
    task = progress.training_task(cfg.name, hp.train_episodes, repetition) if progress and progress.progress else None
    on_episode = (lambda _: progress.advance(task)) if task is not None else None
    q = train(
        ComplianceBinding(env, supervisor, hp.penalty), cfg.agent, hp,
        derive_rng(cfg.seed, repetition, TRAIN_PHASE),
        q=make_q(env, cfg.features), monitored=cfg.monitored, on_episode=on_episode,
    )
    if task is not None:
        progress.finish(task)
    return q


def _require_test_episodes(hp: Hyperparams) -> None:
    if hp.test_episodes < 1:
        raise ConfigError("TEST_EPISODES must be positive")


def evaluate_agent(cfg: ExperimentConfig, env: PacmanEnv, supervisor: Optional[NormativeSupervisor], q: VectorQ,
                   repetition: int = 0, progress: Optional[ProgressManager] = None) -> _Tally:
    """Greedy test episodes, each on its own (seed, repetition, episode) stream."""
    hp = cfg.hyperparams
    _require_test_episodes(hp)
    policy = greedy_policy(q, cfg.agent, env, hp, supervisor if cfg.monitored else None)
    task = progress.evaluation_task(cfg.name, hp.test_episodes, repetition) if progress and progress.progress else None

    def play(episode: int) -> _Tally:
        trace = run_episode(policy, env, derive_rng(cfg.seed, repetition, TEST_PHASE, episode), hp.max_steps)
        tally = _Tally(1, int(trace.won), trace.score, Counter(c.value for c in trace.ghosts_eaten().elements()))
        if supervisor is not None:
            tally.violations = sum(1 for t in trace.steps if not supervisor.audit(t.state, t.action))
        if task is not None:
            progress.advance(task)
        return tally

    total = _Tally()
    if cfg.eval_workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.eval_workers) as executor:
            for tally in executor.map(play, range(hp.test_episodes)):
                total += tally
    else:
        for episode in range(hp.test_episodes):
            total += play(episode)
    if task is not None:
        progress.finish(task)
    return total


def run_experiment(cfg: ExperimentConfig, trace_path: Optional[Union[str, Path]] = None,
                   progress: Optional[ProgressManager] = None) -> ResultsRow:
    """
    Train and test `cfg.repetitions` times and aggregate one results row.

    Args:
        cfg: Experiment configuration
        trace_path: Optional supervisor transparency trace file
        progress: Optional progress display

    Returns:
        ResultsRow averaged over every test game of every repetition

    Raises:
        FileNotFoundError: Layout or norm file missing
        ParseError: Invalid norm file
        ConfigError: Invalid combination of settings
    """
    start = time.time()
    _require_test_episodes(cfg.hyperparams)
    env = build_env(cfg)
    trace = ComplianceTrace(trace_path) if trace_path else None
    supervisor = build_supervisor(cfg, env, trace)
    colours = {c.value: 0 for c, _ in env.layout.ghost_starts}

    total = _Tally()
    for repetition in range(cfg.repetitions):
        q = train_agent(cfg, env, supervisor, repetition, progress)
        total += evaluate_agent(cfg, env, supervisor, q, repetition, progress)
        logger.debug(f"{cfg.name}: repetition {repetition + 1}/{cfg.repetitions} done")

    row = ResultsRow(
        name=cfg.name,
        agent=cfg.agent.value,
        monitored=cfg.monitored,
        features=cfg.features,
        games=total.games,
        won=total.won,
        total_score=total.score,
        ghosts_eaten={**colours, **total.ghosts},
        violations=total.violations,
        wall_time=time.time() - start,
    )
    logger.info(
        f"{cfg.name}: won {row.pct_won:.1f}%, avg score {row.avg_score:.2f}, "
        f"ghosts {row.avg_ghosts():.3f}/game, {row.violations} violations"
    )
    return row


def with_overrides(cfg: ExperimentConfig, seed: Optional[int] = None, **hyperparams) -> ExperimentConfig:
    """Copy of `cfg` with a new seed and/or hyperparameter values."""
    updated = replace(cfg, seed=cfg.seed if seed is None else seed)
    if hyperparams:
        updated = replace(updated, hyperparams=replace(cfg.hyperparams, **hyperparams))
    return updated
