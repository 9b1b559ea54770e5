"""
Multi-objective Q-learning over the compliance MDP.

Every learner keeps two Q components per (state, action): the task value Q_x
and the compliance value Q_N. Actions are chosen by plain Q-learning (task
only), by scalarisation Q_x + w·Q_N, or by thresholded lexicographic
selection (TLQ) that prefers compliance up to the threshold C_N.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

import config
from features import FeatureExtractor, make_extractor
from pacman import ACTIONS, Direction, GameState, PacmanEnv
from supervisor import NormativeSupervisor
from utils import setup_logger

logger = setup_logger("agents")

CHECKPOINT_FORMAT = "ngrl-checkpoint"
CHECKPOINT_VERSION = 1

_ORDER = {a: i for i, a in enumerate(ACTIONS)}

TASK, COMPLIANCE = 0, 1


class Selector(str, Enum):
    PLAIN = "plainQ"
    SCALARIZED = "scalarized"
    TLQ = "tlq"


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = config.ALPHA
    gamma: float = config.GAMMA
    epsilon_start: float = config.EPSILON_START
    epsilon_end: float = config.EPSILON_END
    epsilon_decay_episodes: Optional[int] = None
    penalty: float = config.PENALTY
    weight: float = config.WEIGHT
    threshold_n: float = config.THRESHOLD_N
    train_episodes: int = config.TRAIN_EPISODES
    test_episodes: int = config.TEST_EPISODES
    max_steps: int = config.MAX_STEPS

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.penalty >= 0:
            raise ValueError(f"penalty must be negative, got {self.penalty}")
        if self.weight <= 0:
            raise ValueError(f"weight must be positive, got {self.weight}")
        if self.train_episodes < 0 or self.test_episodes < 0 or self.max_steps <= 0:
            raise ValueError("episode counts must be non-negative and max_steps positive")

    def epsilon(self, episode: int) -> float:
        """Linear decay from epsilon_start to epsilon_end over the decay horizon."""
        horizon = self.epsilon_decay_episodes or self.train_episodes
        if horizon <= 1:
            return self.epsilon_end
        frac = min(1.0, episode / (horizon - 1))
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


# =============================================================================
# Compliance MDP binding
# =============================================================================
def noncompliance_reward(supervisor: Optional[NormativeSupervisor], state: GameState,
                         action: Direction, penalty: float) -> float:
    """R_N,p(s, a): `penalty` if the supervisor derives a prohibition of `action`, else 0."""
    if supervisor is None or supervisor.is_compliant(state, action):
        return 0.0
    return float(penalty)


@dataclass
class ComplianceBinding:
    """Environment plus supervisor, exposing the reward vector (R_x, R_N,p)."""

    env: PacmanEnv
    supervisor: Optional[NormativeSupervisor]
    penalty: float = config.PENALTY

    def noncompliance_reward(self, state: GameState, action: Direction) -> float:
        return noncompliance_reward(self.supervisor, state, action, self.penalty)


# =============================================================================
# Q representations
# =============================================================================
def state_key(state: GameState) -> tuple:
    """Tabular key: scared timers bucketed to scared / not scared, ghost headings dropped."""
    ghosts = tuple((g.cell, g.scared, g.active) for g in state.ghosts)
    return (state.pacman, ghosts, state.food, state.capsules)


class TabularQ:
    """Map (state key, action) -> [Q_x, Q_N], default (0, 0)."""

    kind = "tabular"

    def __init__(self):
        self.table: Dict[Tuple[tuple, Direction], np.ndarray] = {}
        self.max_compliance = 0.0

    def q(self, state: GameState, action: Direction) -> np.ndarray:
        return self.table.get((state_key(state), action), np.zeros(2))

    def values(self, state: GameState, actions: Sequence[Direction]) -> np.ndarray:
        """Q vectors for `actions`, shape (len(actions), 2)."""
        key = state_key(state)
        zero = np.zeros(2)
        rows = [self.table.get((key, a), zero) for a in actions]
        return np.array(rows, dtype=float).reshape(len(rows), 2)

    def update(self, state, action, reward, next_state, next_legal, hp: Hyperparams) -> None:
        target = np.asarray(reward, dtype=float).copy()
        if next_legal and not next_state.terminal:
            target += hp.gamma * self.values(next_state, next_legal).max(axis=0)
        key = (state_key(state), action)
        current = self.table.get(key, np.zeros(2))
        updated = current + hp.alpha * (target - current)
        self.table[key] = updated
        self.max_compliance = max(self.max_compliance, float(updated[COMPLIANCE]))

    def __len__(self) -> int:
        return len(self.table)


def approx_q(theta: np.ndarray, extractor: FeatureExtractor, state: GameState, action: Direction) -> np.ndarray:
    """Q_θ(s, a) = θ·f(s, a) for each objective row of θ."""
    features = extractor(state, action)
    if features.shape[0] != theta.shape[-1]:
        raise ValueError(f"feature arity {features.shape[0]} does not match weights {theta.shape[-1]}")
    return theta @ features


def approx_update(theta: np.ndarray, extractor: FeatureExtractor, state, action, reward,
                  next_state, next_legal, hp: Hyperparams) -> np.ndarray:
    """Semi-gradient TD(0) step, separately per objective; returns the new θ."""
    features = extractor(state, action)
    if features.shape[0] != theta.shape[-1]:
        raise ValueError(f"feature arity {features.shape[0]} does not match weights {theta.shape[-1]}")
    target = np.asarray(reward, dtype=float).copy()
    if next_legal and not next_state.terminal:
        target += hp.gamma * (extractor.matrix(next_state, list(next_legal)) @ theta.T).max(axis=0)
    delta = target - theta @ features
    return theta + hp.alpha * np.outer(delta, features)


class LinearQ:
    """Linear approximation with one weight vector per objective."""

    kind = "linear"

    def __init__(self, extractor: FeatureExtractor, theta: Optional[np.ndarray] = None):
        self.extractor = extractor
        self.theta = np.zeros((2, extractor.arity)) if theta is None else np.asarray(theta, dtype=float)
        if self.theta.shape != (2, extractor.arity):
            raise ValueError(f"weights of shape {self.theta.shape} do not fit {extractor.name} features")
        self.max_compliance = 0.0

    def q(self, state: GameState, action: Direction) -> np.ndarray:
        return approx_q(self.theta, self.extractor, state, action)

    def values(self, state: GameState, actions: Sequence[Direction]) -> np.ndarray:
        return self.extractor.matrix(state, list(actions)) @ self.theta.T

    def update(self, state, action, reward, next_state, next_legal, hp: Hyperparams) -> None:
        self.theta = approx_update(self.theta, self.extractor, state, action, reward, next_state, next_legal, hp)


VectorQ = Union[TabularQ, LinearQ]


def q_update(q: VectorQ, state, action, reward, next_state, next_legal, hp: Hyperparams) -> VectorQ:
    """
    One Q-learning step on both components:
    Q_i(s,a) += alpha·(r_i + gamma·max_a' Q_i(s',a') - Q_i(s,a)); terminal s' bootstraps 0.
    """
    q.update(state, action, reward, next_state, next_legal, hp)
    return q


# =============================================================================
# Action selection
# =============================================================================
def _rank(values: np.ndarray, legal: Sequence[Direction], sort_key) -> List[Direction]:
    if not len(legal):
        raise ValueError("no legal actions to select from")
    rows = sorted(range(len(legal)), key=lambda i: (*sort_key(values[i]), _ORDER[legal[i]]))
    return [legal[i] for i in rows]


def scalarized_ranking(values: np.ndarray, legal: Sequence[Direction], weight: float) -> List[Direction]:
    return _rank(values, legal, lambda v: (-(v[TASK] + weight * v[COMPLIANCE]),))


def tlq_ranking(values: np.ndarray, legal: Sequence[Direction], threshold_n: float) -> List[Direction]:
    return _rank(values, legal, lambda v: (-min(v[COMPLIANCE], threshold_n), -v[TASK]))


def plain_ranking(values: np.ndarray, legal: Sequence[Direction]) -> List[Direction]:
    return _rank(values, legal, lambda v: (-v[TASK],))


def ranking(selector: Selector, q: VectorQ, state: GameState, legal: Sequence[Direction],
            hp: Hyperparams) -> List[Direction]:
    """Legal actions ordered by the selector's preference, fixed action order breaking ties."""
    values = q.values(state, legal)
    if selector is Selector.SCALARIZED:
        return scalarized_ranking(values, legal, hp.weight)
    if selector is Selector.TLQ:
        return tlq_ranking(values, legal, hp.threshold_n)
    return plain_ranking(values, legal)


def scalarized_select(q: VectorQ, state: GameState, legal: Sequence[Direction], weight: float) -> Direction:
    return scalarized_ranking(q.values(state, legal), legal, weight)[0]


def tlq_select(q: VectorQ, state: GameState, legal: Sequence[Direction], threshold_n: float = 0.0) -> Direction:
    return tlq_ranking(q.values(state, legal), legal, threshold_n)[0]


def plain_select(q: VectorQ, state: GameState, legal: Sequence[Direction]) -> Direction:
    return plain_ranking(q.values(state, legal), legal)[0]


def eth_set(values: np.ndarray, legal: Sequence[Direction], threshold_n: float = 0.0) -> List[Direction]:
    """Actions maximising CQ_N = min(Q_N, C_N)."""
    capped = np.minimum(values[:, COMPLIANCE], threshold_n)
    return [a for a, v in zip(legal, capped) if v == capped.max()]


def opt_set(values: np.ndarray, legal: Sequence[Direction], threshold_n: float = 0.0) -> List[Direction]:
    """Actions in eth(s) maximising Q_x."""
    ethical = set(eth_set(values, legal, threshold_n))
    best = max(values[i, TASK] for i, a in enumerate(legal) if a in ethical)
    return [a for i, a in enumerate(legal) if a in ethical and values[i, TASK] == best]


def epsilon_greedy(select: Callable[[GameState], Direction], state: GameState, legal: Sequence[Direction],
                   epsilon: float, rng: np.random.Generator) -> Direction:
    """With probability epsilon a uniform legal action, else select(state)."""
    if rng.random() < epsilon:
        return legal[int(rng.integers(len(legal)))]
    return select(state)


# =============================================================================
# Training and policies
# =============================================================================
def make_q(env: PacmanEnv, features: Optional[str] = None) -> VectorQ:
    return TabularQ() if not features else LinearQ(make_extractor(features, env))


def _choose(selector: Selector, q: VectorQ, state: GameState, legal: List[Direction], hp: Hyperparams,
            supervisor: Optional[NormativeSupervisor], preferred: Optional[Direction] = None) -> Direction:
    order = ranking(selector, q, state, legal, hp)
    if preferred is not None:
        order = [preferred] + [a for a in order if a is not preferred]
    if supervisor is None:
        return order[0]
    return supervisor.monitor_filter(state, order)


def train(
    binding: ComplianceBinding,
    selector: Selector,
    hp: Hyperparams,
    rng: np.random.Generator,
    q: Optional[VectorQ] = None,
    monitored: bool = False,
    on_episode: Optional[Callable[[int], None]] = None,
) -> VectorQ:
    """
    Run hp.train_episodes epsilon-greedy episodes, updating Q on every transition.

    Args:
        binding: Environment, supervisor and penalty
        selector: plainQ, scalarized or tlq
        hp: Hyperparameters
        rng: Random stream for exploration and ghosts
        q: Existing Q to continue from (defaults to a zero table)
        monitored: Filter every executed action through the supervisor
        on_episode: Progress callback, called with the episode number

    Returns:
        The learned VectorQ
    """
    env = binding.env
    q = q if q is not None else TabularQ()
    monitor = binding.supervisor if monitored else None
    selector = Selector(selector)

    for episode in range(hp.train_episodes):
        epsilon = hp.epsilon(episode)
        state = env.reset()
        steps = 0
        while not state.terminal and steps < hp.max_steps:
            legal = env.legal_actions(state)
            greedy = lambda s: ranking(selector, q, s, legal, hp)[0]
            action = epsilon_greedy(greedy, state, legal, epsilon, rng)
            if monitor is not None:
                action = _choose(selector, q, state, legal, hp, monitor, preferred=action)

            r_n = binding.noncompliance_reward(state, action) if selector is not Selector.PLAIN else 0.0
            outcome = env.step(state, action, rng)
            next_state = outcome.next_state
            q_update(q, state, action, (outcome.reward, r_n), next_state, env.legal_actions(next_state), hp)
            state = next_state
            steps += 1

        if isinstance(q, TabularQ):
            assert q.max_compliance <= 0.0, f"Q_N became positive ({q.max_compliance}) in episode {episode}"
        if on_episode:
            on_episode(episode + 1)

    logger.debug(f"Trained {selector.value} for {hp.train_episodes} episodes")
    return q


def greedy_policy(q: VectorQ, selector: Selector, env: PacmanEnv, hp: Hyperparams,
                  supervisor: Optional[NormativeSupervisor] = None) -> Callable[[GameState], Direction]:
    """Deterministic policy s -> selector(Q, s, legal(s)); monitored when a supervisor is given."""
    selector = Selector(selector)

    def policy(state: GameState) -> Direction:
        return _choose(selector, q, state, env.legal_actions(state), hp, supervisor)

    return policy


# =============================================================================
# Checkpoints
# =============================================================================
def _tuplify(value):
    return tuple(_tuplify(v) for v in value) if isinstance(value, list) else value


def save_checkpoint(q: VectorQ, path: Union[str, Path], meta: Optional[dict] = None) -> Path:
    """
    Write a deterministic, versioned JSON checkpoint (sorted keys and entries).

    Args:
        q: Tabular or linear Q
        path: Output file
        meta: Optional extra metadata (e.g. selector, config name)

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "kind": q.kind, "meta": meta or {}}
    if isinstance(q, TabularQ):
        entries = [
            [json.loads(json.dumps(key)), action.value, float(v[TASK]), float(v[COMPLIANCE])]
            for (key, action), v in q.table.items()
        ]
        payload["entries"] = sorted(entries, key=lambda e: (json.dumps(e[0]), _ORDER[Direction(e[1])]))
    else:
        payload["features"] = q.extractor.name
        payload["feature_names"] = list(q.extractor.names)
        payload["theta"] = q.theta.tolist()
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    logger.info(f"Saved {q.kind} checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path], env: Optional[PacmanEnv] = None) -> Tuple[VectorQ, dict]:
    """
    Read a checkpoint written by save_checkpoint.

    Args:
        path: Checkpoint file
        env: Environment, required to rebuild the extractor of a linear checkpoint

    Returns:
        (Q, meta)

    Raises:
        FileNotFoundError: If the checkpoint doesn't exist
        ValueError: Wrong format or version
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path} is not a version {CHECKPOINT_VERSION} checkpoint")

    if payload["kind"] == "tabular":
        q = TabularQ()
        for key, action, qx, qn in payload["entries"]:
            q.table[(_tuplify(key), Direction(action))] = np.array([qx, qn])
        return q, payload.get("meta", {})
    if env is None:
        raise ValueError("loading a linear checkpoint needs the environment")
    return LinearQ(make_extractor(payload["features"], env), np.array(payload["theta"])), payload.get("meta", {})
