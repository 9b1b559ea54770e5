"""
Exact planning on the compliance MDP of small layouts.

Enumerates every state reachable from the start under all legal actions
(ghosts marginalised into transition probabilities), then runs vectorised
value iteration to obtain ethical action sets (maximal compliance value),
ethical-optimal sets (maximal task value among ethical actions) and exact
values of fixed policies.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from pacman import Direction, GameState, PacmanEnv
from supervisor import NormativeSupervisor
from utils import setup_logger

logger = setup_logger("planning")

# Relative tolerance for comparing values against a state's maximum
VALUE_TOLERANCE = 1e-9


def canonical(state: GameState) -> GameState:
    """Drop score and clock, which the dynamics ignore."""
    return replace(state, score=0, step_count=0)


@dataclass
class ComplianceMDP:
    """
    Enumerated MDP. State-action pairs are stored contiguously per state;
    `offsets[i]:offsets[i + 1]` are the pairs of state i (none for terminal states).
    """

    states: List[GameState]
    index: Dict[GameState, int]
    offsets: np.ndarray
    pair_state: np.ndarray
    pair_action: List[Direction]
    reward_x: np.ndarray
    violation: np.ndarray
    trans_pair: np.ndarray
    trans_next: np.ndarray
    trans_prob: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_pairs(self) -> int:
        return len(self.pair_action)

    def compliance_reward(self, penalty: float) -> np.ndarray:
        return np.where(self.violation, float(penalty), 0.0)

    def pairs(self, state: GameState) -> range:
        i = self.index[canonical(state)]
        return range(int(self.offsets[i]), int(self.offsets[i + 1]))


def enumerate_mdp(env: PacmanEnv, supervisor: Optional[NormativeSupervisor] = None,
                  max_states: int = 500_000) -> ComplianceMDP:
    """
    Breadth-first enumeration of the reachable compliance MDP.

    Args:
        env: Environment (ghost policy assumed uniformly random)
        supervisor: Compliance oracle; without one every action is compliant
        max_states: Abort threshold

    Returns:
        ComplianceMDP with expected task rewards and violation flags per pair

    Raises:
        ValueError: If more than max_states states are reachable
    """
    start = canonical(env.reset())
    states, index = [start], {start: 0}
    frontier = deque([start])
    pairs_of: List[List[Tuple[Direction, float, bool, Dict[int, float]]]] = []

    while frontier:
        state = frontier.popleft()
        pairs = []
        for action in env.legal_actions(state):
            expected, successors = 0.0, {}
            for prob, outcome in env.transitions(state, action):
                expected += prob * outcome.reward
                nxt = canonical(outcome.next_state)
                if nxt not in index:
                    if len(states) >= max_states:
                        raise ValueError(f"more than {max_states} reachable states")
                    index[nxt] = len(states)
                    states.append(nxt)
                    frontier.append(nxt)
                j = index[nxt]
                successors[j] = successors.get(j, 0.0) + prob
            violated = supervisor is not None and not supervisor.is_compliant(state, action)
            pairs.append((action, expected, violated, successors))
        pairs_of.append(pairs)

    offsets, pair_state, pair_action, reward_x, violation = [0], [], [], [], []
    trans_pair, trans_next, trans_prob = [], [], []
    for i, pairs in enumerate(pairs_of):
        for action, expected, violated, successors in pairs:
            k = len(pair_action)
            pair_state.append(i)
            pair_action.append(action)
            reward_x.append(expected)
            violation.append(violated)
            for j, p in successors.items():
                trans_pair.append(k)
                trans_next.append(j)
                trans_prob.append(p)
        offsets.append(len(pair_action))

    logger.info(f"Enumerated {len(states)} states, {len(pair_action)} state-action pairs")
    return ComplianceMDP(
        states, index, np.array(offsets), np.array(pair_state, dtype=int), pair_action,
        np.array(reward_x), np.array(violation, dtype=bool),
        np.array(trans_pair, dtype=int), np.array(trans_next, dtype=int), np.array(trans_prob),
    )


# =============================================================================
# Value iteration
# =============================================================================
def _backup(mdp: ComplianceMDP, values: np.ndarray) -> np.ndarray:
    """Expected next-state value for every pair."""
    return np.bincount(mdp.trans_pair, weights=mdp.trans_prob * values[mdp.trans_next], minlength=mdp.n_pairs)


def _state_max(mdp: ComplianceMDP, q: np.ndarray, allowed: Optional[np.ndarray] = None) -> np.ndarray:
    masked = q if allowed is None else np.where(allowed, q, -np.inf)
    v = np.full(mdp.n_states, -np.inf)
    np.maximum.at(v, mdp.pair_state, masked)
    v[~np.isfinite(v)] = 0.0
    return v


def value_iteration(mdp: ComplianceMDP, reward: np.ndarray, gamma: float,
                    allowed: Optional[np.ndarray] = None, tol: float = 1e-12,
                    max_iter: int = 100_000) -> Tuple[np.ndarray, np.ndarray]:
    """
    Optimal values for a per-pair reward, maximising only over `allowed` pairs.

    Returns:
        (V per state, Q per pair)
    """
    values = np.zeros(mdp.n_states)
    q = reward.astype(float)
    for _ in range(max_iter):
        q = reward + gamma * _backup(mdp, values)
        updated = _state_max(mdp, q, allowed)
        if np.max(np.abs(updated - values), initial=0.0) <= tol:
            values = updated
            break
        values = updated
    else:
        logger.warning(f"Value iteration stopped after {max_iter} sweeps without converging")
    return values, reward + gamma * _backup(mdp, values)


def _near_max(mdp: ComplianceMDP, q: np.ndarray, allowed: Optional[np.ndarray] = None) -> np.ndarray:
    best = _state_max(mdp, q, allowed)[mdp.pair_state]
    near = np.abs(q - best) <= VALUE_TOLERANCE * np.maximum(1.0, np.abs(best))
    return near if allowed is None else near & allowed


def _as_sets(mdp: ComplianceMDP, mask: np.ndarray) -> Dict[GameState, FrozenSet[Direction]]:
    sets: Dict[GameState, set] = {s: set() for s, i in mdp.index.items() if mdp.offsets[i] < mdp.offsets[i + 1]}
    for k in np.flatnonzero(mask):
        sets[mdp.states[mdp.pair_state[k]]].add(mdp.pair_action[k])
    return {s: frozenset(a) for s, a in sets.items()}


def ethical_sets(mdp: ComplianceMDP, penalty: float, gamma: float) -> Dict[GameState, FrozenSet[Direction]]:
    """Per non-terminal state, the actions maximising the optimal compliance value."""
    _, q_n = value_iteration(mdp, mdp.compliance_reward(penalty), gamma)
    return _as_sets(mdp, _near_max(mdp, q_n))


@dataclass
class LexicographicSolution:
    q_x: np.ndarray
    q_n: np.ndarray
    ethical: np.ndarray
    ethical_optimal: np.ndarray


def lexicographic_solution(mdp: ComplianceMDP, penalty: float, gamma: float) -> LexicographicSolution:
    """
    Exact Q_N*, then the task value optimised over ethical actions only.

    Values within tolerance of a state's maximum are snapped to it, so exact
    argmax selection on the returned arrays reproduces the tolerant sets.
    """
    _, q_n = value_iteration(mdp, mdp.compliance_reward(penalty), gamma)
    ethical = _near_max(mdp, q_n)
    q_n = np.where(ethical, _state_max(mdp, q_n)[mdp.pair_state], q_n)

    _, q_x = value_iteration(mdp, mdp.reward_x, gamma, allowed=ethical)
    best = _near_max(mdp, q_x, allowed=ethical)
    q_x = np.where(best, _state_max(mdp, q_x, ethical)[mdp.pair_state], q_x)
    return LexicographicSolution(q_x, q_n, ethical, best)


def ethical_optimal_sets(mdp: ComplianceMDP, penalty: float, gamma: float) -> Dict[GameState, FrozenSet[Direction]]:
    return _as_sets(mdp, lexicographic_solution(mdp, penalty, gamma).ethical_optimal)


def evaluate_policy(mdp: ComplianceMDP, policy: Callable[[GameState], Direction], reward: np.ndarray,
                    gamma: float, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Exact (iterative) value of a deterministic policy per state."""
    chosen = np.zeros(mdp.n_pairs, dtype=bool)
    for i, state in enumerate(mdp.states):
        lo, hi = int(mdp.offsets[i]), int(mdp.offsets[i + 1])
        if lo == hi:
            continue
        action = policy(state)
        for k in range(lo, hi):
            if mdp.pair_action[k] is action:
                chosen[k] = True
                break
        else:
            raise ValueError(f"policy chose illegal action {action.value}")
    values, _ = value_iteration(mdp, reward, gamma, allowed=chosen, tol=tol, max_iter=max_iter)
    return values
