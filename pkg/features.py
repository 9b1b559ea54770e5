"""
Feature extractors for linear Q-function approximation.

`basic` follows the classic teaching-framework set (bias, ghosts one step away,
eats-food, distance to the closest food); `blue` splits the ghost count per
colour and scared status so the learner can tell blue from orange ghosts.
"""

from collections import deque
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from pacman import MOVES, Cell, Direction, GameState, PacmanEnv

# All features are divided by this to keep the weights well scaled
FEATURE_SCALE = 10.0


class FeatureExtractor:
    """Named feature vector f(s, a) for one environment."""

    name = "base"
    names: Tuple[str, ...] = ()

    def __init__(self, env: PacmanEnv):
        self.env = env

    @property
    def arity(self) -> int:
        return len(self.names)

    def __call__(self, state: GameState, action: Direction) -> np.ndarray:
        raw = self.extract(state, action)
        return np.array([raw.get(n, 0.0) for n in self.names], dtype=float) / FEATURE_SCALE

    def extract(self, state: GameState, action: Direction) -> Dict[str, float]:
        raise NotImplementedError

    def matrix(self, state: GameState, actions: List[Direction]) -> np.ndarray:
        """Features for every action, one row per action."""
        return np.vstack([self(state, a) for a in actions]) if actions else np.zeros((0, self.arity))

    # -- helpers shared by the Pac-Man extractors ---------------------------------
    def _next_cell(self, state: GameState, action: Direction) -> Cell:
        if action is Direction.STOP:
            return state.pacman
        return self.env.layout.target(state.pacman, action) or state.pacman

    def _ghost_reach(self, cell: Cell) -> List[Cell]:
        layout = self.env.layout
        return [cell] + [t for t in (layout.target(cell, m) for m in MOVES) if t is not None]

    def _has_food(self, state: GameState, cell: Cell) -> bool:
        bit = self.env.layout.food_bit(cell)
        return bit is not None and bool(state.food >> bit & 1)

    def _closest_food(self, state: GameState, start: Cell) -> Optional[int]:
        """Maze distance from `start` to the nearest remaining food (BFS), or None."""
        layout = self.env.layout
        frontier = deque([(start, 0)])
        seen = {start}
        while frontier:
            cell, dist = frontier.popleft()
            if self._has_food(state, cell):
                return dist
            for move in MOVES:
                nxt = layout.target(cell, move)
                if nxt is not None and nxt not in seen:
                    seen.add(nxt)
                    frontier.append((nxt, dist + 1))
        return None


class ConstantExtractor(FeatureExtractor):
    """Single always-on feature; reduces linear Q-learning to one shared cell."""

    name = "constant"
    names = ("bias",)

    def __call__(self, state: GameState, action: Direction) -> np.ndarray:
        return np.ones(1)

    def extract(self, state, action):
        return {"bias": 1.0}


class BasicExtractor(FeatureExtractor):
    name = "basic"
    names = ("bias", "#-of-ghosts-1-step-away", "eats-food", "closest-food")

    def _nearby(self, state: GameState, cell: Cell):
        for index, ghost in enumerate(state.ghosts):
            if ghost.active and cell in self._ghost_reach(ghost.cell):
                yield self.env.ghost_color(index), ghost

    def _food_features(self, state: GameState, cell: Cell, ghosts_near: bool) -> Dict[str, float]:
        features = {}
        if not ghosts_near and self._has_food(state, cell):
            features["eats-food"] = 1.0
        dist = self._closest_food(state, cell)
        if dist is not None:
            layout = self.env.layout
            features["closest-food"] = float(dist) / (layout.width * layout.height)
        return features

    def extract(self, state, action):
        cell = self._next_cell(state, action)
        near = sum(1 for _ in self._nearby(state, cell))
        features = {"bias": 1.0, "#-of-ghosts-1-step-away": float(near)}
        features.update(self._food_features(state, cell, near > 0))
        return features


class BlueExtractor(BasicExtractor):
    name = "blue"
    names = (
        "bias",
        "#-of-blue-ghosts-1-step-away",
        "#-of-orange-ghosts-1-step-away",
        "#-of-scared-blue-ghosts-1-step-away",
        "#-of-scared-orange-ghosts-1-step-away",
        "eats-food",
        "closest-food",
    )

    def extract(self, state, action):
        cell = self._next_cell(state, action)
        features = {"bias": 1.0}
        near = 0
        for colour, ghost in self._nearby(state, cell):
            near += 1
            prefix = "#-of-scared-" if ghost.scared else "#-of-"
            key = f"{prefix}{colour.value}-ghosts-1-step-away"
            features[key] = features.get(key, 0.0) + 1.0
        features.update(self._food_features(state, cell, near > 0))
        return features


EXTRACTORS: Dict[str, Callable[[PacmanEnv], FeatureExtractor]] = {
    "constant": ConstantExtractor,
    "basic": BasicExtractor,
    "blue": BlueExtractor,
}


def make_extractor(name: str, env: PacmanEnv) -> FeatureExtractor:
    """
    Build a named feature extractor for an environment.

    Raises:
        ValueError: Unknown extractor name
    """
    try:
        return EXTRACTORS[name](env)
    except KeyError:
        raise ValueError(f"unknown feature extractor: {name} (choose from {', '.join(EXTRACTORS)})") from None
