"""
Pac-Man gridworld with deterministic rules and randomly moving ghosts.
Supports the 5x3 mini layout used for tabular learning and larger multi-ghost mazes.

Scoring: +10 food, +200 scared ghost, +500 win, -500 lose, -1 per time step.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Counter, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import GHOST_NO_REVERSAL, GHOST_RESPAWN, LAYOUTS_DIR, SCARED_DURATION
from utils import setup_logger

logger = setup_logger("pacman")

Cell = Tuple[int, int]

REWARD_FOOD = 10
REWARD_GHOST = 200
REWARD_WIN = 500
REWARD_LOSE = -500
TIME_PENALTY = -1

MINI_FOOD_COUNT = 11


class LayoutError(ValueError):
    """Raised for malformed layout files."""


class IllegalActionError(ValueError):
    """Raised when an action is not legal in the given state."""


class Direction(str, Enum):
    NORTH = "north"
    SOUTH = "south"
    EAST = "east"
    WEST = "west"
    STOP = "stop"

    @property
    def vector(self) -> Cell:
        return _VECTORS[self]

    @property
    def reverse(self) -> "Direction":
        return _REVERSE[self]


_VECTORS = {
    Direction.NORTH: (0, -1),
    Direction.SOUTH: (0, 1),
    Direction.EAST: (1, 0),
    Direction.WEST: (-1, 0),
    Direction.STOP: (0, 0),
}
_REVERSE = {
    Direction.NORTH: Direction.SOUTH,
    Direction.SOUTH: Direction.NORTH,
    Direction.EAST: Direction.WEST,
    Direction.WEST: Direction.EAST,
    Direction.STOP: Direction.STOP,
}

# Fixed action order; also the tie-break order of every action selector
ACTIONS: Tuple[Direction, ...] = tuple(Direction)
MOVES: Tuple[Direction, ...] = ACTIONS[:-1]


class GhostColor(str, Enum):
    BLUE = "blue"
    ORANGE = "orange"

    @property
    def atom(self) -> str:
        """Name used for the ghost in norm files, e.g. `blueGhost`."""
        return f"{self.value}Ghost"


_GHOST_GLYPHS = {"B": GhostColor.BLUE, "O": GhostColor.ORANGE}


@dataclass(frozen=True)
class Layout:
    """Static maze: walls, start cells, food and capsules. Cells are (x, y), y=0 is the top row."""

    width: int
    height: int
    walls: FrozenSet[Cell]
    pacman_start: Cell
    ghost_starts: Tuple[Tuple[GhostColor, Cell], ...]
    food: Tuple[Cell, ...]
    capsules: Tuple[Cell, ...]
    name: str = ""
    _food_bits: Dict[Cell, int] = field(init=False, repr=False, compare=False)
    _capsule_bits: Dict[Cell, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_food_bits", {c: i for i, c in enumerate(self.food)})
        object.__setattr__(self, "_capsule_bits", {c: i for i, c in enumerate(self.capsules)})

    def is_wall(self, cell: Cell) -> bool:
        x, y = cell
        return not (0 <= x < self.width and 0 <= y < self.height) or cell in self.walls

    def target(self, cell: Cell, direction: Direction) -> Optional[Cell]:
        """Cell reached by moving `direction` from `cell`, or None if blocked."""
        dx, dy = direction.vector
        nxt = (cell[0] + dx, cell[1] + dy)
        return None if self.is_wall(nxt) else nxt

    def food_bit(self, cell: Cell) -> Optional[int]:
        return self._food_bits.get(cell)

    def capsule_bit(self, cell: Cell) -> Optional[int]:
        return self._capsule_bits.get(cell)

    def open_cells(self) -> List[Cell]:
        return [(x, y) for y in range(self.height) for x in range(self.width) if not self.is_wall((x, y))]


def load_layout(text: str, name: str = "") -> Layout:
    """
    Parse an ASCII layout.

    Glyphs: `%` wall, `P` Pac-Man start, `B` blue ghost, `O` orange ghost,
    `.` food, `o` capsule, space empty. Cells outside the grid count as walls.

    Args:
        text: Layout file contents
        name: Layout name (the mini layout is checked for its pinned food count)

    Returns:
        Validated Layout

    Raises:
        LayoutError: Unknown glyph, missing or duplicated Pac-Man start, empty grid
    """
    rows = text.splitlines()
    while rows and not rows[-1].strip():
        rows.pop()
    if not rows:
        raise LayoutError("layout is empty")

    width, height = max(len(r) for r in rows), len(rows)
    walls, food, capsules, ghosts = set(), [], [], []
    pacman: Optional[Cell] = None
    for y, row in enumerate(rows):
        for x, glyph in enumerate(row.ljust(width)):
            cell = (x, y)
            if glyph == "%":
                walls.add(cell)
            elif glyph == ".":
                food.append(cell)
            elif glyph == "o":
                capsules.append(cell)
            elif glyph == "P":
                if pacman is not None:
                    raise LayoutError(f"second Pac-Man start at {cell}")
                pacman = cell
            elif glyph in _GHOST_GLYPHS:
                ghosts.append((_GHOST_GLYPHS[glyph], cell))
            elif glyph != " ":
                raise LayoutError(f"unknown glyph {glyph!r} at row {y + 1}, column {x + 1}")
    if pacman is None:
        raise LayoutError("layout has no Pac-Man start (P)")

    layout = Layout(width, height, frozenset(walls), pacman, tuple(ghosts), tuple(food), tuple(capsules), name)
    if name == "mini" and len(food) != MINI_FOOD_COUNT:
        logger.warning(f"mini layout has {len(food)} food pellets, expected {MINI_FOOD_COUNT}")
    return layout


def load_layout_file(path: Union[str, Path]) -> Layout:
    """
    Load a layout file, resolving bare names against the bundled layouts directory.

    Raises:
        FileNotFoundError: If the layout file doesn't exist
    """
    path = Path(path)
    if not path.exists() and not path.suffix:
        path = LAYOUTS_DIR / f"{path.name}.lay"
    if not path.exists():
        raise FileNotFoundError(f"Layout file not found: {path}")
    return load_layout(path.read_text(encoding="utf-8"), name=path.stem)


class Outcome(str, Enum):
    ONGOING = "ongoing"
    WIN = "win"
    LOSE = "lose"


@dataclass(frozen=True)
class GhostState:
    cell: Cell
    scared_timer: int = 0
    heading: Direction = Direction.STOP
    active: bool = True

    @property
    def scared(self) -> bool:
        return self.scared_timer > 0


@dataclass(frozen=True)
class GameState:
    pacman: Cell
    ghosts: Tuple[GhostState, ...]
    food: int
    capsules: int
    score: int = 0
    step_count: int = 0
    outcome: Outcome = Outcome.ONGOING

    @property
    def terminal(self) -> bool:
        return self.outcome is not Outcome.ONGOING

    @property
    def food_left(self) -> int:
        return bin(self.food).count("1")

    def dynamics_key(self) -> tuple:
        """Everything the transition function depends on (score and clock excluded)."""
        return (self.pacman, self.ghosts, self.food, self.capsules, self.outcome)


class Event(str, Enum):
    ATE_FOOD = "ate_food"
    ATE_CAPSULE = "ate_capsule"
    ATE_GHOST = "ate_ghost"
    DIED = "died"
    WON = "won"


@dataclass(frozen=True)
class StepOutcome:
    next_state: GameState
    reward: int
    events: FrozenSet[Event]
    ghosts_eaten: Tuple[GhostColor, ...] = ()


GhostPolicy = Callable[[GameState, int, Sequence[Direction], np.random.Generator], Direction]


def random_ghost(state: GameState, index: int, legal: Sequence[Direction], rng: np.random.Generator) -> Direction:
    """Ghost that picks uniformly among its legal moves."""
    return legal[int(rng.integers(len(legal)))]


@dataclass
class _Step:
    """Mutable scratch record threaded through the two phases of a step."""

    pacman: Cell
    ghosts: List[GhostState]
    food: int
    capsules: int
    reward: int = TIME_PENALTY
    events: set = field(default_factory=set)
    eaten: List[GhostColor] = field(default_factory=list)
    outcome: Outcome = Outcome.ONGOING


class PacmanEnv:
    """Pac-Man moves first, then each ghost; collisions are checked after every mover."""

    def __init__(
        self,
        layout: Layout,
        scared_duration: int = SCARED_DURATION,
        ghost_no_reversal: bool = GHOST_NO_REVERSAL,
        ghost_respawn: bool = GHOST_RESPAWN,
        ghost_policy: Optional[GhostPolicy] = None,
    ):
        self.layout = layout
        self.scared_duration = scared_duration
        self.ghost_no_reversal = ghost_no_reversal
        self.ghost_respawn = ghost_respawn
        self.ghost_policy = ghost_policy or random_ghost

    def reset(self) -> GameState:
        layout = self.layout
        return GameState(
            pacman=layout.pacman_start,
            ghosts=tuple(GhostState(cell) for _, cell in layout.ghost_starts),
            food=(1 << len(layout.food)) - 1,
            capsules=(1 << len(layout.capsules)) - 1,
        )

    def ghost_color(self, index: int) -> GhostColor:
        return self.layout.ghost_starts[index][0]

    def legal_actions(self, state: GameState) -> List[Direction]:
        """Directions not blocked by walls, in fixed order; STOP is always legal. Empty if terminal."""
        if state.terminal:
            return []
        return [d for d in ACTIONS if d is Direction.STOP or self.layout.target(state.pacman, d) is not None]

    def ghost_moves(self, ghost: GhostState) -> List[Direction]:
        """Ghost moves: no stopping, no reversal unless it is the only way out."""
        moves = [d for d in MOVES if self.layout.target(ghost.cell, d) is not None]
        if self.ghost_no_reversal and len(moves) > 1 and ghost.heading.reverse in moves:
            moves.remove(ghost.heading.reverse)
        return moves or [Direction.STOP]

    # -- dynamics ---------------------------------------------------------------
    def _respawned(self, index: int) -> GhostState:
        start = self.layout.ghost_starts[index][1]
        return GhostState(start) if self.ghost_respawn else GhostState(start, active=False)

    def _collide(self, work: _Step) -> None:
        at_pacman = [i for i, g in enumerate(work.ghosts) if g.active and g.cell == work.pacman]
        if any(not work.ghosts[i].scared for i in at_pacman):
            work.reward += REWARD_LOSE
            work.events.add(Event.DIED)
            work.outcome = Outcome.LOSE
            return
        for i in at_pacman:
            work.reward += REWARD_GHOST
            work.events.add(Event.ATE_GHOST)
            work.eaten.append(self.ghost_color(i))
            work.ghosts[i] = self._respawned(i)

    def _pacman_phase(self, state: GameState, action: Direction) -> _Step:
        if action not in self.legal_actions(state):
            raise IllegalActionError(f"{action.value} is not legal at {state.pacman}")
        layout = self.layout
        work = _Step(layout.target(state.pacman, action), list(state.ghosts), state.food, state.capsules)

        bit = layout.food_bit(work.pacman)
        if bit is not None and work.food >> bit & 1:
            work.food &= ~(1 << bit)
            work.reward += REWARD_FOOD
            work.events.add(Event.ATE_FOOD)
        bit = layout.capsule_bit(work.pacman)
        if bit is not None and work.capsules >> bit & 1:
            work.capsules &= ~(1 << bit)
            work.events.add(Event.ATE_CAPSULE)
            work.ghosts = [replace(g, scared_timer=self.scared_duration) if g.active else g for g in work.ghosts]

        self._collide(work)
        if work.outcome is Outcome.ONGOING and work.food == 0:
            work.reward += REWARD_WIN
            work.events.add(Event.WON)
            work.outcome = Outcome.WIN
        return work

    def _ghost_phase(self, work: _Step, moves: Sequence[Optional[Direction]]) -> None:
        for i, move in enumerate(moves):
            if work.outcome is not Outcome.ONGOING:
                break
            ghost = work.ghosts[i]
            if move is None or not ghost.active:
                continue
            cell = self.layout.target(ghost.cell, move) or ghost.cell
            heading = move if self.ghost_no_reversal else Direction.STOP
            work.ghosts[i] = replace(ghost, cell=cell, heading=heading)
            self._collide(work)
        work.ghosts = [
            replace(g, scared_timer=g.scared_timer - 1) if g.active and g.scared else g
            for g in work.ghosts
        ]

    def _finish(self, state: GameState, work: _Step) -> StepOutcome:
        next_state = GameState(
            pacman=work.pacman,
            ghosts=tuple(work.ghosts),
            food=work.food,
            capsules=work.capsules,
            score=state.score + work.reward,
            step_count=state.step_count + 1,
            outcome=work.outcome,
        )
        return StepOutcome(next_state, work.reward, frozenset(work.events), tuple(work.eaten))

    def _choices(self, work: _Step) -> List[List[Optional[Direction]]]:
        return [self.ghost_moves(g) if g.active else [None] for g in work.ghosts]

    def step(self, state: GameState, action: Direction, rng: np.random.Generator) -> StepOutcome:
        """
        Advance the game by one time step.

        Args:
            state: Current (non-terminal) state
            action: Pac-Man's action, must be legal
            rng: Random stream driving the ghosts

        Returns:
            StepOutcome with the next state, the task reward and the events

        Raises:
            IllegalActionError: If the action is not legal (or the state is terminal)
        """
        work = self._pacman_phase(state, action)
        if work.outcome is Outcome.ONGOING:
            moves = [
                self.ghost_policy(state, i, legal, rng) if legal != [None] else None
                for i, legal in enumerate(self._choices(work))
            ]
            self._ghost_phase(work, moves)
        return self._finish(state, work)

    def transitions(self, state: GameState, action: Direction) -> List[Tuple[float, StepOutcome]]:
        """Exact successor distribution under uniformly random ghosts."""
        work = self._pacman_phase(state, action)
        if work.outcome is not Outcome.ONGOING:
            return [(1.0, self._finish(state, work))]
        choices = self._choices(work)
        prob = 1.0 / float(np.prod([len(c) for c in choices]))
        result = []
        for moves in itertools.product(*choices):
            branch = _Step(work.pacman, list(work.ghosts), work.food, work.capsules,
                           work.reward, set(work.events), list(work.eaten))
            self._ghost_phase(branch, moves)
            result.append((prob, self._finish(state, branch)))
        return result


# =============================================================================
# Episodes
# =============================================================================
@dataclass(frozen=True)
class Transition:
    state: GameState
    action: Direction
    outcome: StepOutcome


@dataclass
class EpisodeTrace:
    start: GameState
    steps: List[Transition] = field(default_factory=list)

    @property
    def final_state(self) -> GameState:
        return self.steps[-1].outcome.next_state if self.steps else self.start

    @property
    def score(self) -> int:
        return self.final_state.score

    @property
    def won(self) -> bool:
        return self.final_state.outcome is Outcome.WIN

    def ghosts_eaten(self) -> Counter:
        return Counter(c for t in self.steps for c in t.outcome.ghosts_eaten)


Policy = Callable[[GameState], Direction]


def run_episode(
    policy: Policy,
    env: PacmanEnv,
    rng: np.random.Generator,
    max_steps: int,
    start: Optional[GameState] = None,
) -> EpisodeTrace:
    """
    Play one episode until a terminal state or `max_steps` steps.

    Args:
        policy: Maps a state to one of its legal actions
        env: Environment
        rng: Random stream for the ghosts
        max_steps: Step cap (> 0)
        start: Optional start state (defaults to env.reset())

    Returns:
        EpisodeTrace of (state, action, outcome) steps
    """
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    state = start or env.reset()
    trace = EpisodeTrace(state)
    while not state.terminal and len(trace.steps) < max_steps:
        action = policy(state)
        outcome = env.step(state, action, rng)
        trace.steps.append(Transition(state, action, outcome))
        state = outcome.next_state

    emitted = sum(t.outcome.reward for t in trace.steps)
    if trace.score != trace.start.score + emitted:
        raise RuntimeError(f"score {trace.score} does not match emitted rewards {emitted}")
    return trace
