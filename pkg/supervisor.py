"""
Normative supervisor: translates a game state and a normative system into a
defeasible theory, answers compliance queries, and filters an agent's
preferred actions at execution time (monitor mode).
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from ddl import (
    Atom, ConclusionSet, DefeasibleTheory, Literal, Mode, ProofTag, Rule, contrapositive_closure, prove,
)
from norms import NON_CONCURRENCE_PREFIX, CompiledSystem, NormativeSystem, compile_system
from pacman import ACTIONS, Direction, GameState, PacmanEnv
from utils import setup_logger

logger = setup_logger("supervisor")


class VocabularyError(ValueError):
    """Raised when a state cannot be labelled with the supervisor's fact vocabulary."""


def action_atom(action: Direction) -> Atom:
    return Atom(f"move({action.value})")


def theory_rules(compiled: CompiledSystem) -> Tuple[Rule, ...]:
    """Contrapositive closure of the compiled norms, followed by the non-concurrence rules."""
    norm_rules = [r for r in compiled.rules if not r.label.startswith(NON_CONCURRENCE_PREFIX)]
    constraints = [r for r in compiled.rules if r.label.startswith(NON_CONCURRENCE_PREFIX)]
    return tuple(contrapositive_closure(norm_rules)) + tuple(constraints)


def state_id(state: GameState) -> str:
    """Stable short hash of the dynamics-relevant part of a state."""
    return hashlib.sha1(repr(state.dynamics_key()).encode("utf-8")).hexdigest()[:12]


class PacmanLabelling:
    """
    Maps a game state to facts: `scared(G)` for every scared ghost and
    `at(G,d)` when moving in direction d lands Pac-Man on G's cell or on a
    cell G may move to next.
    """

    def __init__(self, env: PacmanEnv):
        self.env = env
        colours = sorted({colour.atom for colour, _ in env.layout.ghost_starts})
        atoms = {f"scared({g})" for g in colours}
        atoms |= {f"at({g},{d.value})" for g in colours for d in ACTIONS}
        self.vocabulary: FrozenSet[Atom] = frozenset(Atom(a) for a in atoms)

    def __call__(self, state: GameState) -> FrozenSet[Literal]:
        layout = self.env.layout
        if len(state.ghosts) != len(layout.ghost_starts):
            raise VocabularyError(
                f"state has {len(state.ghosts)} ghosts, layout {layout.name or '?'} has {len(layout.ghost_starts)}"
            )
        facts = set()
        for index, ghost in enumerate(state.ghosts):
            if not ghost.active:
                continue
            name = self.env.ghost_color(index).atom
            if ghost.scared:
                facts.add(Literal(Atom(f"scared({name})")))
            reach = {ghost.cell}
            reach.update(layout.target(ghost.cell, m) or ghost.cell for m in self.env.ghost_moves(ghost))
            for direction in ACTIONS:
                target = state.pacman if direction is Direction.STOP else layout.target(state.pacman, direction)
                if target is not None and target in reach:
                    facts.add(Literal(Atom(f"at({name},{direction.value})")))
        return frozenset(facts)


@dataclass(frozen=True)
class ActionVerdict:
    action: Direction
    compliant: bool
    violations: int


@dataclass(frozen=True)
class ComplianceReport:
    state_id: str
    verdicts: Tuple[ActionVerdict, ...]

    def verdict(self, action: Direction) -> ActionVerdict:
        for v in self.verdicts:
            if v.action is action:
                return v
        raise KeyError(action)


class ComplianceTrace:
    """
    Transparency log of executed actions: one tab-separated line per record
    (state hash, action, compliant flag, violation count).
    """

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path else None
        self.records = 0
        self.violations = 0
        self._lock = threading.Lock()
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def record(self, state: GameState, action: Direction, compliant: bool, violations: int) -> None:
        line = f"{state_id(state)}\t{action.value}\t{str(compliant).lower()}\t{violations}\n"
        with self._lock:
            self.records += 1
            if not compliant:
                self.violations += 1
                logger.debug(f"Non-compliant action {action.value} executed ({violations} violations)")
            if self.path:
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(line)


class NormativeSupervisor:
    """Compliance oracle over one normative system and a fixed action alphabet."""

    def __init__(
        self,
        system: NormativeSystem,
        labelling: PacmanLabelling,
        actions: Sequence[Direction] = ACTIONS,
        trace: Optional[ComplianceTrace] = None,
    ):
        self.system = system
        self.labelling = labelling
        self.actions = tuple(actions)
        self.trace = trace
        self.fingerprint = system.fingerprint()

        compiled = compile_system(system, [action_atom(a) for a in self.actions])
        self._rules = theory_rules(compiled)
        self._superiority = compiled.superiority
        self._atoms = {a: Literal(action_atom(a)) for a in self.actions}

        self._cache: Dict[Tuple[FrozenSet[Literal], str], ConclusionSet] = {}
        self._lock = threading.Lock()
        self.cache_hits = 0

    @classmethod
    def for_env(cls, system: NormativeSystem, env: PacmanEnv, trace: Optional[ComplianceTrace] = None):
        return cls(system, PacmanLabelling(env), ACTIONS, trace)

    # -- theory construction ----------------------------------------------------
    def facts(self, state: GameState) -> FrozenSet[Literal]:
        facts = self.labelling(state)
        stray = [f for f in facts if f.atom not in self.labelling.vocabulary]
        if stray:
            raise VocabularyError(f"labelling produced facts outside its vocabulary: {sorted(map(str, stray))}")
        return facts

    def build_theory(self, state: GameState) -> DefeasibleTheory:
        """Labelled facts of the state plus the compiled norms and non-concurrence constraints."""
        return DefeasibleTheory(self.facts(state), self._rules, self._superiority)

    def conclusions(self, state: GameState) -> ConclusionSet:
        """Proved conclusions for the state's theory, cached by (facts, system fingerprint)."""
        facts = self.facts(state)
        key = (facts, self.fingerprint)
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None:
                self.cache_hits += 1
                return cached
        conclusions = prove(DefeasibleTheory(facts, self._rules, self._superiority))
        with self._lock:
            self._cache.setdefault(key, conclusions)
        return conclusions

    # -- queries ----------------------------------------------------------------
    def is_compliant(self, state: GameState, action: Direction) -> bool:
        """False iff +∂_O ¬move(action) is provable."""
        prohibited = self._atoms[action].complement()
        return not self.conclusions(state).holds(prohibited, Mode.O, ProofTag.PLUS_PARTIAL)

    def compliant_actions(self, state: GameState) -> List[Direction]:
        conclusions = self.conclusions(state)
        return [
            a for a in self.labelling.env.legal_actions(state)
            if not conclusions.holds(self._atoms[a].complement(), Mode.O, ProofTag.PLUS_PARTIAL)
        ]

    def violation_count(self, state: GameState, action: Direction) -> int:
        """
        Number of defeasible obligations over action literals that `action` contradicts:
        O¬action, plus O(other) for every other action.
        """
        conclusions = self.conclusions(state)
        taken = self._atoms[action]
        count = 0
        for literal in conclusions.provable(Mode.O, ProofTag.PLUS_PARTIAL):
            if literal == taken.complement():
                count += 1
            elif literal.positive and literal in self._atoms.values() and literal != taken:
                count += 1
        return count

    def monitor_filter(self, state: GameState, ranking: Sequence[Direction]) -> Direction:
        """
        Pick the agent's most preferred compliant action; if none complies,
        the most preferred among those with the fewest violations.

        Raises:
            ValueError: If the ranking is empty
        """
        if not ranking:
            raise ValueError("monitor_filter needs a non-empty ranking")
        counts = {}
        for action in ranking:
            if self.is_compliant(state, action):
                return action
            counts[action] = self.violation_count(state, action)
        fewest = min(counts.values())
        choice = next(a for a in ranking if counts[a] == fewest)
        logger.debug(f"No compliant action at {state_id(state)}; lesser evil {choice.value} ({fewest})")
        return choice

    def report(self, state: GameState) -> ComplianceReport:
        verdicts = []
        for action in self.labelling.env.legal_actions(state):
            violations = self.violation_count(state, action)
            verdicts.append(ActionVerdict(action, self.is_compliant(state, action), violations))
        return ComplianceReport(state_id(state), tuple(verdicts))

    def audit(self, state: GameState, action: Direction) -> bool:
        """Record an executed action in the trace; returns its compliance."""
        compliant = self.is_compliant(state, action)
        if self.trace is not None:
            self.trace.record(state, action, compliant, 0 if compliant else self.violation_count(state, action))
        return compliant
