"""
Defeasible deontic logic core.
Computes definite and defeasible conclusions, in constitutive (C) and deontic (O)
mode, from a defeasible theory of facts, moded rules and a superiority relation.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Callable, Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Set, Tuple

from utils import setup_logger

logger = setup_logger("ddl")

NEGATION_MARKS = ("-", "¬", "~")


class TheoryError(ValueError):
    """Raised when a defeasible theory is ill-formed."""


@dataclass(frozen=True, order=True)
class Atom:
    """Opaque propositional token; `eat(blueGhost)` is a single atom."""

    name: str

    def __post_init__(self):
        canonical = "".join(self.name.split())
        if not canonical:
            raise TheoryError("atom name must be non-empty")
        object.__setattr__(self, "name", canonical)

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, order=True)
class Literal:
    atom: Atom
    positive: bool = True

    def complement(self) -> "Literal":
        return Literal(self.atom, not self.positive)

    @classmethod
    def parse(cls, token: str) -> "Literal":
        """Parse `p`, `-p`, `¬p` or `~p` into a literal."""
        token = token.strip()
        positive = True
        while token and token[0] in NEGATION_MARKS:
            positive = not positive
            token = token[1:].lstrip()
        return cls(Atom(token), positive)

    def __str__(self) -> str:
        return self.atom.name if self.positive else f"¬{self.atom.name}"


def lit(token: str) -> Literal:
    """Shorthand for Literal.parse."""
    return Literal.parse(token)


class Mode(str, Enum):
    C = "C"
    O = "O"


class RuleKind(str, Enum):
    STRICT = "strict"
    DEFEASIBLE = "defeasible"
    DEFEATER = "defeater"


ARROWS = {RuleKind.STRICT: "->", RuleKind.DEFEASIBLE: "=>", RuleKind.DEFEATER: "~>"}


@dataclass(frozen=True)
class Antecedent:
    """Rule premise; `deontic` premises must hold as obligations, O(l)."""

    literal: Literal
    deontic: bool = False

    @property
    def mode(self) -> Mode:
        return Mode.O if self.deontic else Mode.C

    def __str__(self) -> str:
        return f"O({self.literal})" if self.deontic else str(self.literal)


@dataclass(frozen=True)
class Rule:
    label: str
    mode: Mode
    kind: RuleKind
    antecedents: Tuple[Antecedent, ...]
    consequent: Literal

    def __post_init__(self):
        object.__setattr__(self, "antecedents", tuple(self.antecedents))

    @property
    def converts(self) -> bool:
        """True if this rule may carry premises proved as obligations into an O conclusion."""
        return self.mode is Mode.C and self.kind is RuleKind.STRICT

    def __str__(self) -> str:
        body = ", ".join(str(a) for a in self.antecedents)
        return f"{self.label}: {body} {ARROWS[self.kind]}_{self.mode.value} {self.consequent}".replace(":  ", ": ")


def strict(label: str, mode: Mode, antecedents: Iterable, consequent) -> Rule:
    return _make_rule(label, mode, RuleKind.STRICT, antecedents, consequent)


def defeasible(label: str, mode: Mode, antecedents: Iterable, consequent) -> Rule:
    return _make_rule(label, mode, RuleKind.DEFEASIBLE, antecedents, consequent)


def defeater(label: str, mode: Mode, antecedents: Iterable, consequent) -> Rule:
    return _make_rule(label, mode, RuleKind.DEFEATER, antecedents, consequent)


def _make_rule(label, mode, kind, antecedents, consequent) -> Rule:
    body = []
    for item in antecedents:
        if isinstance(item, Antecedent):
            body.append(item)
        elif isinstance(item, Literal):
            body.append(Antecedent(item))
        else:
            body.append(Antecedent(Literal.parse(item)))
    head = consequent if isinstance(consequent, Literal) else Literal.parse(consequent)
    return Rule(label, mode, kind, tuple(body), head)


@dataclass(frozen=True)
class DefeasibleTheory:
    """Facts, moded rules and superiority pairs (winner, loser); validated at construction."""

    facts: FrozenSet[Literal] = frozenset()
    rules: Tuple[Rule, ...] = ()
    superiority: FrozenSet[Tuple[str, str]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "facts", frozenset(self.facts))
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "superiority", frozenset(tuple(p) for p in self.superiority))
        self._validate()

    def _validate(self) -> None:
        by_label: Dict[str, Rule] = {}
        for rule in self.rules:
            if rule.label in by_label:
                raise TheoryError(f"duplicate rule label: {rule.label}")
            by_label[rule.label] = rule

        for winner, loser in self.superiority:
            if winner == loser:
                raise TheoryError(f"superiority must be irreflexive: {winner} > {loser}")
            if winner not in by_label or loser not in by_label:
                missing = winner if winner not in by_label else loser
                raise TheoryError(f"superiority references unknown rule: {missing}")
            w, l = by_label[winner], by_label[loser]
            if w.mode is not l.mode or w.consequent != l.consequent.complement():
                raise TheoryError(
                    f"superiority {winner} > {loser} must relate complementary consequents in the same mode"
                )

    def rule(self, label: str) -> Rule:
        for rule in self.rules:
            if rule.label == label:
                return rule
        raise KeyError(label)

    def literals(self) -> FrozenSet[Literal]:
        """Every literal mentioned in the theory, closed under complement."""
        found: Set[Literal] = set(self.facts)
        for rule in self.rules:
            found.add(rule.consequent)
            found.update(a.literal for a in rule.antecedents)
        return frozenset(found | {l.complement() for l in found})


class ProofTag(str, Enum):
    PLUS_DELTA = "+Δ"
    MINUS_DELTA = "-Δ"
    PLUS_PARTIAL = "+∂"
    MINUS_PARTIAL = "-∂"


_TAG_ORDER = {tag: i for i, tag in enumerate(ProofTag)}
_UNPROVED = frozenset({ProofTag.MINUS_DELTA, ProofTag.MINUS_PARTIAL})

Key = Tuple[Literal, Mode]


@dataclass(frozen=True)
class ConclusionSet:
    entries: Mapping[Key, FrozenSet[ProofTag]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    def tags(self, literal: Literal, mode: Mode) -> FrozenSet[ProofTag]:
        return self.entries.get((literal, mode), _UNPROVED)

    def holds(self, literal: Literal, mode: Mode, tag: ProofTag) -> bool:
        return tag in self.tags(literal, mode)

    def provable(self, mode: Mode, tag: ProofTag = ProofTag.PLUS_PARTIAL) -> Iterator[Literal]:
        for (literal, m), tags in self.entries.items():
            if m is mode and tag in tags:
                yield literal

    def __eq__(self, other) -> bool:
        return isinstance(other, ConclusionSet) and dict(self.entries) == dict(other.entries)

    def __hash__(self) -> int:
        return hash(frozenset(self.entries.items()))


# =============================================================================
# Rule applicability (shared by the definite and defeasible passes)
# =============================================================================
Holds = Callable[[Literal, Mode], bool]


def _applicable(rule: Rule, mode: Mode, holds: Holds) -> bool:
    """Whether `rule` fires for a conclusion in `mode`, given a positive-status predicate."""
    if rule.mode is mode:
        return all(holds(a.literal, a.mode) for a in rule.antecedents)
    if mode is not Mode.O or not rule.converts:
        return False
    plain = [a for a in rule.antecedents if not a.deontic]
    return (
        all(holds(a.literal, Mode.O) for a in rule.antecedents if a.deontic)
        and all(holds(a.literal, Mode.C) or holds(a.literal, Mode.O) for a in plain)
        and any(holds(a.literal, Mode.O) for a in rule.antecedents)
    )


def _discarded(rule: Rule, mode: Mode, refuted: Holds) -> bool:
    """Strong negation of `_applicable`, given a negative-status predicate."""
    if rule.mode is mode:
        return any(refuted(a.literal, a.mode) for a in rule.antecedents)
    plain = [a for a in rule.antecedents if not a.deontic]
    return (
        any(refuted(a.literal, Mode.O) for a in rule.antecedents if a.deontic)
        or any(refuted(a.literal, Mode.C) and refuted(a.literal, Mode.O) for a in plain)
        or all(refuted(a.literal, Mode.O) for a in rule.antecedents)
    )


def _relevant(rule: Rule, mode: Mode) -> bool:
    return rule.mode is mode or (mode is Mode.O and rule.converts)


# =============================================================================
# Operations
# =============================================================================
def contrapositive_closure(rules: Iterable[Rule]) -> List[Rule]:
    """
    Add the contrapositives of every strict constitutive rule.

    For a strict C rule a1..an -> c with only factual premises, each premise ai
    yields a1..ai-1, ¬c, ai+1..an -> ¬ai. Defeasible rules and defeaters are
    direction-sensitive and are left alone.

    Args:
        rules: Input rules

    Returns:
        The input rules followed by the derived contrapositives
    """
    rules = list(rules)
    taken = {r.label for r in rules}
    closed = list(rules)
    for rule in rules:
        if rule.mode is not Mode.C or rule.kind is not RuleKind.STRICT:
            continue
        if any(a.deontic for a in rule.antecedents):
            continue
        for i, premise in enumerate(rule.antecedents):
            body = list(rule.antecedents)
            body[i] = Antecedent(rule.consequent.complement())
            label = f"{rule.label}#cp{i + 1}"
            while label in taken:
                label += "'"
            taken.add(label)
            closed.append(Rule(label, Mode.C, RuleKind.STRICT, tuple(body), premise.literal.complement()))
    return closed


class _Prover:
    """Agenda-driven fixpoint over the proof conditions of one theory."""

    def __init__(self, theory: DefeasibleTheory):
        self.theory = theory
        self.keys: List[Key] = sorted((l, m) for l in theory.literals() for m in Mode)
        self.beats: Dict[str, Set[str]] = defaultdict(set)
        for winner, loser in theory.superiority:
            self.beats[loser].add(winner)

        self.by_head: Dict[Literal, List[Rule]] = defaultdict(list)
        self.by_premise: Dict[Literal, List[Rule]] = defaultdict(list)
        for rule in theory.rules:
            self.by_head[rule.consequent].append(rule)
            for a in rule.antecedents:
                self.by_premise[a.literal].append(rule)

        # keys whose defeasible status can change when a premise literal is decided
        self.watchers: Dict[Literal, Set[Key]] = defaultdict(set)
        for rule in theory.rules:
            touched = set()
            for mode in Mode:
                if _relevant(rule, mode):
                    touched.add((rule.consequent, mode))
                    touched.add((rule.consequent.complement(), mode))
            for a in rule.antecedents:
                self.watchers[a.literal] |= touched

        self.definite: Set[Key] = set()
        self.partial: Dict[Key, bool] = {}

    # -- definite conclusions -------------------------------------------------
    def _prove_definite(self) -> None:
        holds = lambda l, m: (l, m) in self.definite
        agenda = deque()

        def add(key: Key):
            if key not in self.definite:
                self.definite.add(key)
                agenda.append(key[0])

        def fire(rule: Rule):
            if rule.kind is not RuleKind.STRICT:
                return
            for mode in Mode:
                if _relevant(rule, mode) and _applicable(rule, mode, holds):
                    add((rule.consequent, mode))

        for fact in self.theory.facts:
            add((fact, Mode.C))
        for rule in self.theory.rules:
            fire(rule)
        while agenda:
            for rule in self.by_premise[agenda.popleft()]:
                fire(rule)

    # -- defeasible conclusions -----------------------------------------------
    def _pos(self, literal: Literal, mode: Mode) -> bool:
        return self.partial.get((literal, mode)) is True

    def _neg(self, literal: Literal, mode: Mode) -> bool:
        return self.partial.get((literal, mode)) is False

    def _supporters(self, literal: Literal, mode: Mode) -> List[Rule]:
        return [
            r for r in self.by_head[literal]
            if r.kind is not RuleKind.DEFEATER and _relevant(r, mode)
        ]

    def _attackers(self, literal: Literal, mode: Mode) -> List[Rule]:
        return [r for r in self.by_head[literal.complement()] if _relevant(r, mode)]

    def _decide(self, key: Key) -> Optional[bool]:
        literal, mode = key
        if key in self.definite:
            return True
        if (literal.complement(), mode) in self.definite:
            return False

        supporters = self._supporters(literal, mode)
        attackers = self._attackers(literal, mode)

        def defeated(attacker: Rule) -> bool:
            return any(
                t.label in self.beats[attacker.label] and _applicable(t, mode, self._pos)
                for t in supporters
            )

        if any(_applicable(r, mode, self._pos) for r in supporters) and all(
            _discarded(s, mode, self._neg) or defeated(s) for s in attackers
        ):
            return True

        def undefeated(attacker: Rule) -> bool:
            return _applicable(attacker, mode, self._pos) and all(
                _discarded(t, mode, self._neg)
                for t in supporters if t.label in self.beats[attacker.label]
            )

        if all(_discarded(r, mode, self._neg) for r in supporters) or any(
            undefeated(s) for s in attackers
        ):
            return False
        return None

    def _prove_defeasible(self) -> None:
        agenda = deque(self.keys)
        queued = set(self.keys)
        while agenda:
            key = agenda.popleft()
            queued.discard(key)
            if key in self.partial:
                continue
            verdict = self._decide(key)
            if verdict is None:
                continue
            self.partial[key] = verdict
            for watcher in self.watchers[key[0]]:
                if watcher not in self.partial and watcher not in queued:
                    queued.add(watcher)
                    agenda.append(watcher)

    def run(self) -> ConclusionSet:
        self._prove_definite()
        self._prove_defeasible()
        entries = {}
        for key in self.keys:
            tags = {
                ProofTag.PLUS_DELTA if key in self.definite else ProofTag.MINUS_DELTA,
                # positive loops leave keys undecided: no constructive proof exists
                ProofTag.PLUS_PARTIAL if self.partial.get(key) else ProofTag.MINUS_PARTIAL,
            }
            entries[key] = frozenset(tags)
        return ConclusionSet(entries)


def prove(theory: DefeasibleTheory) -> ConclusionSet:
    """
    Compute the conclusion set of a defeasible theory.

    Definite tags come from forward chaining over facts and strict rules
    (including C-to-O conversion); defeasible tags from a three-valued fixpoint
    of the +∂ / -∂ conditions with team defeat and ambiguity blocking.

    Args:
        theory: A validated defeasible theory

    Returns:
        ConclusionSet with exactly one Δ and one ∂ tag per (literal, mode)
    """
    if not isinstance(theory, DefeasibleTheory):
        raise TheoryError(f"expected a DefeasibleTheory, got {type(theory).__name__}")
    conclusions = _Prover(theory).run()
    logger.debug(f"Proved theory with {len(theory.rules)} rules, {len(theory.facts)} facts")
    return conclusions


def query(conclusions: ConclusionSet, literal: Literal, mode: Mode, tag: ProofTag) -> bool:
    """True iff `tag` was recorded for (literal, mode); unmentioned literals are unproved."""
    return conclusions.holds(literal, mode, tag)


# =============================================================================
# Debug dumps
# =============================================================================
def _literal_sort_key(literal: Literal):
    return (literal.atom.name, not literal.positive)


def dump_conclusions(conclusions: ConclusionSet, positive_only: bool = False) -> str:
    """Deterministic line-ordered dump, one conclusion per line (e.g. `+∂_O ¬move(north)`)."""
    lines = []
    for (literal, mode) in sorted(conclusions.entries, key=lambda k: (k[1].value, _literal_sort_key(k[0]))):
        for tag in sorted(conclusions.entries[(literal, mode)], key=_TAG_ORDER.get):
            if positive_only and tag.value.startswith("-"):
                continue
            lines.append(f"{tag.value}_{mode.value} {literal}")
    return "\n".join(lines)


def dump_theory(theory: DefeasibleTheory) -> str:
    """Deterministic text form of a theory: facts, rules, then superiority pairs."""
    lines = [f"fact {f}" for f in sorted(theory.facts, key=_literal_sort_key)]
    lines += [str(rule) for rule in theory.rules]
    lines += [f"{w} > {l}" for w, l in sorted(theory.superiority)]
    return "\n".join(lines)
