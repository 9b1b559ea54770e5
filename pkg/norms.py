"""
Norm language: parse human-readable norm files into a NormativeSystem and
compile a system plus an action alphabet into defeasible deontic rules.

File format (UTF-8, one statement per line):

    # comment
    benev: O(benevolent | true)
    noPerson: C(eat(person), -benevolent)
    eatNorth: C(move(north), eat(blueGhost) | at(blueGhost,north), scared(blueGhost))
    permit > forbid
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from ddl import Antecedent, Atom, Literal, Mode, Rule, RuleKind
from utils import setup_logger

logger = setup_logger("norms")

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
NON_CONCURRENCE_PREFIX = "nc:"
# Condition list that always holds; not usable as an atom
TRUE = "true"


class ParseError(ValueError):
    """Syntax or resolution error in a norm file, with 1-based line/column."""

    def __init__(self, message: str, line: int = 0, column: int = 0, source: Optional[str] = None):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        where = f"{source}:" if source else ""
        super().__init__(f"{where}line {line}, column {column}: {message}")


class CompileError(ValueError):
    """Raised when a normative system cannot be compiled (e.g. empty action alphabet)."""


class NormKind(str, Enum):
    OBLIGATION = "O"
    PROHIBITION = "F"
    PERMISSION = "P"


@dataclass(frozen=True)
class RegulativeNorm:
    label: str
    kind: NormKind
    target: Literal
    conditions: Tuple[Literal, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))

    @property
    def head(self) -> Literal:
        """Consequent of the compiled rule."""
        return self.target.complement() if self.kind is NormKind.PROHIBITION else self.target


@dataclass(frozen=True)
class ConstitutiveNorm:
    """`source` counts as `target` in the context `conditions`."""

    label: str
    source: Literal
    target: Literal
    conditions: Tuple[Literal, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if self.source == self.target:
            raise ValueError(f"constitutive norm {self.label}: source and target must differ")

    @property
    def head(self) -> Literal:
        return self.target


Norm = Union[RegulativeNorm, ConstitutiveNorm]


@dataclass(frozen=True)
class NormativeSystem:
    """Constitutive norms, regulative norms and priorities (winner, loser)."""

    constitutive: Tuple[ConstitutiveNorm, ...] = ()
    regulative: Tuple[RegulativeNorm, ...] = ()
    priorities: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constitutive", tuple(self.constitutive))
        object.__setattr__(self, "regulative", tuple(self.regulative))
        object.__setattr__(self, "priorities", tuple(tuple(p) for p in self.priorities))

    def norms(self) -> Dict[str, Norm]:
        return {n.label: n for n in (*self.constitutive, *self.regulative)}

    def validate(self) -> None:
        """Check label uniqueness and that every priority relates two conflicting norms."""
        seen = set()
        for norm in (*self.constitutive, *self.regulative):
            if any(l.atom.name == TRUE for l in _literals(norm)):
                raise ValueError(f"norm {norm.label}: '{TRUE}' is not an atom")
            if norm.label in seen:
                raise ValueError(f"duplicate label: {norm.label}")
            seen.add(norm.label)
        table = self.norms()
        for winner, loser in self.priorities:
            for label in (winner, loser):
                if label not in table:
                    raise ValueError(f"unknown label in priority: {label}")
            if not _conflicting(table[winner], table[loser]):
                raise ValueError(f"priority {winner} > {loser} relates norms that do not conflict")

    def fingerprint(self) -> str:
        return hashlib.sha256(serialize(self).encode("utf-8")).hexdigest()[:16]

    def __len__(self) -> int:
        return len(self.constitutive) + len(self.regulative)


def _mode_of(norm: Norm) -> Mode:
    return Mode.C if isinstance(norm, ConstitutiveNorm) else Mode.O


def _conflicting(a: Norm, b: Norm) -> bool:
    return a.label != b.label and _mode_of(a) is _mode_of(b) and a.head == b.head.complement()


def _literals(norm: Norm) -> Tuple[Literal, ...]:
    if isinstance(norm, ConstitutiveNorm):
        return (norm.source, norm.target, *norm.conditions)
    return (norm.target, *norm.conditions)


# =============================================================================
# Parsing
# =============================================================================
class _Cursor:
    """Character cursor over a single line."""

    def __init__(self, text: str, line: int, source: Optional[str]):
        self.text = text
        self.pos = 0
        self.line = line
        self.source = source

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.line, self.pos + 1, self.source)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def at_end(self) -> bool:
        return self.peek() == ""

    def expect(self, char: str) -> None:
        if self.peek() != char:
            found = self.peek() or "end of line"
            raise self.error(f"expected '{char}', found '{found}'")
        self.pos += 1

    def ident(self, what: str) -> str:
        self.skip_ws()
        match = _IDENT.match(self.text, self.pos)
        if not match:
            raise self.error(f"expected {what}")
        self.pos = match.end()
        return match.group(0)


def _parse_atom(cur: _Cursor) -> Atom:
    cur.skip_ws()
    start = cur.pos
    name = cur.ident("atom")
    if cur.peek() == "(":
        cur.expect("(")
        args = [cur.ident("atom argument")]
        while cur.peek() == ",":
            cur.expect(",")
            args.append(cur.ident("atom argument"))
        cur.expect(")")
        name = f"{name}({','.join(args)})"
    elif name == TRUE:
        cur.pos = start
        raise cur.error(f"'{TRUE}' is reserved for the empty condition list")
    return Atom(name)


def _parse_literal(cur: _Cursor) -> Literal:
    positive = True
    if cur.peek() == "-":
        cur.pos += 1
        positive = False
    return Literal(_parse_atom(cur), positive)


def _parse_conditions(cur: _Cursor) -> Tuple[Literal, ...]:
    mark = cur.pos
    cur.skip_ws()
    match = _IDENT.match(cur.text, cur.pos)
    if match and match.group(0) == TRUE:
        cur.pos = match.end()
        if cur.peek() == ")":
            return ()
    cur.pos = mark
    conditions = [_parse_literal(cur)]
    while cur.peek() == ",":
        cur.expect(",")
        conditions.append(_parse_literal(cur))
    return tuple(conditions)


def _parse_head(cur: _Cursor, label: str) -> Norm:
    cur.skip_ws()
    start = cur.pos
    keyword = cur.ident("norm kind O, F, P or C")
    if keyword not in ("O", "F", "P", "C"):
        cur.pos = start
        raise cur.error(f"unknown norm kind '{keyword}' (expected O, F, P or C)")
    cur.expect("(")
    if keyword == "C":
        source = _parse_literal(cur)
        cur.expect(",")
        target = _parse_literal(cur)
        conditions: Tuple[Literal, ...] = ()
        if cur.peek() == "|":
            cur.expect("|")
            conditions = _parse_conditions(cur)
        cur.expect(")")
        if source == target:
            raise cur.error(f"constitutive norm {label}: source and target must differ")
        return ConstitutiveNorm(label, source, target, conditions)
    target = _parse_literal(cur)
    cur.expect("|")
    conditions = _parse_conditions(cur)
    cur.expect(")")
    return RegulativeNorm(label, NormKind(keyword), target, conditions)


def parse(text: str, source: Optional[str] = None) -> NormativeSystem:
    """
    Parse norm-file text into a NormativeSystem.

    Args:
        text: Norm file contents
        source: Optional file name used in error messages

    Returns:
        Parsed and validated NormativeSystem

    Raises:
        ParseError: On syntax errors, duplicate labels, unknown or non-conflicting priority labels
    """
    constitutive: List[ConstitutiveNorm] = []
    regulative: List[RegulativeNorm] = []
    priorities: List[Tuple[str, str, int, int]] = []
    labels: Dict[str, Norm] = {}

    for line_no, raw in enumerate(text.splitlines(), 1):
        cur = _Cursor(raw.rstrip("\r\n"), line_no, source)
        if cur.at_end() or cur.peek() == "#":
            continue
        label_pos = cur.pos
        label = cur.ident("label")
        if cur.peek() == ":":
            cur.expect(":")
            norm = _parse_head(cur, label)
            if label in labels:
                cur.pos = label_pos
                raise cur.error(f"duplicate label: {label}")
            labels[label] = norm
            (constitutive if isinstance(norm, ConstitutiveNorm) else regulative).append(norm)
        elif cur.peek() == ">":
            cur.expect(">")
            loser = cur.ident("label")
            priorities.append((label, loser, line_no, label_pos + 1))
        else:
            raise cur.error("expected ':' or '>' after label")
        if not cur.at_end():
            raise cur.error("unexpected trailing text")

    for winner, loser, line_no, column in priorities:
        for name in (winner, loser):
            if name not in labels:
                raise ParseError(f"unknown label in priority line: {name}", line_no, column, source)
        if not _conflicting(labels[winner], labels[loser]):
            raise ParseError(
                f"priority {winner} > {loser} relates norms that do not conflict", line_no, column, source
            )

    system = NormativeSystem(
        tuple(constitutive), tuple(regulative), tuple((w, l) for w, l, _, _ in priorities)
    )
    logger.debug(
        f"Parsed {len(constitutive)} constitutive, {len(regulative)} regulative norms, "
        f"{len(priorities)} priorities"
    )
    return system


def load_norm_file(path: Union[str, Path]) -> NormativeSystem:
    """
    Read and parse a norm file.

    Raises:
        FileNotFoundError: If the file doesn't exist
        ParseError: If the file is not valid norm syntax
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Norm file not found: {path}")
    system = parse(path.read_text(encoding="utf-8"), source=path.name)
    logger.info(f"Loaded {len(system)} norms from {path.name}")
    return system


# =============================================================================
# Serialization
# =============================================================================
def format_literal(literal: Literal) -> str:
    return literal.atom.name if literal.positive else f"-{literal.atom.name}"


def _format_conditions(conditions: Sequence[Literal]) -> str:
    return ", ".join(format_literal(c) for c in conditions) if conditions else TRUE


def format_norm(norm: Norm) -> str:
    if isinstance(norm, ConstitutiveNorm):
        context = f" | {_format_conditions(norm.conditions)}" if norm.conditions else ""
        return f"{norm.label}: C({format_literal(norm.source)}, {format_literal(norm.target)}{context})"
    return f"{norm.label}: {norm.kind.value}({format_literal(norm.target)} | {_format_conditions(norm.conditions)})"


def serialize(system: NormativeSystem) -> str:
    """Render a system in norm-file syntax; parse(serialize(s)) == s."""
    lines = [format_norm(n) for n in system.constitutive]
    lines += [format_norm(n) for n in system.regulative]
    lines += [f"{w} > {l}" for w, l in system.priorities]
    return "\n".join(lines) + ("\n" if lines else "")


# =============================================================================
# Compilation
# =============================================================================
@dataclass(frozen=True)
class CompiledSystem:
    rules: Tuple[Rule, ...]
    superiority: FrozenSet[Tuple[str, str]] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.rules) + len(self.superiority)


def non_concurrence_label(action: Atom, other: Atom) -> str:
    return f"{NON_CONCURRENCE_PREFIX}{action.name}:{other.name}"


def compile_system(system: NormativeSystem, actions: Sequence[Atom]) -> CompiledSystem:
    """
    Compile a normative system and an action alphabet into DDL rules.

    O(p|q) becomes q =>_O p, F(p|q) becomes q =>_O ¬p, P(p|q) becomes the defeater
    q ~>_O p and C(x,y|q) becomes the strict rule x, q ->_C y. Each ordered pair of
    distinct actions (a, a') adds the non-concurrence constraint a ->_C ¬a'.
    Permissions that appear in no explicit priority are made superior to every
    compiled obligation/prohibition concluding the complement of their target.

    Args:
        system: Valid normative system
        actions: Action alphabet (atoms)

    Returns:
        CompiledSystem of rules and superiority pairs

    Raises:
        CompileError: If the action alphabet is empty or the system is invalid
    """
    if not actions:
        raise CompileError("action alphabet is empty")
    try:
        system.validate()
    except ValueError as e:
        raise CompileError(str(e)) from e

    rules: List[Rule] = []
    for norm in system.constitutive:
        body = (Antecedent(norm.source),) + tuple(Antecedent(c) for c in norm.conditions)
        rules.append(Rule(norm.label, Mode.C, RuleKind.STRICT, body, norm.target))
    for norm in system.regulative:
        kind = RuleKind.DEFEATER if norm.kind is NormKind.PERMISSION else RuleKind.DEFEASIBLE
        body = tuple(Antecedent(c) for c in norm.conditions)
        rules.append(Rule(norm.label, Mode.O, kind, body, norm.head))

    actions = list(dict.fromkeys(actions))
    for action in actions:
        for other in actions:
            if other != action:
                rules.append(Rule(
                    non_concurrence_label(action, other), Mode.C, RuleKind.STRICT,
                    (Antecedent(Literal(action)),), Literal(other, False),
                ))

    superiority = set(system.priorities)
    ranked = {label for pair in system.priorities for label in pair}
    for permission in system.regulative:
        if permission.kind is not NormKind.PERMISSION or permission.label in ranked:
            continue
        for norm in system.regulative:
            if norm.kind is not NormKind.PERMISSION and norm.head == permission.head.complement():
                superiority.add((permission.label, norm.label))

    return CompiledSystem(tuple(rules), frozenset(superiority))


compile = compile_system
