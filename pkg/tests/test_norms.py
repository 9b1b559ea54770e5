import numpy as np
import pytest

from ddl import Atom, Literal, Mode, RuleKind, lit
from norms import (
    CompileError, ConstitutiveNorm, NormKind, NormativeSystem, ParseError, RegulativeNorm, compile_system,
    load_norm_file, parse, serialize,
)
from pacman import ACTIONS
from supervisor import action_atom

MOVES = [action_atom(a) for a in ACTIONS]


# =============================================================================
# Parsing
# =============================================================================
def test_parse_obligation():
    system = parse("benev: O(benevolent | true)")
    (norm,) = system.regulative
    assert norm.kind is NormKind.OBLIGATION
    assert norm.target == lit("benevolent")
    assert norm.conditions == ()


def test_parse_empty_file():
    assert parse("") == NormativeSystem()
    assert parse("# only a comment\n\n") == NormativeSystem()


def test_parse_permission_and_constitutive():
    system = parse(
        "p1: P(eat(blueGhost) | true)\n"
        "eatN: C(move(north), eat(blueGhost) | at(blueGhost, north), scared(blueGhost))\n"
    )
    assert system.regulative[0].kind is NormKind.PERMISSION
    counts_as = system.constitutive[0]
    assert counts_as.source == lit("move(north)")
    assert counts_as.target == lit("eat(blueGhost)")
    assert counts_as.conditions == (lit("at(blueGhost,north)"), lit("scared(blueGhost)"))


def test_parse_prohibition_with_negated_condition():
    (norm,) = parse("f: F(eat(blueGhost) | -hungry, night)").regulative
    assert norm.kind is NormKind.PROHIBITION
    assert norm.head == lit("-eat(blueGhost)")
    assert norm.conditions == (lit("-hungry"), lit("night"))


def test_bundled_files_parse(benevolent, benevolent_permit, vegan):
    assert len(benevolent) == 12
    assert len(benevolent_permit) == 13
    assert len(vegan) == 10


@pytest.mark.parametrize("text, line, column, message", [
    ("benev: X(benevolent | true)", 1, 8, "unknown norm kind"),
    ("# header\n\nbenev: O(benevolent | true", 3, 27, r"expected '\)'"),
    ("a: O(p | true)\na: F(p | true)", 2, 1, "duplicate label"),
    ("a: O(p | true) extra", 1, 16, "trailing text"),
    ("a O(p | true)", 1, 3, "expected ':' or '>'"),
    ("a: C(p, p)", 1, 11, "source and target must differ"),
    ("a: O(true | q)", 1, 6, "reserved"),
    ("a: O(p | q, true)", 1, 13, "reserved"),
    ("a: C(-true, p | q)", 1, 7, "reserved"),
])
def test_parse_errors_report_position(text, line, column, message):
    with pytest.raises(ParseError, match=message) as excinfo:
        parse(text)
    assert (excinfo.value.line, excinfo.value.column) == (line, column)


def test_priority_errors():
    with pytest.raises(ParseError, match="unknown label in priority line: zz"):
        parse("a: O(p | true)\na > zz")
    with pytest.raises(ParseError, match="do not conflict") as excinfo:
        parse("a: O(p | true)\nb: O(q | true)\na > b")
    assert excinfo.value.line == 3


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_norm_file(tmp_path / "missing.norms")


def test_error_message_names_the_file(tmp_path):
    path = tmp_path / "broken.norms"
    path.write_text("benev O(benevolent | true)\n", encoding="utf-8")
    with pytest.raises(ParseError, match=r"broken.norms:line 1"):
        load_norm_file(path)


# =============================================================================
# Serialization
# =============================================================================
def test_bundled_files_round_trip(benevolent, benevolent_permit, vegan):
    for system in (benevolent, benevolent_permit, vegan):
        assert parse(serialize(system)) == system


def test_serialize_empty_system():
    assert serialize(NormativeSystem()) == ""


def test_priorities_keep_their_order():
    text = "a: O(p | x)\nb: F(p | y)\nc: O(p | z)\nb > a\nb > c\n"
    system = parse(text)
    assert system.priorities == (("b", "a"), ("b", "c"))
    assert serialize(system) == text


NAMES = ["p", "q", "benevolent", "eat", "move", "scared", "at"]
ARGS = ["blueGhost", "orangeGhost", "north", "person"]


def _random_literal(rng):
    name = NAMES[int(rng.integers(len(NAMES)))]
    arity = int(rng.integers(0, 3))
    if arity:
        name += "(" + ",".join(ARGS[int(rng.integers(len(ARGS)))] for _ in range(arity)) + ")"
    return Literal(Atom(name), bool(rng.integers(2)))


def random_system(rng):
    constitutive, regulative = [], []
    for i in range(int(rng.integers(0, 5))):
        source = _random_literal(rng)
        target = _random_literal(rng)
        if source == target:
            target = target.complement()
        conditions = tuple(_random_literal(rng) for _ in range(int(rng.integers(0, 3))))
        constitutive.append(ConstitutiveNorm(f"c{i}", source, target, conditions))
    for i in range(int(rng.integers(0, 5))):
        kind = list(NormKind)[int(rng.integers(3))]
        conditions = tuple(_random_literal(rng) for _ in range(int(rng.integers(0, 3))))
        regulative.append(RegulativeNorm(f"r{i}", kind, _random_literal(rng), conditions))

    norms = [*constitutive, *regulative]
    conflicts = [
        (a.label, b.label) for a in norms for b in norms
        if a.label != b.label and type(a) is type(b) and a.head == b.head.complement()
    ]
    priorities = []
    for pair in conflicts:
        if rng.random() < 0.5 and (pair[1], pair[0]) not in priorities:
            priorities.append(pair)
    return NormativeSystem(tuple(constitutive), tuple(regulative), tuple(priorities))


def test_generated_systems_round_trip():
    rng = np.random.default_rng(1234)
    for _ in range(1000):
        system = random_system(rng)
        assert parse(serialize(system)) == system


# =============================================================================
# Compilation
# =============================================================================
def test_compile_norm_forms():
    system = parse(
        "ob: O(p | q)\n"
        "fb: F(p | q1)\n"
        "pm: P(s | q2)\n"
        "ca: C(x, y | q)\n"
    )
    rules = {r.label: r for r in compile_system(system, [Atom("a")]).rules}
    assert (rules["ob"].mode, rules["ob"].kind, rules["ob"].consequent) == (Mode.O, RuleKind.DEFEASIBLE, lit("p"))
    assert rules["fb"].consequent == lit("-p")
    assert (rules["pm"].kind, rules["pm"].consequent) == (RuleKind.DEFEATER, lit("s"))
    assert (rules["ca"].mode, rules["ca"].kind) == (Mode.C, RuleKind.STRICT)
    assert [a.literal for a in rules["ca"].antecedents] == [lit("x"), lit("q")]


def test_benevolent_core_rule_count():
    system = parse(
        "benev: O(benevolent | true)\n"
        "noPerson: C(eat(person), -benevolent)\n"
        "bluePerson: C(eat(blueGhost), eat(person))\n"
    )
    compiled = compile_system(system, MOVES)
    assert len(compiled.rules) == 3 + 20
    nc = [r for r in compiled.rules if r.label.startswith("nc:")]
    assert len(nc) == 20
    assert all(r.kind is RuleKind.STRICT and r.mode is Mode.C for r in nc)
    assert any(r.label == "nc:move(north):move(east)" and r.consequent == lit("-move(east)") for r in nc)


def test_bundled_rule_counts(benevolent, benevolent_permit, vegan):
    assert len(compile_system(benevolent, MOVES).rules) == 32
    assert len(compile_system(benevolent_permit, MOVES).rules) == 33
    assert len(compile_system(vegan, MOVES).rules) == 30
    assert compile_system(benevolent_permit, MOVES).superiority == frozenset()


def test_single_action_has_no_non_concurrence():
    compiled = compile_system(parse("a: O(p | true)"), [Atom("go")])
    assert len(compiled.rules) == 1


def test_duplicate_actions_are_ignored():
    compiled = compile_system(NormativeSystem(), [Atom("a"), Atom("b"), Atom("a")])
    assert len(compiled.rules) == 2


def test_permission_is_made_superior_to_prohibition():
    compiled = compile_system(parse("forbid: F(p | q1)\npermit: P(p | q2)"), MOVES)
    assert compiled.superiority == {("permit", "forbid")}


def test_explicit_priority_overrides_automatic_one():
    compiled = compile_system(parse("forbid: F(p | q1)\npermit: P(p | q2)\nforbid > permit"), MOVES)
    assert compiled.superiority == {("forbid", "permit")}


def test_empty_alphabet_is_rejected():
    with pytest.raises(CompileError, match="empty"):
        compile_system(parse("a: O(p | true)"), [])


def test_invalid_system_is_rejected():
    norm = RegulativeNorm("a", NormKind.OBLIGATION, lit("p"))
    with pytest.raises(CompileError, match="duplicate"):
        compile_system(NormativeSystem(regulative=(norm, norm)), MOVES)


def test_rule_count_formula():
    rng = np.random.default_rng(99)
    actions = [Atom(f"act{i}") for i in range(4)]
    for _ in range(200):
        system = random_system(rng)
        compiled = compile_system(system, actions)
        assert len(compiled.rules) == len(system) + 4 * 3
        assert compile_system(system, actions) == compiled


def test_true_is_not_an_atom():
    assert parse("a: O(true(x) | true)").regulative[0].target == lit("true(x)")
    norm = RegulativeNorm("a", NormKind.OBLIGATION, lit("p"), (lit("true"),))
    with pytest.raises(CompileError, match="not an atom"):
        compile_system(NormativeSystem(regulative=(norm,)), MOVES)
