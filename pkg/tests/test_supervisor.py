from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

from ddl import Mode, ProofTag, lit, prove
from norms import NormativeSystem, load_norm_file
from pacman import Direction, GhostState, PacmanEnv, load_layout, run_episode
from planning import enumerate_mdp
from supervisor import ComplianceTrace, NormativeSupervisor, PacmanLabelling, VocabularyError, state_id

N, S, E, W, STOP = Direction.NORTH, Direction.SOUTH, Direction.EAST, Direction.WEST, Direction.STOP


@pytest.fixture
def scared_north(mini_env):
    """Pac-Man directly below a scared blue ghost."""
    return replace(mini_env.reset(), pacman=(4, 1), ghosts=(GhostState((4, 0), scared_timer=5),))


def test_labelling_of_scared_ghost(mini_env, scared_north):
    facts = PacmanLabelling(mini_env)(scared_north)
    assert facts == {lit("scared(blueGhost)"), lit("at(blueGhost,north)"), lit("at(blueGhost,stop)")}


def test_labelling_includes_ghost_next_cells(mini_env):
    state = replace(mini_env.reset(), pacman=(2, 1), ghosts=(GhostState((4, 1)),))
    facts = PacmanLabelling(mini_env)(state)
    # the ghost can step west onto (3, 1), which Pac-Man reaches by moving east
    assert facts == {lit("at(blueGhost,east)")}


def test_labelling_skips_inactive_ghosts(mini_env, scared_north):
    state = replace(scared_north, ghosts=(GhostState((4, 0), scared_timer=5, active=False),))
    assert PacmanLabelling(mini_env)(state) == frozenset()


def test_labelling_rejects_foreign_states(mini_env, scared_north):
    with pytest.raises(VocabularyError):
        PacmanLabelling(mini_env)(replace(scared_north, ghosts=()))


def test_benevolent_forbids_eating_the_scared_ghost(mini_supervisor, scared_north):
    conclusions = mini_supervisor.conclusions(scared_north)
    assert conclusions.holds(lit("-move(north)"), Mode.O, ProofTag.PLUS_PARTIAL)
    assert conclusions.holds(lit("-eat(blueGhost)"), Mode.O, ProofTag.PLUS_PARTIAL)
    assert not mini_supervisor.is_compliant(scared_north, N)
    assert mini_supervisor.compliant_actions(scared_north) == [S, W, STOP]
    assert mini_supervisor.violation_count(scared_north, N) == 1
    assert mini_supervisor.violation_count(scared_north, S) == 0


def test_unscared_ghost_imposes_nothing(mini_supervisor, scared_north):
    state = replace(scared_north, ghosts=(GhostState((4, 0)),))
    assert mini_supervisor.compliant_actions(state) == [N, S, W, STOP]


def test_permission_lifts_the_prohibition(mini_env, benevolent_permit, scared_north):
    supervisor = NormativeSupervisor.for_env(benevolent_permit, mini_env)
    assert supervisor.is_compliant(scared_north, N)
    assert not supervisor.conclusions(scared_north).holds(lit("-eat(blueGhost)"), Mode.O, ProofTag.PLUS_PARTIAL)


def test_empty_system_allows_everything(mini_env, scared_north):
    supervisor = NormativeSupervisor.for_env(NormativeSystem(), mini_env)
    assert supervisor.compliant_actions(scared_north) == mini_env.legal_actions(scared_north)
    assert all(supervisor.violation_count(scared_north, a) == 0 for a in mini_env.legal_actions(scared_north))


def test_accidental_capsule_eat_is_not_flagged(mini_supervisor, mini_env):
    state = replace(mini_env.reset(), pacman=(0, 1), ghosts=(GhostState((1, 2)),))
    assert mini_supervisor.is_compliant(state, S)


def _reachable_states(env, episodes, seed):
    rng = np.random.default_rng(seed)
    states = []
    for _ in range(episodes):
        def policy(s):
            legal = env.legal_actions(s)
            return legal[int(rng.integers(len(legal)))]

        trace = run_episode(policy, env, rng, max_steps=60)
        states.extend(t.state for t in trace.steps)
    return states


def _predicted_compliant(env, state, facts, permitted):
    """Moves that step onto a scared blue ghost are the only forbidden ones, unless eating it is permitted."""
    legal = env.legal_actions(state)
    if permitted:
        return legal
    scared = lit("scared(blueGhost)") in facts
    return [a for a in legal if a is STOP or not (scared and lit(f"at(blueGhost,{a.value})") in facts)]


def _sweep(env, system, permitted):
    supervisor = NormativeSupervisor.for_env(system, env)
    labelling = PacmanLabelling(env)
    mdp = enumerate_mdp(env, max_states=3_000_000)
    checked = 0
    for state in mdp.states:
        if state.terminal:
            continue
        expected = _predicted_compliant(env, state, labelling(state), permitted)
        assert supervisor.compliant_actions(state) == expected, state
        checked += 1
    assert checked > 0


@pytest.mark.parametrize("norms, permitted", [("benevolent", False), ("benevolent_permit", True)])
def test_every_reachable_tiny_state_matches_adjacency(request, tiny_layout, norms, permitted):
    env = PacmanEnv(tiny_layout, scared_duration=4, ghost_no_reversal=True, ghost_respawn=True)
    _sweep(env, request.getfixturevalue(norms), permitted)


@pytest.mark.slow
@pytest.mark.parametrize("norms, permitted", [("benevolent", False), ("benevolent_permit", True)])
def test_every_reachable_mini_state_matches_adjacency(request, mini_layout, norms, permitted):
    env = PacmanEnv(mini_layout, scared_duration=2, ghost_no_reversal=False, ghost_respawn=True)
    _sweep(env, request.getfixturevalue(norms), permitted)


def test_vegan_and_benevolent_agree(maze_layout, benevolent, vegan):
    env = PacmanEnv(maze_layout)
    kind = NormativeSupervisor.for_env(benevolent, env)
    strict_diet = NormativeSupervisor.for_env(vegan, env)
    for state in _reachable_states(env, 10, seed=8):
        assert kind.compliant_actions(state) == strict_diet.compliant_actions(state)


def test_monitor_filter_prefers_highest_ranked_compliant(mini_supervisor, scared_north):
    assert mini_supervisor.monitor_filter(scared_north, [N, W, S]) == W
    assert mini_supervisor.monitor_filter(scared_north, [STOP, N]) == STOP


def test_monitor_filter_falls_back_to_fewest_violations(mini_supervisor, scared_north, monkeypatch):
    assert mini_supervisor.monitor_filter(scared_north, [N]) == N

    counts = {N: 2, E: 1}
    monkeypatch.setattr(mini_supervisor, "is_compliant", lambda state, action: False)
    monkeypatch.setattr(mini_supervisor, "violation_count", lambda state, action: counts[action])
    assert mini_supervisor.monitor_filter(scared_north, [N, E]) == E

    counts.update({N: 1})
    assert mini_supervisor.monitor_filter(scared_north, [N, E]) == N


def test_monitor_filter_rejects_empty_ranking(mini_supervisor, scared_north):
    with pytest.raises(ValueError):
        mini_supervisor.monitor_filter(scared_north, [])


def test_conclusions_are_cached(mini_supervisor, scared_north):
    first = mini_supervisor.conclusions(scared_north)
    again = mini_supervisor.conclusions(replace(scared_north, score=120, step_count=7))
    assert again is first
    assert mini_supervisor.cache_hits == 1


def test_concurrent_queries_match_sequential(mini_env, benevolent):
    states = _reachable_states(mini_env, 10, seed=21)
    sequential = [NormativeSupervisor.for_env(benevolent, mini_env).compliant_actions(s) for s in states]
    shared = NormativeSupervisor.for_env(benevolent, mini_env)
    with ThreadPoolExecutor(max_workers=4) as executor:
        parallel = list(executor.map(shared.compliant_actions, states))
    assert parallel == sequential


def test_report_lists_every_legal_action(mini_supervisor, scared_north):
    report = mini_supervisor.report(scared_north)
    assert report.state_id == state_id(scared_north)
    assert [v.action for v in report.verdicts] == [N, S, W, STOP]
    assert not report.verdict(N).compliant
    assert report.verdict(N).violations == 1
    with pytest.raises(KeyError):
        report.verdict(E)


def test_state_id_ignores_score_and_clock(scared_north):
    assert state_id(scared_north) == state_id(replace(scared_north, score=-40, step_count=40))
    assert len(state_id(scared_north)) == 12


def test_trace_records_executed_actions(tmp_path, mini_env, benevolent, scared_north):
    path = tmp_path / "run" / "supervisor.trace"
    supervisor = NormativeSupervisor.for_env(benevolent, mini_env, ComplianceTrace(path))
    assert not supervisor.audit(scared_north, N)
    assert supervisor.audit(scared_north, STOP)

    lines = path.read_text(encoding="utf-8").splitlines()
    sid = state_id(scared_north)
    assert lines == [f"{sid}\tnorth\tfalse\t1", f"{sid}\tstop\ttrue\t0"]
    assert (supervisor.trace.records, supervisor.trace.violations) == (2, 1)


def test_two_ghost_labelling(maze_layout):
    env = PacmanEnv(maze_layout)
    labelling = PacmanLabelling(env)
    assert {a.name for a in labelling.vocabulary} >= {"scared(orangeGhost)", "at(orangeGhost,west)"}
    assert len(labelling.vocabulary) == 2 * (1 + 5)


def test_stop_is_in_vocabulary_but_never_prohibited(benevolent):
    env = PacmanEnv(load_layout("PB"), ghost_no_reversal=True)
    supervisor = NormativeSupervisor.for_env(benevolent, env)
    state = replace(env.reset(), ghosts=(GhostState((1, 0), scared_timer=3),))
    facts = supervisor.facts(state)
    assert lit("at(blueGhost,stop)") in facts and lit("at(blueGhost,east)") in facts
    assert supervisor.compliant_actions(state) == [STOP]


def test_build_theory_carries_facts_and_norms(mini_supervisor, scared_north):
    theory = mini_supervisor.build_theory(scared_north)
    assert theory.facts == mini_supervisor.facts(scared_north)
    labels = {r.label for r in theory.rules}
    assert {"benev", "noPerson", "eatBlueNorth", "nc:move(north):move(south)"} <= labels
    assert any(label.startswith("noPerson#cp") for label in labels)
    assert prove(theory) == mini_supervisor.conclusions(scared_north)


def _supervisor_from_file(tmp_path, text, env):
    path = tmp_path / "custom.norms"
    path.write_text(text, encoding="utf-8")
    return NormativeSupervisor.for_env(load_norm_file(path), env)


def test_superior_obligation_forbids_every_other_move(tmp_path, mini_env, scared_north):
    text = "o: O(move(north) | true)\nf: F(move(north) | true)\no > f\n"
    supervisor = _supervisor_from_file(tmp_path, text, mini_env)
    assert supervisor.compliant_actions(scared_north) == [N]
    assert supervisor.violation_count(scared_north, N) == 0
    for action in (S, W, STOP):
        assert not supervisor.is_compliant(scared_north, action)
        assert supervisor.violation_count(scared_north, action) == 2
    assert supervisor.monitor_filter(scared_north, [W, S, N]) == N


def test_lesser_evil_from_prohibitions_keeps_the_agent_order(tmp_path, mini_env, scared_north):
    legal = mini_env.legal_actions(scared_north)
    text = "".join(f"no{a.name.title()}: F(move({a.value}) | true)\n" for a in legal)
    supervisor = _supervisor_from_file(tmp_path, text, mini_env)
    assert supervisor.compliant_actions(scared_north) == []
    assert [supervisor.violation_count(scared_north, a) for a in legal] == [1] * len(legal)
    assert supervisor.monitor_filter(scared_north, [W, N, S]) == W


def test_lesser_evil_under_an_unreachable_obligation(tmp_path, mini_env, scared_north):
    # east is blocked by a wall, so obeying the obligation is impossible
    supervisor = _supervisor_from_file(tmp_path, "goEast: O(move(east) | true)\n", mini_env)
    assert E not in mini_env.legal_actions(scared_north)
    assert supervisor.compliant_actions(scared_north) == []
    assert {a: supervisor.violation_count(scared_north, a) for a in (N, S)} == {N: 2, S: 2}
    assert supervisor.monitor_filter(scared_north, [S, N]) == S


@pytest.mark.parametrize("norms", ["benevolent", "benevolent_permit", "vegan"])
def test_compliance_means_no_violations_on_played_states(request, maze_layout, norms):
    env = PacmanEnv(maze_layout)
    supervisor = NormativeSupervisor.for_env(request.getfixturevalue(norms), env)
    for state in _reachable_states(env, 15, seed=31):
        for action in env.legal_actions(state):
            assert supervisor.is_compliant(state, action) == (supervisor.violation_count(state, action) == 0)
