import logging
from dataclasses import replace

import numpy as np
import pytest

from pacman import (
    ACTIONS, Direction, Event, GhostColor, GhostState, IllegalActionError, LayoutError, MINI_FOOD_COUNT, Outcome,
    PacmanEnv, load_layout, load_layout_file, run_episode,
)


N, S, E, W, STOP = Direction.NORTH, Direction.SOUTH, Direction.EAST, Direction.WEST, Direction.STOP


def still_ghost(state, index, legal, rng):
    return STOP


def westward_ghost(state, index, legal, rng):
    return W if W in legal else legal[0]


# =============================================================================
# Layouts
# =============================================================================
def test_mini_layout(mini_layout):
    assert (mini_layout.width, mini_layout.height) == (5, 3)
    assert mini_layout.pacman_start == (2, 1)
    assert mini_layout.ghost_starts == ((GhostColor.BLUE, (4, 0)),)
    assert mini_layout.capsules == ((0, 2),)
    assert len(mini_layout.food) == MINI_FOOD_COUNT
    assert not mini_layout.walls


def test_maze_layout_has_two_ghost_colours(maze_layout):
    colours = {c for c, _ in maze_layout.ghost_starts}
    assert colours == {GhostColor.BLUE, GhostColor.ORANGE}


def test_layout_by_bare_name():
    assert load_layout_file("tiny").name == "tiny"


def test_missing_layout(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_layout_file(tmp_path / "nowhere.lay")


@pytest.mark.parametrize("text, message", [
    ("", "empty"),
    ("...\n.B.", "no Pac-Man"),
    ("P.P", "second Pac-Man"),
    ("P.x", "unknown glyph"),
])
def test_layout_errors(text, message):
    with pytest.raises(LayoutError, match=message):
        load_layout(text)


def test_mini_food_count_is_checked(caplog):
    with caplog.at_level(logging.WARNING, logger="pacman"):
        load_layout("P.B", name="mini")
    assert any("expected 11" in r.getMessage() for r in caplog.records)


def test_walls_block_moves(tiny_layout):
    assert tiny_layout.is_wall((1, 1))
    assert tiny_layout.target((1, 0), S) is None
    assert tiny_layout.target((0, 0), W) is None
    assert tiny_layout.target((0, 0), STOP) == (0, 0)


# =============================================================================
# Dynamics
# =============================================================================
def test_legal_actions_in_fixed_order(mini_env):
    state = mini_env.reset()
    assert mini_env.legal_actions(state) == list(ACTIONS)
    corner = replace(state, pacman=(0, 0))
    assert mini_env.legal_actions(corner) == [S, E, STOP]


def test_no_legal_actions_when_terminal(mini_env):
    state = replace(mini_env.reset(), outcome=Outcome.LOSE)
    assert mini_env.legal_actions(state) == []
    with pytest.raises(IllegalActionError):
        mini_env.step(state, STOP, np.random.default_rng(0))


def test_illegal_action_is_rejected(mini_env):
    state = replace(mini_env.reset(), pacman=(0, 0))
    with pytest.raises(IllegalActionError):
        mini_env.step(state, N, np.random.default_rng(0))


def test_perfect_run_scores_599(still_env):
    rng = np.random.default_rng(0)
    state = still_env.reset()
    for action in (E, E, S, W, W, W, N, W, N, E, E):
        state = still_env.step(state, action, rng).next_state
    assert state.outcome is Outcome.WIN
    assert state.score == 599
    assert state.food_left == 0
    assert state.step_count == 11


def test_walking_into_unscared_ghost_loses(still_env):
    state = replace(still_env.reset(), pacman=(3, 0))
    outcome = still_env.step(state, E, np.random.default_rng(0))
    assert outcome.reward == -501
    assert outcome.events == {Event.DIED}
    assert outcome.next_state.outcome is Outcome.LOSE


def test_eating_scared_ghost_respawns_it(still_env):
    start = still_env.reset()
    state = replace(start, pacman=(3, 1), ghosts=(GhostState((3, 0), scared_timer=5),))
    outcome = still_env.step(state, N, np.random.default_rng(0))
    assert outcome.reward == 199
    assert outcome.ghosts_eaten == (GhostColor.BLUE,)
    assert outcome.next_state.ghosts[0] == GhostState((4, 0))
    assert outcome.next_state.outcome is Outcome.ONGOING


def test_capsule_scares_ghosts_and_timer_decrements(still_env):
    state = replace(still_env.reset(), pacman=(0, 1))
    outcome = still_env.step(state, S, np.random.default_rng(0))
    assert Event.ATE_CAPSULE in outcome.events
    assert outcome.next_state.capsules == 0
    assert outcome.next_state.ghosts[0].scared_timer == still_env.scared_duration - 1
    assert outcome.reward == -1


def test_ghost_moving_onto_pacman_on_capsule_is_eaten(mini_layout):
    env = PacmanEnv(mini_layout, scared_duration=40, ghost_policy=westward_ghost)
    state = replace(env.reset(), pacman=(0, 1), ghosts=(GhostState((1, 2)),))
    outcome = env.step(state, S, np.random.default_rng(0))
    assert outcome.events == {Event.ATE_CAPSULE, Event.ATE_GHOST}
    assert outcome.reward == 199
    assert outcome.next_state.ghosts[0] == GhostState((4, 0))


def test_swap_counts_as_collision(mini_layout):
    env = PacmanEnv(mini_layout, ghost_policy=westward_ghost)
    state = replace(env.reset(), pacman=(2, 1), ghosts=(GhostState((3, 1)),))
    outcome = env.step(state, E, np.random.default_rng(0))
    assert Event.DIED in outcome.events


def test_ghost_without_respawn_is_removed(mini_layout):
    env = PacmanEnv(mini_layout, ghost_respawn=False, ghost_policy=still_ghost)
    state = replace(env.reset(), pacman=(3, 0), ghosts=(GhostState((4, 0), scared_timer=5),))
    ghost = env.step(state, E, np.random.default_rng(0)).next_state.ghosts[0]
    assert not ghost.active
    assert env.ghost_moves(GhostState((4, 0))) == [S, W]


def test_ghost_never_reverses_unless_forced(mini_env):
    heading_east = GhostState((2, 1), heading=E)
    assert W not in mini_env.ghost_moves(heading_east)
    cornered = GhostState((0, 0), heading=N)
    assert mini_env.ghost_moves(cornered) == [E]


def test_ghost_reverses_in_a_dead_end():
    env = PacmanEnv(load_layout("P..\n%%%"), ghost_no_reversal=True)
    assert env.ghost_moves(GhostState((2, 0), heading=E)) == [W]


def test_transitions_are_a_distribution(mini_env):
    rng = np.random.default_rng(5)
    state = mini_env.reset()
    for _ in range(30):
        if state.terminal:
            state = mini_env.reset()
        for action in mini_env.legal_actions(state):
            branches = mini_env.transitions(state, action)
            assert sum(p for p, _ in branches) == pytest.approx(1.0)
        state = mini_env.step(state, mini_env.legal_actions(state)[0], rng).next_state


def test_step_is_deterministic_given_seed(mini_env):
    a = mini_env.step(mini_env.reset(), W, np.random.default_rng(42))
    b = mini_env.step(mini_env.reset(), W, np.random.default_rng(42))
    assert a == b


# =============================================================================
# Episodes
# =============================================================================
def test_standing_still_scores_minus_max_steps(still_env):
    trace = run_episode(lambda s: STOP, still_env, np.random.default_rng(0), max_steps=25)
    assert trace.score == -25
    assert len(trace.steps) == 25
    assert not trace.won


def test_episode_rejects_non_positive_cap(still_env):
    with pytest.raises(ValueError):
        run_episode(lambda s: STOP, still_env, np.random.default_rng(0), max_steps=0)


def test_random_episodes_are_reproducible(mini_env):
    def policy_for(seed):
        rng = np.random.default_rng(seed)
        return lambda s: mini_env.legal_actions(s)[int(rng.integers(len(mini_env.legal_actions(s))))]

    first = run_episode(policy_for(1), mini_env, np.random.default_rng(2), max_steps=200)
    second = run_episode(policy_for(1), mini_env, np.random.default_rng(2), max_steps=200)
    assert first.steps == second.steps
    assert first.score == sum(t.outcome.reward for t in first.steps)
    assert first.ghosts_eaten() == second.ghosts_eaten()
