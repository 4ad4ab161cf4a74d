import pytest
from hypothesis import given, settings, strategies as st

from mas_emergence.env import (Action, EngineError, Event, GridState, Target, Terminal, discounted_return,
                               is_terminal, parse_ascii, render_ascii, returns_to_go, step)
from mas_emergence.rewards import RewardModel

BASE = RewardModel()


def grid(agents, targets=(), walls=(), w=5, h=5):
    return GridState(w, h, frozenset(walls), tuple(agents), frozenset(Target(*t) if isinstance(t[0], tuple)
                                                                       else Target(t) for t in targets))


def test_up_decreases_y_and_costs_one():
    s = grid([(2, 3)], targets=[(5, 5)])
    out = step(s, [Action.UP], BASE)
    assert out.next_state.agents == ((2, 2),)
    assert out.rewards == [-1.0]
    assert out.events[0] == {Event.MOVED}


def test_collect_target_pays_goal_weight():
    s = grid([(2, 3)], targets=[(3, 3), (5, 5)])
    out = step(s, [Action.RIGHT], BASE)
    assert out.rewards == [49.0]
    assert Event.COLLECTED_TARGET in out.events[0]
    assert out.next_state.collected[0] == ((3, 3),)
    assert Target((3, 3)) not in out.next_state.targets


def test_owned_target_ignores_other_agent():
    s = grid([(2, 3), (5, 1)], targets=[((3, 3), 1), ((1, 1), 0)])
    out = step(s, [Action.RIGHT, Action.LEFT], BASE)
    assert out.next_state.agents[0] == (3, 3)
    assert Target((3, 3), 1) in out.next_state.targets
    assert out.rewards[0] == -1.0


def test_wall_and_edge_block():
    s = grid([(1, 1)], targets=[(5, 5)], walls=[(2, 1)])
    for a in (Action.UP, Action.LEFT, Action.RIGHT):
        out = step(s, [a], BASE)
        assert out.next_state.agents == ((1, 1),)
        assert out.events[0] == {Event.BLOCKED_BY_WALL}
        assert out.rewards == [-1.0]


def test_same_cell_both_stay():
    s = grid([(1, 2), (3, 2)], targets=[(5, 5)])
    out = step(s, [Action.RIGHT, Action.LEFT], BASE)
    assert out.next_state.agents == ((1, 2), (3, 2))
    assert all(Event.BLOCKED_BY_AGENT in e for e in out.events)
    assert out.rewards == [-1.0, -1.0]


def test_swap_blocked():
    s = grid([(1, 2), (2, 2)], targets=[(5, 5)])
    out = step(s, [Action.RIGHT, Action.LEFT], BASE)
    assert out.next_state.agents == ((1, 2), (2, 2))


def test_follow_the_leader_allowed():
    s = grid([(1, 2), (2, 2)], targets=[(5, 5)])
    out = step(s, [Action.RIGHT, Action.RIGHT], BASE)
    assert out.next_state.agents == ((2, 2), (3, 2))


def test_blocked_leader_blocks_follower():
    s = grid([(1, 1), (2, 1)], targets=[(5, 5)], walls=[(3, 1)])
    out = step(s, [Action.RIGHT, Action.RIGHT], BASE)
    assert out.next_state.agents == ((1, 1), (2, 1))
    assert Event.BLOCKED_BY_AGENT in out.events[0]
    assert Event.BLOCKED_BY_WALL in out.events[1]


def test_three_way_contest_all_stay():
    # two claim the same cell, a third follows into one of the claimants' cells
    s = grid([(1, 2), (3, 2), (3, 3)], targets=[(5, 5)])
    out = step(s, [Action.RIGHT, Action.LEFT, Action.UP], BASE)
    assert out.next_state.agents == ((1, 2), (3, 2), (3, 3))


def test_done_agent_frozen_and_unrewarded():
    s = grid([(1, 1), (3, 3)], targets=[((5, 5), 1)])
    out = step(s, [Action.RIGHT, Action.RIGHT], BASE)
    assert out.next_state.agents[0] == (1, 1)
    assert out.rewards[0] == 0.0


def test_terminal_and_arity_errors():
    s = grid([(1, 1)], targets=[(2, 1)])
    with pytest.raises(EngineError):
        step(s, [], BASE)
    done = step(s, [Action.RIGHT], BASE).next_state
    assert is_terminal(done) is Terminal.ALL_TARGETS_COLLECTED
    with pytest.raises(EngineError):
        step(done, [Action.RIGHT], BASE)
    assert is_terminal(grid([(1, 1)], targets=[(3, 3)]), budget=0) is Terminal.STEP_BUDGET_EXHAUSTED


def test_discounted_return_and_returns_to_go():
    r = [1.0, 2.0, 3.0]
    assert discounted_return(r, 0.5) == pytest.approx(1 + 1 + 0.75)
    assert returns_to_go(r, 0.5) == pytest.approx([2.75, 3.5, 3.0])
    with pytest.raises(ValueError):
        discounted_return(r, 1.5)


def test_ascii_round_trip():
    s = grid([(1, 1), (3, 2)], targets=[(4, 4)], walls=[(2, 2)])
    assert parse_ascii(render_ascii(s)) == s


cells = st.tuples(st.integers(1, 5), st.integers(1, 5))


@st.composite
def states(draw):
    walls = draw(st.sets(cells, max_size=6))
    free = [(x, y) for x in range(1, 6) for y in range(1, 6) if (x, y) not in walls]
    n = draw(st.integers(1, 3))
    picks = draw(st.lists(st.sampled_from(free), min_size=n + 1, max_size=n + 3, unique=True))
    return GridState(5, 5, frozenset(walls), tuple(picks[:n]), frozenset(Target(p) for p in picks[n:]))


@settings(max_examples=300, deadline=None)
@given(states(), st.lists(st.sampled_from(list(Action)), min_size=3, max_size=3))
def test_step_preserves_invariants(s, acts):
    out = step(s, acts[: s.n_agents], BASE)
    nxt = out.next_state
    nxt.check()
    assert nxt.step == s.step + 1
    for i in range(s.n_agents):
        moved = abs(nxt.agents[i][0] - s.agents[i][0]) + abs(nxt.agents[i][1] - s.agents[i][1])
        assert moved <= 1
        got = Event.COLLECTED_TARGET in out.events[i]
        assert got == (len(nxt.collected[i]) == len(s.collected[i]) + 1)
        assert out.rewards[i] == (-1.0 + 50.0 * got)
    n_before = len(s.targets) + sum(map(len, s.collected))
    assert len(nxt.targets) + sum(map(len, nxt.collected)) == n_before
