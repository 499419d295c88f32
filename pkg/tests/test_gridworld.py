import pytest
from hypothesis import given, strategies as st

from tabfields import (Action, Cell, JointState, MapError, RewardParams, feasible_moves, observe,
                       parse_map, step)
from tabfields.gridworld import chebyshev, is_interception

OPEN_5 = "\n".join(["....."] * 5)


def test_parse_simple_obstacle():
    w = parse_map(".#.")
    assert (w.width, w.height) == (3, 1)
    assert w.obstacles == {Cell(0, 1)}


def test_parse_aggregates_labels():
    w = parse_map("A.A\n...")
    assert w.checkpoints["A"] == {Cell(0, 0), Cell(0, 2)}


def test_parse_restricted_block_and_starts():
    text = "\n".join(
        "s........." if r == 0 else ".........g" if r == 9 else
        ("...~~~~..." if 3 <= r <= 6 else "..........") for r in range(10))
    w = parse_map(text)
    assert w.restricted == {Cell(r, c) for r in range(3, 7) for c in range(3, 7)}
    assert w.named_zones["~"] == w.restricted
    assert w.adv_start == Cell(0, 0) and w.ego_start == Cell(9, 9)


@pytest.mark.parametrize("text", ["..\n...", "..x", "##\n##", ""])
def test_parse_errors(text):
    with pytest.raises(MapError):
        parse_map(text)


def test_map_roundtrip():
    text = "s.A#\n.~.g"
    assert parse_map(text).to_text().strip() == text


def test_feasible_moves_examples():
    w = parse_map(OPEN_5)
    assert len(feasible_moves(w, (2, 2))) == 9
    assert feasible_moves(w, (0, 0)) == [Cell(0, 0), Cell(0, 1), Cell(1, 0), Cell(1, 1)]
    walled = parse_map("###\n#.#\n###")
    assert feasible_moves(walled, (1, 1)) == [Cell(1, 1)]


def test_feasible_moves_rejects_obstacle():
    with pytest.raises(MapError):
        feasible_moves(parse_map(".#."), (0, 1))


def test_restricted_cells_are_geometrically_feasible():
    w = parse_map(".~.")
    assert Cell(0, 1) in feasible_moves(w, (0, 0))


P = RewardParams()


def test_step_interception_reward():
    w = parse_map(OPEN_5)
    out = step(w, P, JointState(Cell(2, 2), Cell(2, 3), 0), Action.STAY, Cell(2, 3))
    assert out.reward == pytest.approx(-1 + 50)
    assert out.terminal and out.kind == "intercept"
    assert out.state.t == 1


def test_step_collision():
    w = parse_map("....\n.#..\n....")
    out = step(w, P, JointState(Cell(0, 1), Cell(2, 3), 0), Action.S, Cell(2, 3))
    assert out.reward == pytest.approx(-1 - 30)
    assert out.state.ego == Cell(0, 1)
    assert not out.terminal


def test_step_plain():
    w = parse_map(OPEN_5)
    out = step(w, P, JointState(Cell(0, 0), Cell(4, 4), 3), Action.STAY, Cell(4, 4))
    assert out.reward == pytest.approx(-1)
    assert not out.terminal and out.state.t == 4
    moved = step(w, P, JointState(Cell(0, 0), Cell(4, 4), 3), Action.E, Cell(4, 4))
    assert moved.reward == pytest.approx(-1.1)
    assert moved.state.ego == Cell(0, 1)


def test_step_rejects_infeasible_adversary_move():
    w = parse_map(OPEN_5)
    with pytest.raises(ValueError):
        step(w, P, JointState(Cell(0, 0), Cell(4, 4), 0), Action.STAY, Cell(2, 2))


def test_swap_through_counts_as_interception():
    params = RewardParams(intercept_radius=0)
    assert is_interception(params, Cell(0, 1), Cell(0, 0), Cell(0, 0), Cell(0, 1))
    assert not is_interception(params, Cell(0, 1), Cell(0, 2), Cell(0, 0), Cell(0, 3))


def test_observe():
    w = parse_map("A..\n...")
    on = observe(w, JointState(Cell(1, 2), Cell(0, 0), 0))
    assert on.adv == Cell(0, 0) and on.ego == Cell(1, 2)
    off = observe(w, JointState(Cell(1, 2), Cell(0, 1), 0))
    assert off.adv is None and off.ego == Cell(1, 2)


def test_reward_params_validation():
    with pytest.raises(ValueError):
        RewardParams(gamma=1.0)
    with pytest.raises(ValueError):
        RewardParams(intercept_radius=-1)


maps = st.lists(st.lists(st.sampled_from(".#"), min_size=1, max_size=6), min_size=1, max_size=6)


@given(maps, st.data())
def test_feasible_moves_invariants(rows, data):
    width = len(rows[0])
    text = "\n".join("".join((r + ["."] * width)[:width]) for r in rows)
    if "." not in text:
        text = "." + text[1:]
    w = parse_map(text)
    c = data.draw(st.sampled_from(w.cells))
    moves = feasible_moves(w, c)
    assert c in moves
    assert all(w.is_free(m) and chebyshev(c, m) <= 1 for m in moves)
    assert moves == sorted(moves)


@given(st.integers(0, 4), st.integers(0, 4), st.integers(0, 4), st.integers(0, 4), st.integers(0, 2))
def test_interception_symmetric(r1, c1, r2, c2, radius):
    params = RewardParams(intercept_radius=radius)
    a, b = Cell(r1, c1), Cell(r2, c2)
    assert is_interception(params, a, b) == is_interception(params, b, a)
    assert is_interception(params, a, b) == (chebyshev(a, b) <= radius)


@given(st.sampled_from(list(Action)), st.integers(0, 4), st.integers(0, 4))
def test_step_is_pure(a, r, c):
    w = parse_map(OPEN_5)
    s = JointState(Cell(r, c), Cell(4 - r, 4 - c), 2)
    adv_next = feasible_moves(w, s.adv)[0]
    assert step(w, P, s, a, adv_next) == step(w, P, s, a, adv_next)
