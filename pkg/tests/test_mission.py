import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tabfields import (Cell, CType, MissionCompileError, MissionSyntaxError, automaton_step,
                       compile_automaton, completion_time, evaluate_trajectory, parse_map,
                       parse_mission)
from tabfields.mission import ConstraintTuple, load_mission, run_automaton
from tabfields.tabfield import enumerate_paths

from support import FAMILIES, random_map, random_mission, satisfies


def test_parse_deadline():
    (ct,) = parse_mission("reach A by 5").tuples
    assert (ct.goal, ct.time, ct.ctype, ct.forbidden) == ("A", 5, CType.DEADLINE, ())


def test_parse_exact_sequence():
    a, b = parse_mission("reach A at 5; reach B at 10").tuples
    assert (a.goal, a.time, a.ctype) == ("A", 5, CType.EXACT_TIME)
    assert (b.goal, b.time, b.ctype) == ("B", 10, CType.EXACT_TIME)


def test_parse_recurrent():
    (ct,) = parse_mission("reach A every 5").tuples
    assert ct.ctype is CType.RECURRENT and ct.period == 5 and ct.time is None


def test_parse_other_clauses():
    spec = parse_mission("stay A until 3 # comment\n; avoid ~; reach B; gap 4")
    kinds = [ct.ctype for ct in spec.tuples]
    assert kinds == [CType.UNTIL, CType.ALWAYS, CType.EVENTUALLY]
    assert spec.max_gap == 4
    assert spec.tuples[1].forbidden == ("~",)


@pytest.mark.parametrize("text, pos", [
    ("reach A bye 5", 8),
    ("reach A by", 10),
    ("reach 5 by 5", 6),
    ("reach A by 5 reach B by 6", 13),
    ("reach A every 0", 14),
    ("fly A", 0),
    ("reach A by 5; $", 14),
])
def test_syntax_errors_carry_position(text, pos):
    with pytest.raises(MissionSyntaxError) as exc:
        parse_mission(text)
    assert exc.value.pos == pos
    caret = exc.value.annotated().splitlines()[-1]
    assert caret.index("^") - 2 == pos


def test_tuple_validation():
    with pytest.raises(ValueError):
        ConstraintTuple("A", None, CType.DEADLINE)
    with pytest.raises(ValueError):
        ConstraintTuple(None, 3, CType.EXACT_TIME)


def test_load_mission_file_or_text(tmp_path):
    p = tmp_path / "m.mission"
    p.write_text("reach A by 2\n")
    assert load_mission(str(p)).tuples == parse_mission("reach A by 2").tuples
    assert load_mission("reach A by 2").tuples == parse_mission("reach A by 2").tuples


W = parse_map("A..B\n.~..\n....")


def test_compile_errors():
    with pytest.raises(MissionCompileError):
        compile_automaton(parse_mission("reach Q by 2"), W, 3)
    with pytest.raises(MissionCompileError):
        compile_automaton(parse_mission("reach A by 5"), W, 4)
    with pytest.raises(MissionCompileError):
        compile_automaton(parse_mission("reach A at 1; reach B at 2; gap 3"), W, 3, max_states=5)


def test_exact_time_zero():
    aut = compile_automaton(parse_mission("reach A at 0"), W, 2)
    q_in = automaton_step(aut, aut.q0, Cell(0, 0), 0)
    assert aut.progress(q_in) == 1
    assert automaton_step(aut, aut.q0, Cell(0, 1), 0) == aut.dead


def test_avoid_reaches_dead():
    aut = compile_automaton(parse_mission("avoid ~"), W, 2)
    qs = run_automaton(aut, [Cell(0, 0), Cell(1, 1), Cell(1, 2)])
    assert qs[1] == aut.dead and qs[2] == aut.dead
    assert not evaluate_trajectory(aut, [Cell(0, 0), Cell(1, 1), Cell(1, 2)])


def test_m5_style_automaton():
    world = parse_map("A...\n.ZZ.\n...B".replace("Z", "~"))
    aut = compile_automaton(parse_mission("reach A by 4; reach B by 9; gap 5; avoid ~"), world, 9)
    live = [s for s in aut.states if s is not None]
    assert {s.progress for s in live} == {0, 1, 2}
    assert max(s.gap for s in live) == 5
    assert aut.states[aut.dead] is None
    assert not aut.is_accepting(aut.dead)


def test_dead_is_absorbing():
    aut = compile_automaton(parse_mission("reach A by 2"), W, 3)
    for t in range(4):
        for c in W.cells:
            assert automaton_step(aut, aut.dead, c, t) == aut.dead


def test_deadline_progress():
    aut = compile_automaton(parse_mission("reach A by 2; reach B by 3"), W, 3)
    q = automaton_step(aut, aut.q0, Cell(0, 0), 0)
    assert aut.progress(q) == 1


def test_gap_limit_kills_on_enumerated_paths():
    world = parse_map("A.B")
    spec = parse_mission("reach A by 4; reach B by 4; gap 2")
    aut = compile_automaton(spec, world, 4)
    # after reaching A at t=0, the counter hits its limit at t=2; missing B at t=3 is fatal
    q = aut.q0
    for t, c in enumerate([Cell(0, 0), Cell(0, 1), Cell(0, 1)]):
        q = automaton_step(aut, q, c, t)
    assert aut.states[q].gap == 2
    assert automaton_step(aut, q, Cell(0, 1), 3) == aut.dead
    for path in enumerate_paths(world, (0, 0), 4):
        assert evaluate_trajectory(aut, path) == satisfies(world, spec, path, 4)


def test_evaluate_examples():
    world = parse_map("A..")
    aut = compile_automaton(parse_mission("reach A by 3"), world, 3)
    assert evaluate_trajectory(aut, [Cell(0, 0)] * 4)
    assert not evaluate_trajectory(aut, [Cell(0, 1)] * 4)
    corridor = parse_map("s.C")
    aut = compile_automaton(parse_mission("reach C at 2"), corridor, 2)
    assert evaluate_trajectory(aut, [Cell(0, 0), Cell(0, 1), Cell(0, 2)])
    with pytest.raises(ValueError):
        evaluate_trajectory(aut, [Cell(0, 0)])


def test_evaluate_rejects_teleport():
    world = parse_map("A...")
    aut = compile_automaton(parse_mission(""), world, 1)
    assert not evaluate_trajectory(aut, [Cell(0, 0), Cell(0, 3)])


def test_completion_time():
    world = parse_map("A.B.")
    aut = compile_automaton(parse_mission("reach A by 3; reach B by 3"), world, 4)
    path = [Cell(0, 1), Cell(0, 0), Cell(0, 1), Cell(0, 2), Cell(0, 2)]
    assert completion_time(aut, path) == 3
    assert completion_time(aut, [Cell(0, 3)] * 5) is None
    rec = compile_automaton(parse_mission("reach A every 2"), world, 4)
    assert completion_time(rec, [Cell(0, 0)] * 5) == 4
    until = compile_automaton(parse_mission("stay A until 2"), world, 4)
    assert completion_time(until, [Cell(0, 0)] * 5) == 2


def test_state_count_bound():
    world = parse_map("AB..\n....")
    for text, n_reach, gap, period in [("reach A by 3; reach B by 6; gap 2", 2, 2, 0),
                                       ("reach A every 3; reach B by 5", 1, 0, 3),
                                       ("reach A at 2", 1, 0, 0)]:
        aut = compile_automaton(parse_mission(text), world, 6)
        assert aut.n_states - 1 <= (n_reach + 1) * (gap + 1) * (period + 1)


def test_exhaustive_agreement_all_families():
    rng = np.random.default_rng(7)
    for family in FAMILIES:
        for _ in range(3):
            world = parse_map(random_map(rng, max_side=3, zone=family in ("M4", "M5")))
            T = 4
            spec = parse_mission(random_mission(rng, family, T))
            aut = compile_automaton(spec, world, T)
            for path in enumerate_paths(world, world.adv_start, T):
                assert evaluate_trajectory(aut, path) == satisfies(world, spec, path, T), (spec.source, path)


CLAUSES = st.one_of(
    st.builds(lambda g, t: f"reach {g} by {t}", st.sampled_from("AB"), st.integers(0, 6)),
    st.builds(lambda g, t: f"reach {g} at {t}", st.sampled_from("AB"), st.integers(0, 6)),
    st.builds(lambda g: f"reach {g}", st.sampled_from("AB")),
    st.builds(lambda g, k: f"reach {g} every {k}", st.sampled_from("AB"), st.integers(1, 4)),
    st.builds(lambda g: f"avoid {g}", st.sampled_from("B~")),
    st.builds(lambda g, t: f"stay {g} until {t}", st.sampled_from("A~"), st.integers(0, 2)),
    st.builds(lambda k: f"gap {k}", st.integers(0, 4)),
)
WORLD = parse_map("A.B\n.~.\nB.A")


@settings(max_examples=150, deadline=None)
@given(st.lists(CLAUSES, min_size=0, max_size=4), st.data())
def test_fold_matches_direct_semantics(clauses, data):
    text = "; ".join(clauses)
    spec = parse_mission(text)
    T = 6
    aut = compile_automaton(spec, WORLD, T)
    start = data.draw(st.sampled_from(WORLD.cells))
    moves = data.draw(st.lists(st.integers(0, 8), min_size=T, max_size=T))
    path = [start]
    for m in moves:
        i = WORLD.index[path[-1]]
        options = [j for j in WORLD.move_table[i] if j >= 0]
        path.append(WORLD.cells[options[m % len(options)]])
    assert evaluate_trajectory(aut, path) == satisfies(WORLD, spec, path, T)
    qs = run_automaton(aut, path)
    if aut.dead in qs:
        assert all(q == aut.dead for q in qs[qs.index(aut.dead):])


@given(st.integers(0, 6), st.sampled_from(WORLD.cells))
def test_automaton_step_total(t, cell):
    aut = compile_automaton(parse_mission("reach A by 3; reach B every 2; avoid ~"), WORLD, 6)
    for q in range(aut.n_states):
        assert 0 <= automaton_step(aut, q, cell, t) < aut.n_states


def test_enumerated_small_world_is_exhaustive():
    world = parse_map("A.\n.B")
    paths = list(enumerate_paths(world, (0, 0), 2))
    assert len(paths) == 16
    assert len({tuple(p) for p in paths}) == 16
    assert all(len(p) == 3 for p in paths)
