import pytest

from tabfields import Cell, compile_automaton, evaluate_trajectory, parse_map, parse_mission
from tabfields.adversary import (AdversaryError, adversary_next, load_scripted_path, make_adversary,
                                 write_scripted_path)
from tabfields.bench import load_suite, _scenario
from tabfields.planner import shortest_mission_path

from support import SUITE, corridor_tab


def test_tab_sample_corridor():
    tab = corridor_tab()
    pol = make_adversary("tab", tab.world, parse_mission("reach C at 2"), tab, seed=5)
    assert pol.trajectory == [Cell(0, 0), Cell(0, 1), Cell(0, 2)]
    assert adversary_next(pol, 0) == Cell(0, 1)
    assert adversary_next(pol, 1) == Cell(0, 2)
    with pytest.raises(IndexError):
        adversary_next(pol, 2)


def test_noisy_zero_epsilon_is_fixed_path():
    world = parse_map("s...\n.#..\n...A")
    spec = parse_mission("reach A by 6")
    aut = compile_automaton(spec, world, 7)
    pol = make_adversary("noisy", world, aut, epsilon=0.0, seed=3)
    assert pol.trajectory == shortest_mission_path(world, aut, world.adv_start)


def test_noisy_detours_still_satisfy():
    world = parse_map("s...\n.#..\n...A")
    aut = compile_automaton(parse_mission("reach A by 6"), world, 7)
    for seed in range(20):
        pol = make_adversary("noisy", world, aut, epsilon=0.5, seed=seed)
        assert evaluate_trajectory(aut, pol.trajectory)
        assert pol.attempts >= 1


def test_scripted_validation(tmp_path):
    world = parse_map("s~A\n...")
    aut = compile_automaton(parse_mission("reach A by 3; avoid ~"), world, 3)
    bad = [Cell(0, 0), Cell(0, 1), Cell(0, 2), Cell(0, 2)]
    with pytest.raises(AdversaryError):
        make_adversary("scripted", world, aut, path=bad)
    good = [Cell(0, 0), Cell(1, 1), Cell(0, 2), Cell(0, 2)]
    p = tmp_path / "path.csv"
    write_scripted_path(good, p)
    assert load_scripted_path(p) == good
    pol = make_adversary("scripted", world, aut, path=str(p))
    assert pol.trajectory == good
    with pytest.raises(AdversaryError):
        make_adversary("scripted", world, aut, path=good[:3])


def test_unknown_kind():
    tab = corridor_tab()
    with pytest.raises(AdversaryError):
        make_adversary("teleport", tab.world, tab.aut, tab)


def test_tab_samples_satisfy_every_family():
    suite = load_suite(SUITE)
    for key in suite.scenarios:
        sc = _scenario(*key)
        for seed in range(1000):
            pol = make_adversary("tab", sc.world, sc.aut, sc.tab, seed=seed)
            assert evaluate_trajectory(sc.aut, pol.trajectory)
