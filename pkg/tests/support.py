"""Shared fixtures-by-hand for the test suite: small worlds, random instances,
an independent mission checker and an exact Bayes filter."""
from __future__ import annotations

from pathlib import Path

import numpy as np

import tabfields
from tabfields import (Cell, CType, InfeasibleMission, build_reference, compile_automaton,
                       compute_tabfield, conditioned_kernel, parse_map, parse_mission)
from tabfields.tabfield import count_paths

FAMILIES = ("M1", "M2", "M3", "M4", "M5")

SCENARIOS = Path(tabfields.__file__).parent / "scenarios"
SUITE = SCENARIOS / "suite.json"

CORRIDOR = "s.C"
CORRIDOR_EGO = "s.C.g"


def corridor_tab():
    world = parse_map(CORRIDOR)
    ref = build_reference(world)
    return compute_tabfield(world, ref, parse_mission("reach C at 2"), world.adv_start, 2)


# --- independent mission semantics ----------------------------------------------

def satisfies(world, spec, cells, horizon) -> bool:
    """Direct reading of the mission semantics, written without the automaton."""
    if len(cells) != horizon + 1:
        raise ValueError("length mismatch")
    cells = [Cell(*c) for c in cells]
    zones = world.named_zones
    free = set(world.cells)
    if any(c not in free for c in cells):
        return False
    for a, b in zip(cells, cells[1:]):
        if max(abs(a.row - b.row), abs(a.col - b.col)) > 1:
            return False
    for ct in spec.tuples:
        for z in ct.forbidden:
            if any(c in zones[z] for c in cells):
                return False
        if ct.ctype is CType.UNTIL:
            if not all(cells[t] in zones[ct.goal] for t in range(ct.time + 1)):
                return False
        if ct.ctype is CType.RECURRENT:
            k = ct.period
            j = 0
            while (j + 1) * k <= horizon:
                if not any(cells[t] in zones[ct.goal] for t in range(j * k, (j + 1) * k + 1)):
                    return False
                j += 1
    reach = [ct for ct in spec.tuples if ct.ctype in (CType.EXACT_TIME, CType.DEADLINE, CType.EVENTUALLY)]
    prev = -1
    for i, ct in enumerate(reach):
        done = None
        for t in range(prev + 1, horizon + 1):
            if cells[t] not in zones[ct.goal]:
                continue
            if ct.ctype is CType.EXACT_TIME and t != ct.time:
                continue
            if ct.ctype is CType.DEADLINE and t > ct.time:
                continue
            done = t
            break
        if done is None:
            return False
        if spec.max_gap is not None and len(reach) > 1 and i > 0 and done - prev > spec.max_gap:
            return False
        prev = done
    return True


# --- random instances --------------------------------------------------------------

def random_map(rng, min_side=2, max_side=5, zone=False):
    """Random map text with checkpoints A and B, optional restricted cells, and an 's' start."""
    while True:
        h, w = (int(x) for x in rng.integers(min_side, max_side + 1, size=2))
        if h * w < 4:
            continue
        grid = np.full((h, w), ".", dtype="<U1")
        grid[rng.random((h, w)) < 0.15] = "#"
        free = [tuple(x) for x in np.argwhere(grid == ".")]
        if len(free) < 4:
            continue
        order = rng.permutation(len(free))
        picks = [free[i] for i in order]
        grid[picks[0]] = "s"
        grid[picks[1]] = "A"
        grid[picks[2]] = "B"
        rest = picks[3:]
        if rng.random() < 0.5 and rest:
            grid[rest.pop()] = "A"
        if zone:
            if not rest:
                continue
            for _ in range(int(rng.integers(1, min(3, len(rest)) + 1))):
                grid[rest.pop()] = "~"
        return "\n".join("".join(row) for row in grid)


def random_mission(rng, family: str, T: int) -> str:
    if family == "M1":
        return f"reach A by {int(rng.integers(0, T + 1))}"
    if family == "M2":
        t1 = int(rng.integers(0, T))
        t2 = int(rng.integers(t1 + 1, T + 1))
        return f"reach A at {t1}; reach B at {t2}"
    if family == "M3":
        return f"reach A every {int(rng.integers(1, T + 1))}"
    if family == "M4":
        return f"reach A by {int(rng.integers(0, T + 1))}; avoid ~"
    if family == "M5":
        t1 = int(rng.integers(0, T))
        t2 = int(rng.integers(t1 + 1, T + 1))
        return f"reach A by {t1}; reach B by {t2}; gap {int(rng.integers(1, T + 1))}; avoid ~"
    raise ValueError(family)


def random_instance(rng, family: str, max_T: int = 8, max_paths: int = 200_000):
    """A feasible (world, ref, spec, horizon) of the given family, small enough to enumerate."""
    while True:
        world = parse_map(random_map(rng, zone=family in ("M4", "M5")))
        ref = build_reference(world)
        T = int(rng.integers(1, max_T + 1))
        mu0 = np.zeros(world.n_cells)
        mu0[world.index[world.adv_start]] = 1.0
        while T > 1 and count_paths(ref, mu0, T) > max_paths:
            T -= 1
        spec = parse_mission(random_mission(rng, family, T))
        try:
            compute_tabfield(world, ref, spec, world.adv_start, T)
        except InfeasibleMission:
            continue
        return world, ref, spec, T


def push_through_kernel(tab):
    """Cell marginals obtained by chaining conditioned_kernel from the initial joint law."""
    world = tab.world
    dist = {}
    p0 = tab.joint(0)
    for c, q in zip(*np.nonzero(p0)):
        dist[(int(c), int(q))] = float(p0[c, q])
    out = [_cell_marginal(world, dist)]
    for t in range(tab.horizon):
        nxt = {}
        for (c, q), p in dist.items():
            for (cell, qn), k in conditioned_kernel(tab, t, world.cells[c], q).items():
                key = (world.index[cell], qn)
                nxt[key] = nxt.get(key, 0.0) + p * k
        dist = nxt
        out.append(_cell_marginal(world, dist))
    return np.array(out)


def _cell_marginal(world, dist):
    m = np.zeros(world.n_cells)
    for (c, _), p in dist.items():
        m[c] += p
    return m


# --- exact Bayes filter over (cell, automaton state) -----------------------------

def exact_predict(tab, t, joint):
    """joint: (cells, states) array at time t -> predicted array at t+1 under the TAB kernel."""
    world = tab.world
    out = np.zeros_like(joint)
    for c, q in zip(*np.nonzero(joint)):
        for (cell, qn), k in conditioned_kernel(tab, t, world.cells[c], int(q)).items():
            out[world.index[cell], qn] += joint[c, q] * k
    return out


def exact_update(world, joint, seen):
    """Condition on the checkpoint observation: a cell, or None for no sighting."""
    lik = np.zeros(world.n_cells)
    if seen is None:
        lik[~world.checkpoint_mask] = 1.0
    else:
        lik[world.index[Cell(*seen)]] = 1.0
    post = joint * lik[:, None]
    return post / post.sum()


def particle_joint(b, n_states):
    out = np.zeros((b.world.n_cells, n_states))
    np.add.at(out, (b.adv, b.q), b.w)
    return out


def tv(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def compile_for(world, text, T):
    return compile_automaton(parse_mission(text), world, T)
