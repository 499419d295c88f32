"""Ground-truth adversary policies used during evaluation.

Adversaries are non-reactive: each one commits to a full trajectory before the
episode starts and never looks at the ego agent.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import TabFieldsError
from .gridworld import Cell, GridWorld, feasible_moves
from .mission import ConstraintAutomaton, compile_automaton, evaluate_trajectory
from .planner import _forbidden_mask, next_hop_table, shortest_mission_path
from .tabfield import TabField, sample_trajectory

KINDS = ("tab", "noisy", "scripted")
REPAIR_CAP = 10_000


class AdversaryError(TabFieldsError):
    pass


@dataclass
class AdversaryPolicy:
    kind: str
    trajectory: list
    seed: Optional[int] = None
    attempts: int = 1
    params: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.trajectory) - 1


def noisy_shortest_path(world: GridWorld, aut: ConstraintAutomaton, adv_start, epsilon: float,
                        rng: np.random.Generator, cap: int = REPAIR_CAP):
    """Shortest-path plan with epsilon-random detours, resampled until it satisfies the mission.

    At every step the adversary takes a uniformly random feasible move with
    probability epsilon, otherwise one shortest-path step toward the planned
    cell of the next time step.
    """
    plan = shortest_mission_path(world, aut, adv_start)
    if epsilon <= 0:
        return plan, 1
    passable = ~_forbidden_mask(world, aut.spec)
    hops = {}
    targets = [world.index[c] for c in plan]
    for target in set(targets[1:]):
        hops[target] = next_hop_table(world, target, passable)
    for attempt in range(1, cap + 1):
        cur = targets[0]
        path = [world.cells[cur]]
        for t in range(aut.horizon):
            if rng.random() < epsilon:
                options = feasible_moves(world, world.cells[cur])
                cur = world.index[options[rng.integers(len(options))]]
            else:
                cur = int(hops[targets[t + 1]][cur])
            path.append(world.cells[cur])
        if evaluate_trajectory(aut, path):
            return path, attempt
    raise AdversaryError(f"no mission-satisfying detour found in {cap} attempts")


def load_scripted_path(path) -> list:
    """Read a (t, row, col) CSV; rows must cover t = 0..T in order."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cells = []
    for i, r in enumerate(rows):
        if int(r["t"]) != i:
            raise AdversaryError(f"scripted path: expected t={i}, got {r['t']}")
        cells.append(Cell(int(r["row"]), int(r["col"])))
    return cells


def write_scripted_path(cells, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "row", "col"])
        for t, c in enumerate(cells):
            w.writerow([t, c[0], c[1]])


def make_adversary(kind: str, world: GridWorld, spec, tab: Optional[TabField] = None,
                   seed: int = 0, *, epsilon: float = 0.2, path=None, adv_start=None,
                   horizon: Optional[int] = None) -> AdversaryPolicy:
    """Build an adversary for a mission given as a MissionSpec or a compiled automaton."""
    if isinstance(spec, ConstraintAutomaton):
        aut = spec
    else:
        if horizon is None:
            if tab is None:
                raise AdversaryError("a horizon is needed to compile the mission")
            horizon = tab.horizon
        aut = compile_automaton(spec, world, horizon)
    adv_start = adv_start if adv_start is not None else world.adv_start
    rng = np.random.default_rng(seed)
    if kind == "tab":
        if tab is None:
            raise AdversaryError("TAB-sampled adversary needs a TAB field")
        traj = sample_trajectory(tab, rng)
        return AdversaryPolicy(kind, traj, seed)
    if kind == "noisy":
        traj, attempts = noisy_shortest_path(world, aut, adv_start, epsilon, rng)
        return AdversaryPolicy(kind, traj, seed, attempts, {"epsilon": epsilon})
    if kind == "scripted":
        if path is None:
            raise AdversaryError("scripted adversary needs a path")
        cells = path if isinstance(path, list) else load_scripted_path(path)
        cells = [Cell(*c) for c in cells]
        if len(cells) != aut.horizon + 1:
            raise AdversaryError(f"scripted path has {len(cells)} cells, expected {aut.horizon + 1}")
        if adv_start is not None and cells[0] != Cell(*adv_start):
            raise AdversaryError("scripted path does not begin at the adversary start")
        if not evaluate_trajectory(aut, cells):
            raise AdversaryError("scripted path violates the mission")
        return AdversaryPolicy(kind, cells, seed)
    raise AdversaryError(f"unknown adversary kind {kind!r} (expected one of {KINDS})")


def adversary_next(policy: AdversaryPolicy, t: int) -> Cell:
    if not 0 <= t < policy.horizon:
        raise IndexError(f"t={t} is past the adversary horizon {policy.horizon}")
    return policy.trajectory[t + 1]
