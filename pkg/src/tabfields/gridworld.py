"""Discrete grid environment: geometry, ego dynamics, checkpoint observations, reward.

Map format (one character per cell, rows top to bottom)::

    .  free            #  obstacle         ~  restricted
    A-Z checkpoint     s  adversary start  g  ego start

Cells carrying ``s`` or ``g`` are free. Uppercase letters are checkpoint
labels; every checkpoint cell reveals the adversary's position exactly.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .errors import MapError

RESTRICTED_LABEL = "~"


class Cell(NamedTuple):
    row: int
    col: int


class Action(enum.IntEnum):
    """Ego moves, in row-major offset order (Stay sits in the middle)."""

    NW = 0
    N = 1
    NE = 2
    W = 3
    STAY = 4
    E = 5
    SW = 6
    S = 7
    SE = 8

    @property
    def delta(self) -> tuple[int, int]:
        return _OFFSETS[self.value]


_OFFSETS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)]
N_ACTIONS = len(_OFFSETS)


@dataclass(frozen=True)
class RewardParams:
    intercept_bonus: float = 50.0
    collision_penalty: float = -30.0
    step_penalty: float = -1.0
    move_cost: float = 0.1
    intercept_radius: int = 1
    gamma: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.gamma}")
        if self.intercept_radius < 0:
            raise ValueError("intercept_radius must be non-negative")


class JointState(NamedTuple):
    ego: Cell
    adv: Cell
    t: int


class Observation(NamedTuple):
    ego: Cell
    adv: Optional[Cell]


class StepOutcome(NamedTuple):
    state: JointState
    reward: float
    terminal: bool
    kind: Optional[str]  # "intercept" or None


@dataclass(frozen=True, eq=False)
class GridWorld:
    width: int
    height: int
    obstacles: frozenset = frozenset()
    restricted: frozenset = frozenset()
    checkpoints: dict = field(default_factory=dict)
    adv_start: Optional[Cell] = None
    ego_start: Optional[Cell] = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise MapError("grid dimensions must be positive")
        for group in (self.obstacles, self.restricted, *self.checkpoints.values()):
            for c in group:
                if not self.in_bounds(c):
                    raise MapError(f"cell {tuple(c)} out of bounds")
        for label, cells in self.checkpoints.items():
            if cells & self.obstacles:
                raise MapError(f"checkpoint {label!r} overlaps an obstacle")
        if self.restricted & self.obstacles:
            raise MapError("restricted cells must not be obstacles")

        cells = [Cell(r, c) for r in range(self.height) for c in range(self.width)
                 if (r, c) not in self.obstacles]
        if not cells:
            raise MapError("map has no free cells")
        index = {c: i for i, c in enumerate(cells)}
        n = len(cells)
        moves = np.full((n, N_ACTIONS), -1, dtype=np.int32)
        for i, (r, c) in enumerate(cells):
            for a, (dr, dc) in enumerate(_OFFSETS):
                j = index.get((r + dr, c + dc))
                if j is not None:
                    moves[i, a] = j
        checkpoint_mask = np.zeros(n, dtype=bool)
        for group in self.checkpoints.values():
            for c in group:
                checkpoint_mask[index[c]] = True
        for name in ("adv_start", "ego_start"):
            start = getattr(self, name)
            if start is not None and Cell(*start) not in index:
                raise MapError(f"{name} {tuple(start)} is not a free cell")

        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "move_table", moves)
        object.__setattr__(self, "checkpoint_mask", checkpoint_mask)
        object.__setattr__(self, "rows", np.array([c.row for c in cells], dtype=np.int32))
        object.__setattr__(self, "cols", np.array([c.col for c in cells], dtype=np.int32))

    # geometry ---------------------------------------------------------------

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def named_zones(self) -> dict:
        zones = dict(self.checkpoints)
        zones[RESTRICTED_LABEL] = self.restricted
        return zones

    def in_bounds(self, c) -> bool:
        return 0 <= c[0] < self.height and 0 <= c[1] < self.width

    def is_free(self, c) -> bool:
        return self.in_bounds(c) and tuple(c) not in self.obstacles

    def cell_index(self, c) -> int:
        try:
            return self.index[c]
        except KeyError:
            raise MapError(f"{tuple(c)} is not a free cell") from None

    def zone_mask(self, label: str) -> np.ndarray:
        """Boolean mask over free cells for a checkpoint label or ``~``."""
        zones = self.named_zones
        if label not in zones:
            raise KeyError(label)
        mask = np.zeros(self.n_cells, dtype=bool)
        for c in zones[label]:
            mask[self.index[c]] = True
        return mask

    def to_text(self) -> str:
        grid = [["." for _ in range(self.width)] for _ in range(self.height)]
        for r, c in self.obstacles:
            grid[r][c] = "#"
        for r, c in self.restricted:
            grid[r][c] = "~"
        for label, group in self.checkpoints.items():
            for r, c in group:
                grid[r][c] = label
        if self.adv_start is not None:
            grid[self.adv_start[0]][self.adv_start[1]] = "s"
        if self.ego_start is not None:
            grid[self.ego_start[0]][self.ego_start[1]] = "g"
        return "\n".join("".join(row) for row in grid) + "\n"


def parse_map(text: str) -> GridWorld:
    lines = [ln.rstrip("\r") for ln in text.strip("\n").split("\n")]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise MapError("empty map")
    width = len(lines[0])
    obstacles, restricted = set(), set()
    checkpoints: dict[str, set] = {}
    starts: dict[str, Cell] = {}
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MapError(f"ragged map: row {r} has length {len(line)}, expected {width}")
        for c, ch in enumerate(line):
            cell = Cell(r, c)
            if ch == ".":
                continue
            if ch == "#":
                obstacles.add(cell)
            elif ch == "~":
                restricted.add(cell)
            elif "A" <= ch <= "Z":
                checkpoints.setdefault(ch, set()).add(cell)
            elif ch in "sg":
                if ch in starts:
                    raise MapError(f"duplicate start marker {ch!r} at {tuple(cell)}")
                starts[ch] = cell
            else:
                raise MapError(f"unknown map character {ch!r} at row {r}, col {c}")
    if len(obstacles) == width * len(lines):
        raise MapError("map has no free cells")
    return GridWorld(
        width=width,
        height=len(lines),
        obstacles=frozenset(obstacles),
        restricted=frozenset(restricted),
        checkpoints={k: frozenset(v) for k, v in sorted(checkpoints.items())},
        adv_start=starts.get("s"),
        ego_start=starts.get("g"),
    )


def load_map(path) -> GridWorld:
    return parse_map(Path(path).read_text())


def feasible_moves(world: GridWorld, c) -> list[Cell]:
    """Stay plus free 8-neighbours of ``c``, row-major. Restricted cells included."""
    i = world.cell_index(Cell(*c))
    return [world.cells[j] for j in world.move_table[i] if j >= 0]


def chebyshev(a, b) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def is_interception(params: RewardParams, ego, adv, ego_prev=None, adv_prev=None) -> bool:
    if chebyshev(ego, adv) <= params.intercept_radius:
        return True
    # agents swapping cells pass through each other
    return ego_prev is not None and tuple(ego) == tuple(adv_prev) and tuple(adv) == tuple(ego_prev)


def apply_action(world: GridWorld, c, a) -> Optional[Cell]:
    j = world.move_table[world.cell_index(Cell(*c)), int(a)]
    return world.cells[j] if j >= 0 else None


def step(world: GridWorld, params: RewardParams, s: JointState, a, adv_next) -> StepOutcome:
    adv_next = Cell(*adv_next)
    if adv_next not in feasible_moves(world, s.adv):
        raise ValueError(f"adversary move {tuple(s.adv)} -> {tuple(adv_next)} is infeasible")
    a = Action(a)
    ego_next = apply_action(world, s.ego, a)
    reward = params.step_penalty
    if ego_next is None:
        ego_next = s.ego
        reward += params.collision_penalty
    elif a is not Action.STAY:
        reward -= params.move_cost
    hit = is_interception(params, ego_next, adv_next, s.ego, s.adv)
    if hit:
        reward += params.intercept_bonus
    return StepOutcome(JointState(ego_next, adv_next, s.t + 1), reward, hit,
                       "intercept" if hit else None)


def observe(world: GridWorld, s: JointState) -> Observation:
    i = world.index.get(tuple(s.adv))
    seen = i is not None and bool(world.checkpoint_mask[i])
    return Observation(ego=s.ego, adv=Cell(*s.adv) if seen else None)
