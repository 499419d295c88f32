"""Particle beliefs over the adversary, adversary transition models and POMCP.

Every adversary model exposes its transitions as padded tables over integer
model states, which is what the search kernel consumes:

* ``next_state[layer, m, j]`` / ``cum[layer, m, j]`` -- successor states and
  cumulative probabilities (9 slots, -1 padding); layer ``min(t, L-1)``
  governs the step t -> t+1.
* ``state_cell[m]`` -- free-cell index of model state m.

The TAB model's states are (cell, automaton state) pairs; the baselines'
states are plain cells.
"""
from __future__ import annotations

import functools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import core
from .errors import InfeasibleMission, ZeroSupport
from .gridworld import Action, Cell, GridWorld, Observation, RewardParams, N_ACTIONS
from .mission import CType, MissionSpec, compile_automaton, evaluate_trajectory, REACH_TYPES
from .tabfield import TabField, build_reference, pack_rows

PLANNERS = ("tab", "s", "fp", "mle")


class Particle(NamedTuple):
    adv: Cell
    q: int
    weight: float


@dataclass
class Belief:
    world: GridWorld
    t: int
    adv: np.ndarray  # free-cell indices
    q: np.ndarray
    w: np.ndarray

    @property
    def n(self) -> int:
        return len(self.adv)

    def particles(self) -> list:
        return [Particle(self.world.cells[c], int(q), float(w))
                for c, q, w in zip(self.adv, self.q, self.w)]

    def cell_distribution(self) -> np.ndarray:
        return np.bincount(self.adv, weights=self.w, minlength=self.world.n_cells)

    def ess(self) -> float:
        return 1.0 / float(np.sum(self.w ** 2))


@dataclass(frozen=True)
class PomcpConfig:
    num_sims: int = 2000
    uct_c: float = 75.0
    max_depth: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.num_sims < 1 or self.max_depth < 1:
            raise ValueError("num_sims and max_depth must be at least 1")


# --- adversary models ------------------------------------------------------------

class AdvModel:
    kind = "base"
    horizon: Optional[int] = None

    def __init__(self, world: GridWorld, aut=None):
        self.world = world
        self.aut = aut

    def tables(self):
        raise NotImplementedError

    def state_index(self, adv: np.ndarray, q: np.ndarray) -> np.ndarray:
        return np.asarray(adv, dtype=np.int32)

    def split_state(self, m: np.ndarray, q_prev: np.ndarray, t_next: int):
        adv = np.asarray(m, dtype=np.int64)
        if self.aut is not None and t_next <= self.aut.horizon:
            q = self.aut.delta[t_next, q_prev, adv]
        else:
            q = q_prev
        return adv, q

    def advance(self, t: int, adv: np.ndarray, q: np.ndarray, rng: np.random.Generator):
        """Sample (adv', q') for a batch of particles at time t."""
        nxt, cum, _ = self.tables()
        layer = min(t, nxt.shape[0] - 1)
        m = self.state_index(adv, q)
        rows, cums = nxt[layer, m], cum[layer, m]
        if (rows[:, 0] < 0).any():
            bad = int(np.nonzero(rows[:, 0] < 0)[0][0])
            raise ZeroSupport(f"particle {bad} at cell {self.world.cells[adv[bad]]}, "
                              f"q={int(q[bad])} has no admissible successor at t={t}")
        u = rng.random(len(m))
        j = np.minimum((cums <= u[:, None]).sum(axis=1), N_ACTIONS - 1)
        m2 = rows[np.arange(len(m)), j]
        return self.split_state(m2, q, t + 1)

    def next_adv(self, t: int, adv, q: int, rng: np.random.Generator):
        a, qn = self.advance(t, np.array([self.world.cell_index(Cell(*adv))]), np.array([q]), rng)
        return self.world.cells[int(a[0])], int(qn[0])


class TabModel(AdvModel):
    kind = "tab"

    def __init__(self, tab: TabField):
        super().__init__(tab.world, tab.aut)
        self.tab = tab
        self.horizon = tab.horizon
        nxt, cum = tab.kernel_table()
        nq = tab.aut.n_states
        self._tables = (nxt, cum, np.repeat(np.arange(tab.world.n_cells, dtype=np.int32), nq))

    def tables(self):
        return self._tables

    def state_index(self, adv, q):
        return (np.asarray(adv) * self.aut.n_states + np.asarray(q)).astype(np.int32)

    def split_state(self, m, q_prev, t_next):
        m = np.asarray(m, dtype=np.int64)
        return m // self.aut.n_states, m % self.aut.n_states


class UniformModel(AdvModel):
    kind = "s"

    def __init__(self, world: GridWorld, aut=None):
        super().__init__(world, aut)
        ref = build_reference(world)
        nxt, cum = pack_rows(np.where(world.move_table >= 0, world.move_table, -1), ref.probs)
        self._tables = (nxt[None], cum[None], np.arange(world.n_cells, dtype=np.int32))

    def tables(self):
        return self._tables


class FixedPathModel(AdvModel):
    """Deterministic shortest-path adversary.

    A particle on the planned path follows it; a particle elsewhere takes one
    shortest-path step toward the planned cell of the next time step.
    """

    kind = "fp"

    def __init__(self, world: GridWorld, aut, path: list):
        super().__init__(world, aut)
        self.path = list(path)
        self.horizon = len(path) - 1
        passable = ~_forbidden_mask(world, aut.spec)
        n = world.n_cells
        T = self.horizon
        nxt = np.full((max(T, 1), n, N_ACTIONS), -1, dtype=np.int32)
        cum = np.ones((max(T, 1), n, N_ACTIONS))
        hops = {}
        for t in range(T):
            target = world.index[self.path[t + 1]]
            if target not in hops:
                hops[target] = next_hop_table(world, target, passable)
            nxt[t, :, 0] = hops[target]
        if T == 0:
            nxt[0, :, 0] = np.arange(n)
        self._tables = (nxt, cum, np.arange(n, dtype=np.int32))

    def tables(self):
        return self._tables


class MLEModel(AdvModel):
    """Transition counts per (cell, move) with a symmetric Dirichlet prior."""

    kind = "mle"

    def __init__(self, world: GridWorld, prior_pseudocount: float = 1.0, aut=None):
        if prior_pseudocount <= 0:
            raise ValueError("prior_pseudocount must be positive")
        super().__init__(world, aut)
        self.prior = prior_pseudocount
        self.counts = np.where(world.move_table >= 0, float(prior_pseudocount), 0.0)
        self.anomalies = 0
        self.recorded = 0
        self._cache = None

    def probabilities(self) -> np.ndarray:
        return self.counts / self.counts.sum(axis=1, keepdims=True)

    def tables(self):
        if self._cache is None:
            nxt, cum = pack_rows(np.where(self.world.move_table >= 0, self.world.move_table, -1),
                                 self.probabilities())
            self._cache = (nxt[None], cum[None], np.arange(self.world.n_cells, dtype=np.int32))
        return self._cache

    def record(self, src, dst) -> bool:
        i = self.world.index.get(tuple(src))
        j = self.world.index.get(tuple(dst))
        slots = np.nonzero(self.world.move_table[i] == j)[0] if i is not None and j is not None else []
        if len(slots) == 0:
            self.anomalies += 1
            return False
        self.counts[i, slots[0]] += 1.0
        self.recorded += 1
        self._cache = None
        return True


def make_tab_model(tab: TabField) -> TabModel:
    return TabModel(tab)


def make_uniform_model(world: GridWorld, aut=None) -> UniformModel:
    return UniformModel(world, aut)


def make_mle_model(world: GridWorld, prior_pseudocount: float = 1.0, aut=None) -> MLEModel:
    return MLEModel(world, prior_pseudocount, aut)


def mle_record(model: MLEModel, src, dst) -> bool:
    return model.record(src, dst)


def make_fixed_path_model(world: GridWorld, spec: MissionSpec, adv_start, T: int) -> FixedPathModel:
    aut = compile_automaton(spec, world, T)
    return FixedPathModel(world, aut, shortest_mission_path(world, aut, adv_start))


# --- shortest paths --------------------------------------------------------------

def _forbidden_mask(world: GridWorld, spec: MissionSpec) -> np.ndarray:
    mask = np.zeros(world.n_cells, dtype=bool)
    for ct in spec.tuples:
        for z in ct.forbidden:
            mask |= world.zone_mask(z)
    return mask


def bfs_to_region(world: GridWorld, src: int, goal: np.ndarray, passable: np.ndarray):
    """Shortest cell-index path from src to the first goal cell met in BFS order.

    Neighbours are expanded in row-major order, which fixes tie-breaking.
    """
    if goal[src]:
        return [src]
    parent = {src: -1}
    frontier = deque([src])
    while frontier:
        c = frontier.popleft()
        for j in world.move_table[c]:
            j = int(j)
            if j < 0 or j in parent or not passable[j]:
                continue
            parent[j] = c
            if goal[j]:
                path = [j]
                while parent[path[-1]] >= 0:
                    path.append(parent[path[-1]])
                return path[::-1]
            frontier.append(j)
    return None


def distances_to(world: GridWorld, target: int, passable: np.ndarray) -> np.ndarray:
    dist = np.full(world.n_cells, np.inf)
    dist[target] = 0
    frontier = deque([target])
    while frontier:
        c = frontier.popleft()
        for j in world.move_table[c]:
            if j >= 0 and passable[j] and dist[j] == np.inf:
                dist[j] = dist[c] + 1
                frontier.append(int(j))
    return dist


def next_hop_table(world: GridWorld, target: int, passable: np.ndarray) -> np.ndarray:
    dist = distances_to(world, target, passable)
    hop = np.arange(world.n_cells, dtype=np.int32)
    for c in range(world.n_cells):
        best, best_d = c, dist[c]
        for j in world.move_table[c]:
            if j >= 0 and dist[j] < best_d:
                best, best_d = int(j), dist[j]
        hop[c] = best
    return hop


def shortest_mission_path(world: GridWorld, aut, adv_start) -> list:
    """Deterministic shortest-path trajectory through the ordered reach goals.

    Stays in place through ``stay .. until`` clauses, waits at the goal for
    exact-time clauses, parks on the recurrent goal when there is no reach
    clause, and pads with Stay to the horizon.
    """
    spec, T = aut.spec, aut.horizon
    passable = ~_forbidden_mask(world, spec)
    cur = world.cell_index(Cell(*adv_start))
    path = [cur]
    untils = [ct.time for ct in spec.tuples if ct.ctype is CType.UNTIL]
    if untils:
        path += [cur] * max(untils)
    targets = [ct for ct in spec.tuples if ct.ctype in REACH_TYPES]
    if not targets:
        targets = [ct for ct in spec.tuples if ct.ctype is CType.RECURRENT][:1]
    for ct in targets:
        seg = bfs_to_region(world, path[-1], world.zone_mask(ct.goal), passable)
        if seg is None:
            raise InfeasibleMission(f"no path to region {ct.goal!r}")
        path += seg[1:]
        if ct.ctype is CType.EXACT_TIME:
            if len(path) - 1 > ct.time:
                raise InfeasibleMission(f"region {ct.goal!r} unreachable by t={ct.time}")
            path += [path[-1]] * (ct.time - (len(path) - 1))
    path += [path[-1]] * (T + 1 - len(path))
    cells = [world.cells[c] for c in path[:T + 1]]
    if not evaluate_trajectory(aut, cells):
        raise InfeasibleMission("the shortest-path policy cannot satisfy the mission")
    return cells


# --- beliefs -------------------------------------------------------------------------

def init_belief(tab: TabField, n: int, rng: Optional[np.random.Generator] = None) -> Belief:
    """n particles from the conditioned initial law over (cell, automaton state)."""
    if n < 1:
        raise ValueError("need at least one particle")
    p0 = tab.joint(0).ravel()
    if not np.isfinite(p0).all() or p0.sum() <= 0:
        raise InfeasibleMission("TAB field has no support")
    nq = tab.aut.n_states
    support = np.nonzero(p0)[0]
    if len(support) == 1:
        k = np.full(n, support[0])
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        k = rng.choice(len(p0), size=n, p=p0)
    return Belief(tab.world, 0, (k // nq).astype(np.int64), (k % nq).astype(np.int64),
                  np.full(n, 1.0 / n))


def point_belief(world: GridWorld, cell, n: int, q: int = 0, t: int = 0) -> Belief:
    c = world.cell_index(Cell(*cell))
    return Belief(world, t, np.full(n, c, dtype=np.int64), np.full(n, q, dtype=np.int64),
                  np.full(n, 1.0 / n))


def belief_predict(b: Belief, model: AdvModel, rng: np.random.Generator) -> Belief:
    adv, q = model.advance(b.t, b.adv, b.q, rng)
    return Belief(b.world, b.t + 1, np.asarray(adv, dtype=np.int64),
                  np.asarray(q, dtype=np.int64), b.w.copy())


def belief_update(b: Belief, obs: Observation, tab: Optional[TabField] = None,
                  rng: Optional[np.random.Generator] = None) -> Belief:
    """Exact-observation reweighting with checkpoint-miss evidence.

    A sighting at z keeps only particles at z; if none are there the belief is
    rebuilt at z with automaton states drawn from the TAB joint at z (or kept
    as they are without a TAB field). A non-sighting zeroes particles sitting
    on checkpoints unless that would empty the belief.
    """
    world = b.world
    if obs.adv is not None:
        z = world.cell_index(Cell(*obs.adv))
        lik = (b.adv == z).astype(float)
        w = b.w * lik
        if w.sum() > 0:
            return Belief(world, b.t, b.adv.copy(), b.q.copy(), w / w.sum())
        q = b.q.copy()
        if tab is not None and b.t <= tab.horizon:
            pq = tab.alpha[b.t, z] * tab.beta[b.t, z]
            if pq.sum() > 0:
                rng = rng if rng is not None else np.random.default_rng(0)
                q = rng.choice(len(pq), size=b.n, p=pq / pq.sum()).astype(np.int64)
        return Belief(world, b.t, np.full(b.n, z, dtype=np.int64), q, np.full(b.n, 1.0 / b.n))
    w = b.w * ~world.checkpoint_mask[b.adv]
    if w.sum() > 0:
        return Belief(world, b.t, b.adv.copy(), b.q.copy(), w / w.sum())
    return Belief(world, b.t, b.adv.copy(), b.q.copy(), b.w.copy())


def resample(b: Belief, rng: np.random.Generator, threshold: float = 0.5) -> Belief:
    """Systematic resampling when the effective sample size drops below threshold*N."""
    if b.ess() >= threshold * b.n:
        return b
    cum = np.cumsum(b.w)
    cum[-1] = 1.0
    pos = (rng.random() + np.arange(b.n)) / b.n
    idx = np.searchsorted(cum, pos, side="right")
    return Belief(b.world, b.t, b.adv[idx], b.q[idx], np.full(b.n, 1.0 / b.n))


# --- POMCP ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _ego_tables(world: GridWorld):
    moves = world.move_table
    feas = np.zeros_like(moves)
    count = np.zeros(world.n_cells, dtype=np.int32)
    for c in range(world.n_cells):
        acts = [a for a in range(N_ACTIONS) if moves[c, a] >= 0]
        feas[c, :len(acts)] = acts
        count[c] = len(acts)
    return (np.ascontiguousarray(moves, dtype=np.int32), np.ascontiguousarray(feas, dtype=np.int32),
            count, world.rows, world.cols, world.checkpoint_mask.astype(np.uint8))


class SearchResult(NamedTuple):
    action: Action
    visits: np.ndarray
    values: np.ndarray


def pomcp_search(world: GridWorld, params: RewardParams, ego, b: Belief, model: AdvModel,
                 cfg: PomcpConfig, horizon: Optional[int] = None, kernel=None) -> SearchResult:
    if horizon is None:
        horizon = model.horizon if model.horizon is not None else b.t + cfg.max_depth
    moves, feas, count, rows, cols, checkpoint = _ego_tables(world)
    e = world.cell_index(Cell(*ego))
    if b.t >= horizon:
        return SearchResult(Action.STAY, np.zeros(N_ACTIONS, dtype=np.int64), np.zeros(N_ACTIONS))
    keep = b.w > 0
    if not keep.any():
        raise ValueError("belief has no positive-weight particle")
    states = model.state_index(b.adv[keep], b.q[keep]).astype(np.int32)
    cum = np.cumsum(b.w[keep])
    cum /= cum[-1]
    cum[-1] = 1.0
    nxt, kcum, state_cell = model.tables()
    kernel = kernel or core.search
    visits, values = kernel(moves, feas, count, rows, cols, checkpoint,
                            np.ascontiguousarray(nxt), np.ascontiguousarray(kcum),
                            np.ascontiguousarray(state_cell, dtype=np.int32),
                            np.ascontiguousarray(states), cum, e, b.t, horizon,
                            params.step_penalty, params.move_cost, params.intercept_bonus,
                            params.intercept_radius, params.gamma, cfg.num_sims, cfg.uct_c,
                            cfg.max_depth, int(cfg.seed) & 0xFFFFFFFFFFFFFFFF)
    return SearchResult(Action(int(np.argmax(visits))), visits, values)


def pomcp_plan(world: GridWorld, params: RewardParams, ego, b: Belief, model: AdvModel,
               cfg: PomcpConfig, horizon: Optional[int] = None) -> Action:
    return pomcp_search(world, params, ego, b, model, cfg, horizon).action
