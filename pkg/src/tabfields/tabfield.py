"""Task-aware behavior fields.

The reference process Q is the uniform random walk over feasible moves. The
mission is an indicator on trajectories, so the KL projection of Q onto the
set of satisfying trajectory laws is Q conditioned on that event. It is
computed exactly with forward/backward messages on the product chain of
(cell, automaton state):

    beta_T(c, q)   = [q accepting]
    beta_t(c, q)   = sum_c' Q(c'|c) beta_{t+1}(c', delta(q, c', t+1))
    alpha_0(c, q)  = mu0(c) [q = delta(q0, c, 0)]
    P*_t(c)        = sum_q alpha_t(c, q) beta_t(c, q) / Z

beta is rescaled to unit maximum at every step; the log scale factors are
kept so that log Z is recovered exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
import scipy.sparse as sp

from .errors import EnumerationTooLarge, InfeasibleMission, ZeroSupport
from .gridworld import Cell, GridWorld, N_ACTIONS
from .mission import (ConstraintAutomaton, MissionSpec, compile_automaton)

MAX_BETA_ENTRIES = 50_000_000
MAX_ENUMERATED_PATHS = 10_000_000


@dataclass(frozen=True, eq=False)
class ReferenceProcess:
    world: GridWorld
    probs: np.ndarray = field(repr=False)  # (n, 9) Q(move slot | cell), 0 where infeasible
    matrix: sp.csr_matrix = field(repr=False)  # (n, n) Q(c' | c)

    def row(self, c) -> dict:
        i = self.world.cell_index(Cell(*c))
        return {self.world.cells[j]: float(p)
                for j, p in zip(self.world.move_table[i], self.probs[i]) if j >= 0}


def build_reference(world: GridWorld) -> ReferenceProcess:
    feasible = world.move_table >= 0
    probs = feasible / feasible.sum(axis=1, keepdims=True)
    rows, slots = np.nonzero(feasible)
    matrix = sp.csr_matrix((probs[rows, slots], (rows, world.move_table[rows, slots])),
                           shape=(world.n_cells, world.n_cells))
    return ReferenceProcess(world, probs, matrix)


def _as_automaton(world, spec_or_aut, T) -> ConstraintAutomaton:
    if isinstance(spec_or_aut, ConstraintAutomaton):
        if spec_or_aut.horizon != T:
            raise ValueError(f"automaton compiled for horizon {spec_or_aut.horizon}, not {T}")
        return spec_or_aut
    return compile_automaton(spec_or_aut, world, T)


def _initial(world: GridWorld, start) -> np.ndarray:
    """Initial distribution over free cells from a Cell, a {Cell: p} map or an array."""
    if isinstance(start, np.ndarray):
        mu = np.asarray(start, dtype=float)
    elif isinstance(start, dict):
        mu = np.zeros(world.n_cells)
        for c, p in start.items():
            mu[world.cell_index(Cell(*c))] += p
    else:
        mu = np.zeros(world.n_cells)
        mu[world.cell_index(Cell(*start))] = 1.0
    if mu.shape != (world.n_cells,) or (mu < 0).any() or not np.isclose(mu.sum(), 1.0):
        raise ValueError("initial distribution must be a probability vector over free cells")
    return mu


def _gather_next(beta_next: np.ndarray, delta_next: np.ndarray) -> np.ndarray:
    """G[c', q] = beta_next[c', delta_next[q, c']]."""
    n = beta_next.shape[0]
    return beta_next[np.arange(n)[:, None], delta_next.T]


def backward_pass(world: GridWorld, ref: ReferenceProcess, aut: ConstraintAutomaton, T: int):
    """Scaled backward messages.

    Returns ``(beta, log_scale)`` where the true message is
    ``beta[t] * exp(log_scale[t])``; ``beta`` has shape (T+1, cells, states).
    """
    n, nq = world.n_cells, aut.n_states
    if (T + 1) * n * nq > MAX_BETA_ENTRIES:
        raise MemoryError(f"backward messages would need {(T + 1) * n * nq} entries")
    beta = np.zeros((T + 1, n, nq))
    log_scale = np.zeros(T + 1)
    beta[T] = aut.accepting[None, :].astype(float)
    for t in range(T - 1, -1, -1):
        b = ref.matrix @ _gather_next(beta[t + 1], aut.delta[t + 1])
        m = b.max()
        if m > 0:
            b /= m
            log_scale[t] = log_scale[t + 1] + math.log(m)
        else:
            log_scale[t] = log_scale[t + 1]
        beta[t] = b
    return beta, log_scale


def forward_pass(world: GridWorld, ref: ReferenceProcess, aut: ConstraintAutomaton,
                 mu0: np.ndarray, T: int) -> np.ndarray:
    """Unconditioned joint law alpha_t(c, q) of (cell, automaton state) under Q."""
    n, nq = world.n_cells, aut.n_states
    alpha = np.zeros((T + 1, n, nq))
    alpha[0, np.arange(n), aut.delta[0, aut.q0]] = mu0
    qt = ref.matrix.T.tocsr()
    flat_c = np.repeat(np.arange(n), nq)
    for t in range(T):
        h = qt @ alpha[t]  # h[c', q] = sum_c Q(c'|c) alpha_t(c, q)
        dest = aut.delta[t + 1].T  # (n, nq): successor state per (c', q)
        alpha[t + 1] = np.bincount(flat_c * nq + dest.ravel(), weights=h.ravel(),
                                   minlength=n * nq).reshape(n, nq)
    return alpha


@dataclass(frozen=True, eq=False)
class TabField:
    world: GridWorld
    ref: ReferenceProcess
    aut: ConstraintAutomaton
    horizon: int
    mu0: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    beta_log_scale: np.ndarray = field(repr=False)
    marginals: np.ndarray = field(repr=False)  # (T+1, cells)
    log_Z: float = 0.0

    @property
    def T(self) -> int:
        return self.horizon

    def marginal(self, t: int) -> dict:
        return {c: float(p) for c, p in zip(self.world.cells, self.marginals[t]) if p > 0}

    def marginal_grid(self, t: int) -> np.ndarray:
        grid = np.zeros((self.world.height, self.world.width))
        grid[self.world.rows, self.world.cols] = self.marginals[t]
        return grid

    def joint(self, t: int) -> np.ndarray:
        """P*(cell, automaton state) at time t."""
        w = self.alpha[t] * self.beta[t]
        return w / w.sum()

    def support(self, t: int, c: int, q: int) -> bool:
        return self.beta[t, c, q] > 0

    def kernel_table(self):
        """Conditioned kernels for every t < T as arrays over model state cell*nq + q.

        Returns ``(next_state, cum)`` of shape (T, cells*nq, 9). Slots follow the
        row-major move order; zero-probability slots repeat the previous
        cumulative value, so "first slot with cum > u" never selects them.
        Only rows reachable from mu0 with nonzero support are filled; all other
        rows have ``next_state == -1``.
        """
        world, aut = self.world, self.aut
        n, nq, T = world.n_cells, aut.n_states, self.horizon
        nxt = np.full((max(T, 1), n * nq, N_ACTIONS), -1, dtype=np.int32)
        cum = np.ones((max(T, 1), n * nq, N_ACTIONS))
        if T == 0:
            return nxt, cum
        moves = world.move_table
        valid = moves >= 0
        safe = np.where(valid, moves, 0)
        probs = np.where(valid, self.ref.probs, 0.0)
        live = (self.alpha[:-1] > 0) & (self.beta[:-1] > 0)
        t, c, q = np.nonzero(live)
        dest = safe[c]  # (L, 9)
        qn = aut.delta[t[:, None] + 1, q[:, None], dest]
        w = self.beta[t[:, None] + 1, dest, qn] * probs[c]
        cw = np.cumsum(w, axis=1)
        cw /= cw[:, -1:]
        rows = c * nq + q
        nxt[t, rows] = dest * nq + qn
        cum[t, rows] = cw
        return nxt, cum


def pack_rows(next_state: np.ndarray, prob: np.ndarray):
    """Move positive-probability slots to the front (stable) and build cumulative sums.

    The last positive slot of every non-empty row gets a cumulative value of
    exactly 1.0, padding slots get 1.0 and next state -1.
    """
    order = np.argsort(prob <= 0, axis=-1, kind="stable")
    ns = np.take_along_axis(next_state, order, axis=-1)
    pp = np.take_along_axis(prob, order, axis=-1)
    pos = pp > 0
    c = np.where(pos, np.cumsum(pp, axis=-1), 1.0)
    count = pos.sum(axis=-1)
    rows = np.nonzero(count > 0)
    c[rows + (count[rows] - 1,)] = 1.0
    ns = np.where(pos, ns, -1).astype(np.int32)
    return ns, c


def compute_tabfield(world: GridWorld, ref: ReferenceProcess,
                     spec: Union[MissionSpec, ConstraintAutomaton], adv_start, T: int) -> TabField:
    aut = _as_automaton(world, spec, T)
    mu0 = _initial(world, adv_start)
    beta, log_scale = backward_pass(world, ref, aut, T)
    alpha = forward_pass(world, ref, aut, mu0, T)
    z0 = float((alpha[0] * beta[0]).sum())
    if z0 <= 0:
        raise InfeasibleMission("no trajectory satisfies the mission from the given start")
    marg = (alpha * beta).sum(axis=2)
    marg /= marg.sum(axis=1, keepdims=True)
    return TabField(world, ref, aut, T, mu0, alpha, beta, log_scale, marg,
                    log_Z=math.log(z0) + float(log_scale[0]))


def conditioned_kernel(tab: TabField, t: int, c, q: int) -> dict:
    """{(cell', q'): probability} of the conditioned chain at step t -> t+1."""
    if not 0 <= t < tab.horizon:
        raise ValueError(f"t={t} outside [0, {tab.horizon})")
    world, aut = tab.world, tab.aut
    i = world.cell_index(Cell(*c))
    if tab.beta[t, i, q] <= 0:
        raise ZeroSupport(f"state ({tuple(c)}, q={q}) has zero support at t={t}")
    out, total = {}, 0.0
    for j, p in zip(world.move_table[i], tab.ref.probs[i]):
        if j < 0:
            continue
        qn = int(aut.delta[t + 1, q, j])
        w = p * tab.beta[t + 1, j, qn]
        if w > 0:
            out[(world.cells[j], qn)] = w
            total += w
    return {k: v / total for k, v in out.items()}


def sample_trajectory(tab: TabField, rng: np.random.Generator) -> list:
    world, aut = tab.world, tab.aut
    p0 = tab.joint(0)
    n, nq = p0.shape
    k = rng.choice(n * nq, p=p0.ravel())
    c, q = divmod(int(k), nq)
    path = [world.cells[c]]
    for t in range(tab.horizon):
        row = conditioned_kernel(tab, t, world.cells[c], q)
        keys = list(row)
        pick = rng.choice(len(keys), p=np.fromiter(row.values(), float, len(keys)))
        cell, q = keys[pick]
        c = world.index[cell]
        path.append(cell)
    return path


def reference_marginals(ref: ReferenceProcess, mu0, T: int) -> np.ndarray:
    """Marginals of the unconstrained reference chain (matrix powers)."""
    mu = _initial(ref.world, mu0)
    dense = ref.matrix.toarray()
    out = [mu]
    for _ in range(T):
        out.append(out[-1] @ dense)
    return np.array(out)


def count_paths(ref: ReferenceProcess, mu0: np.ndarray, T: int) -> int:
    adj = (ref.matrix.toarray() > 0).astype(object)
    v = np.array([int(x > 0) for x in mu0], dtype=object)
    for _ in range(T):
        v = v.dot(adj)
    return int(sum(v))


def brute_force_marginals(world: GridWorld, ref: ReferenceProcess,
                          spec: Union[MissionSpec, ConstraintAutomaton], adv_start, T: int,
                          max_paths: int = MAX_ENUMERATED_PATHS) -> np.ndarray:
    """Per-timestep marginals by explicit enumeration of every Q-positive path.

    Each path is weighted by mu0 and the product of its Q factors, kept iff the
    automaton accepts it, and the kept weights are renormalized.
    """
    aut = _as_automaton(world, spec, T)
    mu0 = _initial(world, adv_start)
    total = count_paths(ref, mu0, T)
    if total > max_paths:
        raise EnumerationTooLarge(f"{total} paths exceed the enumeration cap {max_paths}")
    moves = world.move_table
    starts = np.nonzero(mu0 > 0)[0]
    paths = starts[:, None].astype(np.int32)
    weight = mu0[starts].copy()
    q = aut.delta[0, aut.q0, starts].astype(np.int32)
    for t in range(1, T + 1):
        cur = paths[:, -1]
        cand = moves[cur]  # (npaths, 9)
        prob = ref.probs[cur]
        keep = cand >= 0
        src = np.nonzero(keep)
        nxt = cand[keep]
        paths = np.concatenate([paths[src[0]], nxt[:, None]], axis=1)
        weight = weight[src[0]] * prob[keep]
        q = aut.delta[t, q[src[0]], nxt]
    ok = aut.accepting[q]
    w = np.where(ok, weight, 0.0)
    if w.sum() <= 0:
        raise InfeasibleMission("every enumerated path violates the mission")
    w = w / w.sum()
    marg = np.zeros((T + 1, world.n_cells))
    for t in range(T + 1):
        marg[t] = np.bincount(paths[:, t], weights=w, minlength=world.n_cells)
    return marg


def enumerate_paths(world: GridWorld, start, T: int):
    """Yield every feasible cell path of length T+1 from ``start`` (small grids only)."""
    def rec(path):
        if len(path) == T + 1:
            yield list(path)
            return
        i = world.index[path[-1]]
        for j in world.move_table[i]:
            if j >= 0:
                path.append(world.cells[j])
                yield from rec(path)
                path.pop()
    yield from rec([Cell(*start)])


# --- emission -------------------------------------------------------------------

def write_tabfield(tab: TabField, out_dir, scale: int = 1) -> list:
    """One CSV (row, col, probability) and one PGM heatmap per timestep.

    Heatmaps are max-normalized per timestep; darker pixels mean higher
    probability, obstacles are drawn mid-grey.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    world = tab.world
    width = len(str(tab.horizon))
    for t in range(tab.horizon + 1):
        stem = f"t{t:0{max(3, width)}d}"
        csv_path = out / f"{stem}.csv"
        lines = ["row,col,probability"]
        for c, p in zip(world.cells, tab.marginals[t]):
            lines.append(f"{c.row},{c.col},{p:.12g}")
        csv_path.write_text("\n".join(lines) + "\n")
        grid = tab.marginal_grid(t)
        peak = grid.max()
        shade = 255 - np.rint(255 * grid / peak).astype(int) if peak > 0 else np.full(grid.shape, 255)
        for r, c in world.obstacles:
            shade[r, c] = 128
        shade = np.kron(shade, np.ones((scale, scale), dtype=int))
        pgm = [f"P2\n{shade.shape[1]} {shade.shape[0]}\n255"]
        pgm += [" ".join(str(v) for v in row) for row in shade]
        pgm_path = out / f"{stem}.pgm"
        pgm_path.write_text("\n".join(pgm) + "\n")
        written += [csv_path, pgm_path]
    return written
