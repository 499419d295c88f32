"""Pure-Python POMCP search kernel.

Mirrors ``_core.pyx`` operation for operation (same RNG stream, same
floating-point order), so both backends return identical statistics.
"""
import math

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_INV53 = 1.0 / 9007199254740992.0


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next_u64() >> 11) * _INV53


class _Search:
    def __init__(self, ego_moves, feas_actions, feas_count, rows, cols, checkpoint,
                 nxt, cum, state_cell, horizon, step_penalty, move_cost, intercept_bonus,
                 radius, gamma, uct_c, max_depth, seed, capacity):
        self.ego_moves = ego_moves.tolist()
        self.feas_actions = feas_actions.tolist()
        self.feas_count = feas_count.tolist()
        self.rows = rows.tolist()
        self.cols = cols.tolist()
        self.checkpoint = checkpoint.tolist()
        self.nxt = nxt.tolist()
        self.cum = cum.tolist()
        self.n_layers = len(self.nxt)
        self.state_cell = state_cell.tolist()
        self.horizon = horizon
        self.step_penalty = step_penalty
        self.move_cost = move_cost
        self.bonus = intercept_bonus
        self.radius = radius
        self.gamma = gamma
        self.uct_c = uct_c
        self.max_depth = max_depth
        self.rng = SplitMix64(seed)
        self.node_n = [0] * capacity
        self.act_n = [[0] * 9 for _ in range(capacity)]
        self.act_v = [[0.0] * 9 for _ in range(capacity)]
        self.children = [[None] * 9 for _ in range(capacity)]  # per action: list of (obs, node)
        self.n_nodes = 1

    def adv_step(self, m, t):
        layer = t if t < self.n_layers else self.n_layers - 1
        nxt = self.nxt[layer][m]
        if nxt[0] < 0:
            return m
        u = self.rng.uniform()
        cum = self.cum[layer][m]
        for j in range(9):
            if cum[j] > u:
                return nxt[j]
        return nxt[0]

    def reward(self, ego, ego2, adv, adv2):
        r = self.step_penalty
        if ego2 != ego:
            r -= self.move_cost
        dr = abs(self.rows[ego2] - self.rows[adv2])
        dc = abs(self.cols[ego2] - self.cols[adv2])
        hit = max(dr, dc) <= self.radius or (ego2 == adv and adv2 == ego)
        if hit:
            r += self.bonus
        return r, hit

    def select(self, node, ego):
        n_parent = self.node_n[node]
        counts = self.act_n[node]
        values = self.act_v[node]
        acts = self.feas_actions[ego]
        for k in range(self.feas_count[ego]):
            if counts[acts[k]] == 0:
                return acts[k]
        log_n = math.log(n_parent)
        best, best_score = -1, -math.inf
        for k in range(self.feas_count[ego]):
            a = acts[k]
            score = values[a] + self.uct_c * math.sqrt(log_n / counts[a])
            if score > best_score:
                best, best_score = a, score
        return best

    def rollout(self, ego, m, t, depth):
        total = 0.0
        disc = 1.0
        while depth < self.max_depth and t < self.horizon:
            cnt = self.feas_count[ego]
            k = int(self.rng.uniform() * cnt)
            if k >= cnt:
                k = cnt - 1
            ego2 = self.ego_moves[ego][self.feas_actions[ego][k]]
            m2 = self.adv_step(m, t)
            r, hit = self.reward(ego, ego2, self.state_cell[m], self.state_cell[m2])
            total += disc * r
            if hit:
                break
            disc *= self.gamma
            ego, m = ego2, m2
            t += 1
            depth += 1
        return total

    def simulate(self, node, ego, m, t, depth):
        if depth >= self.max_depth or t >= self.horizon:
            return 0.0
        a = self.select(node, ego)
        ego2 = self.ego_moves[ego][a]
        m2 = self.adv_step(m, t)
        adv2 = self.state_cell[m2]
        r, hit = self.reward(ego, ego2, self.state_cell[m], adv2)
        if hit:
            ret = r
        else:
            obs = adv2 if self.checkpoint[adv2] else -1
            edges = self.children[node][a]
            child = -1
            if edges is not None:
                for o, c in edges:
                    if o == obs:
                        child = c
                        break
            if child < 0:
                child = self.n_nodes
                self.n_nodes += 1
                if edges is None:
                    self.children[node][a] = [(obs, child)]
                else:
                    edges.append((obs, child))
                ret = r + self.gamma * self.rollout(ego2, m2, t + 1, depth + 1)
            else:
                ret = r + self.gamma * self.simulate(child, ego2, m2, t + 1, depth + 1)
        self.node_n[node] += 1
        self.act_n[node][a] += 1
        self.act_v[node][a] += (ret - self.act_v[node][a]) / self.act_n[node][a]
        return ret


def search(ego_moves, feas_actions, feas_count, rows, cols, checkpoint, nxt, cum, state_cell,
           particle_states, particle_cum, ego, t0, horizon, step_penalty, move_cost,
           intercept_bonus, radius, gamma, num_sims, uct_c, max_depth, seed):
    s = _Search(ego_moves, feas_actions, feas_count, rows, cols, checkpoint, nxt, cum,
                state_cell, horizon, step_penalty, move_cost, intercept_bonus, radius, gamma,
                uct_c, max_depth, seed, num_sims + 1)
    pstates = particle_states.tolist()
    pcum = particle_cum.tolist()
    n_part = len(pstates)
    for _ in range(num_sims):
        u = s.rng.uniform()
        lo, hi = 0, n_part - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if pcum[mid] > u:
                hi = mid
            else:
                lo = mid + 1
        s.simulate(0, ego, pstates[lo], t0, 0)
    return (np.array(s.act_n[0], dtype=np.int64), np.array(s.act_v[0], dtype=np.float64))
