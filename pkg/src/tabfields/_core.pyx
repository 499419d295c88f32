# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled POMCP search kernel; see _pycore.py for the reference implementation."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, INFINITY
from libc.stdlib cimport malloc, calloc, free
from libc.stdint cimport uint64_t, int64_t, int32_t, uint8_t

cnp.import_array()


cdef inline double _uniform(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    z = z ^ (z >> 31)
    return <double>(z >> 11) * (1.0 / 9007199254740992.0)


cdef struct Tree:
    int64_t* node_n
    int64_t* act_n
    double* act_v
    int32_t* head      # first edge per (node, action), -1 if none
    int32_t* edge_obs
    int32_t* edge_child
    int32_t* edge_next
    int n_nodes
    int n_edges


cdef struct Model:
    const int32_t* ego_moves
    const int32_t* feas_actions
    const int32_t* feas_count
    const int32_t* rows
    const int32_t* cols
    const uint8_t* checkpoint
    const int32_t* nxt
    const double* cum
    const int32_t* state_cell
    int n_layers
    int n_states
    int width
    int horizon
    double step_penalty
    double move_cost
    double bonus
    int radius
    double gamma
    double uct_c
    int max_depth
    uint64_t rng


cdef inline int _adv_step(Model* M, int m, int t) noexcept nogil:
    cdef int layer = t if t < M.n_layers else M.n_layers - 1
    cdef Py_ssize_t base = (<Py_ssize_t>layer * M.n_states + m) * M.width
    cdef int j
    cdef double u
    if M.nxt[base] < 0:
        return m
    u = _uniform(&M.rng)
    for j in range(M.width):
        if M.cum[base + j] > u:
            return M.nxt[base + j]
    return M.nxt[base]


cdef inline double _reward(Model* M, int ego, int ego2, int adv, int adv2, int* hit) noexcept nogil:
    cdef double r = M.step_penalty
    cdef int dr, dc, d
    if ego2 != ego:
        r -= M.move_cost
    dr = M.rows[ego2] - M.rows[adv2]
    dc = M.cols[ego2] - M.cols[adv2]
    if dr < 0:
        dr = -dr
    if dc < 0:
        dc = -dc
    d = dr if dr > dc else dc
    hit[0] = 1 if (d <= M.radius or (ego2 == adv and adv2 == ego)) else 0
    if hit[0]:
        r += M.bonus
    return r


cdef inline int _select(Model* M, Tree* T, int node, int ego) noexcept nogil:
    cdef int cnt = M.feas_count[ego]
    cdef const int32_t* acts = M.feas_actions + ego * 9
    cdef int k, a, best = -1
    cdef double log_n, score, best_score = -INFINITY
    for k in range(cnt):
        if T.act_n[node * 9 + acts[k]] == 0:
            return acts[k]
    log_n = log(<double>T.node_n[node])
    for k in range(cnt):
        a = acts[k]
        score = T.act_v[node * 9 + a] + M.uct_c * sqrt(log_n / <double>T.act_n[node * 9 + a])
        if score > best_score:
            best = a
            best_score = score
    return best


cdef double _rollout(Model* M, int ego, int m, int t, int depth) noexcept nogil:
    cdef double total = 0.0, disc = 1.0, r
    cdef int cnt, k, ego2, m2, hit
    while depth < M.max_depth and t < M.horizon:
        cnt = M.feas_count[ego]
        k = <int>(_uniform(&M.rng) * cnt)
        if k >= cnt:
            k = cnt - 1
        ego2 = M.ego_moves[ego * 9 + M.feas_actions[ego * 9 + k]]
        m2 = _adv_step(M, m, t)
        r = _reward(M, ego, ego2, M.state_cell[m], M.state_cell[m2], &hit)
        total += disc * r
        if hit:
            break
        disc *= M.gamma
        ego = ego2
        m = m2
        t += 1
        depth += 1
    return total


cdef double _simulate(Model* M, Tree* T, int node, int ego, int m, int t, int depth) noexcept nogil:
    cdef int a, ego2, m2, adv2, hit, obs, e, child, a_e
    cdef double r, ret
    cdef Py_ssize_t slot
    if depth >= M.max_depth or t >= M.horizon:
        return 0.0
    a = _select(M, T, node, ego)
    ego2 = M.ego_moves[ego * 9 + a]
    m2 = _adv_step(M, m, t)
    adv2 = M.state_cell[m2]
    r = _reward(M, ego, ego2, M.state_cell[m], adv2, &hit)
    slot = node * 9 + a
    if hit:
        ret = r
    else:
        obs = adv2 if M.checkpoint[adv2] else -1
        child = -1
        e = T.head[slot]
        while e >= 0:
            if T.edge_obs[e] == obs:
                child = T.edge_child[e]
                break
            e = T.edge_next[e]
        if child < 0:
            child = T.n_nodes
            T.n_nodes += 1
            e = T.n_edges
            T.n_edges += 1
            T.edge_obs[e] = obs
            T.edge_child[e] = child
            # append at the tail so lookup order matches the Python kernel
            T.edge_next[e] = -1
            if T.head[slot] < 0:
                T.head[slot] = e
            else:
                a_e = T.head[slot]
                while T.edge_next[a_e] >= 0:
                    a_e = T.edge_next[a_e]
                T.edge_next[a_e] = e
            ret = r + M.gamma * _rollout(M, ego2, m2, t + 1, depth + 1)
        else:
            ret = r + M.gamma * _simulate(M, T, child, ego2, m2, t + 1, depth + 1)
    T.node_n[node] += 1
    T.act_n[slot] += 1
    T.act_v[slot] += (ret - T.act_v[slot]) / <double>T.act_n[slot]
    return ret


def search(const int32_t[:, ::1] ego_moves, const int32_t[:, ::1] feas_actions,
           const int32_t[::1] feas_count, const int32_t[::1] rows, const int32_t[::1] cols,
           const uint8_t[::1] checkpoint, const int32_t[:, :, ::1] nxt, const double[:, :, ::1] cum,
           const int32_t[::1] state_cell, const int32_t[::1] particle_states,
           const double[::1] particle_cum, int ego, int t0, int horizon,
           double step_penalty, double move_cost, double intercept_bonus, int radius,
           double gamma, int num_sims, double uct_c, int max_depth, uint64_t seed):
    cdef Model M
    cdef Tree T
    cdef int capacity = num_sims + 1
    cdef int i, lo, hi, mid, n_part = particle_states.shape[0]
    cdef double u
    if ego_moves.shape[1] != 9 or nxt.shape[2] != 9:
        raise ValueError("expected 9 move slots")
    M.ego_moves = &ego_moves[0, 0]
    M.feas_actions = &feas_actions[0, 0]
    M.feas_count = &feas_count[0]
    M.rows = &rows[0]
    M.cols = &cols[0]
    M.checkpoint = &checkpoint[0]
    M.nxt = &nxt[0, 0, 0]
    M.cum = &cum[0, 0, 0]
    M.state_cell = &state_cell[0]
    M.n_layers = nxt.shape[0]
    M.n_states = nxt.shape[1]
    M.width = nxt.shape[2]
    M.horizon = horizon
    M.step_penalty = step_penalty
    M.move_cost = move_cost
    M.bonus = intercept_bonus
    M.radius = radius
    M.gamma = gamma
    M.uct_c = uct_c
    M.max_depth = max_depth
    M.rng = seed

    T.node_n = <int64_t*>calloc(capacity, sizeof(int64_t))
    T.act_n = <int64_t*>calloc(capacity * 9, sizeof(int64_t))
    T.act_v = <double*>calloc(capacity * 9, sizeof(double))
    T.head = <int32_t*>malloc(capacity * 9 * sizeof(int32_t))
    T.edge_obs = <int32_t*>malloc(capacity * sizeof(int32_t))
    T.edge_child = <int32_t*>malloc(capacity * sizeof(int32_t))
    T.edge_next = <int32_t*>malloc(capacity * sizeof(int32_t))
    if (T.node_n == NULL or T.act_n == NULL or T.act_v == NULL or T.head == NULL
            or T.edge_obs == NULL or T.edge_child == NULL or T.edge_next == NULL):
        free(T.node_n); free(T.act_n); free(T.act_v); free(T.head)
        free(T.edge_obs); free(T.edge_child); free(T.edge_next)
        raise MemoryError()
    for i in range(capacity * 9):
        T.head[i] = -1
    T.n_nodes = 1
    T.n_edges = 0

    visits = np.zeros(9, dtype=np.int64)
    values = np.zeros(9, dtype=np.float64)
    cdef int64_t[::1] vis = visits
    cdef double[::1] val = values
    try:
        with nogil:
            for i in range(num_sims):
                u = _uniform(&M.rng)
                lo = 0
                hi = n_part - 1
                while lo < hi:
                    mid = (lo + hi) // 2
                    if particle_cum[mid] > u:
                        hi = mid
                    else:
                        lo = mid + 1
                _simulate(&M, &T, 0, ego, particle_states[lo], t0, 0)
        for i in range(9):
            vis[i] = T.act_n[i]
            val[i] = T.act_v[i]
    finally:
        free(T.node_n); free(T.act_n); free(T.act_v); free(T.head)
        free(T.edge_obs); free(T.edge_child); free(T.edge_next)
    return visits, values
