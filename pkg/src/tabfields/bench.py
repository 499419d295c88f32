"""Closed-loop episodes, metric aggregation and benchmark suites."""
from __future__ import annotations

import csv
import functools
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .adversary import adversary_next, make_adversary
from .gridworld import Action, GridWorld, JointState, RewardParams, chebyshev, load_map, observe, step
from .mission import MissionSpec, compile_automaton, completion_time, load_mission
from .planner import (PLANNERS, FixedPathModel, MLEModel, PomcpConfig, TabModel, UniformModel,
                      belief_predict, belief_update, init_belief, mle_record, point_belief,
                      pomcp_plan, resample, shortest_mission_path)
from .tabfield import build_reference, compute_tabfield, write_tabfield

log = logging.getLogger(__name__)

STUB_PLANNERS = ("stay",)


class Scenario:
    """A map, a mission and a horizon, with the mission's derived objects cached."""

    def __init__(self, name: str, world: GridWorld, spec: MissionSpec, horizon: int):
        if world.adv_start is None or world.ego_start is None:
            raise ValueError(f"scenario {name!r}: map needs both 's' and 'g' start markers")
        self.name = name
        self.world = world
        self.spec = spec
        self.horizon = horizon

    @functools.cached_property
    def aut(self):
        return compile_automaton(self.spec, self.world, self.horizon)

    @functools.cached_property
    def ref(self):
        return build_reference(self.world)

    @functools.cached_property
    def tab(self):
        """Environment-side TAB field (used to draw TAB-sampled adversaries)."""
        return compute_tabfield(self.world, self.ref, self.aut, self.world.adv_start, self.horizon)


@dataclass
class EpisodeResult:
    intercepted: bool
    steps_to_interception: Optional[int]
    adversary_completed: bool
    total_reward: float
    decisions: int
    planning_time_total: float
    seed: int
    completion_time: Optional[int] = None
    trace: list = field(default_factory=list, repr=False)  # (t, ego, adv)


def _seeds(seed: int):
    ss = np.random.SeedSequence(seed)
    adv, belief, plan = (int(s.generate_state(1, np.uint64)[0]) for s in ss.spawn(3))
    return adv, belief, plan


def run_episode(scenario: Scenario, params: RewardParams, planner: str, adversary: str,
                cfg: PomcpConfig, seed: int, *, n_particles: int = 1000,
                mle_model: Optional[MLEModel] = None, adversary_opts: Optional[dict] = None,
                ) -> EpisodeResult:
    if planner not in PLANNERS + STUB_PLANNERS:
        raise ValueError(f"unknown planner {planner!r}")
    world, aut, T = scenario.world, scenario.aut, scenario.horizon
    adv_seed, belief_seed, plan_seed = _seeds(seed)
    rng = np.random.default_rng(belief_seed)
    tab_env = scenario.tab if adversary == "tab" else None
    policy = make_adversary(adversary, world, aut, tab_env, adv_seed, **(adversary_opts or {}))
    traj = policy.trajectory

    clock = time.perf_counter()
    tab = None
    q_start = int(aut.delta[0, aut.q0, world.index[world.adv_start]])
    if planner == "tab":
        tab = compute_tabfield(world, scenario.ref, aut, world.adv_start, T)
        model = TabModel(tab)
        belief = init_belief(tab, n_particles, rng)
    else:
        if planner == "s":
            model = UniformModel(world, aut)
        elif planner == "fp":
            model = FixedPathModel(world, aut, shortest_mission_path(world, aut, world.adv_start))
        elif planner == "mle":
            model = mle_model if mle_model is not None else MLEModel(world, aut=aut)
        else:
            model = None
        belief = point_belief(world, world.adv_start, n_particles, q=q_start)
    plan_time = time.perf_counter() - clock

    s = JointState(world.ego_start, traj[0], 0)
    trace = [(0, s.ego, s.adv)]
    total = 0.0
    decisions = 0
    intercepted = chebyshev(s.ego, s.adv) <= params.intercept_radius
    steps = 0 if intercepted else None

    clock = time.perf_counter()
    obs = observe(world, s)
    belief = resample(belief_update(belief, obs, tab, rng), rng)
    plan_time += time.perf_counter() - clock
    prev_seen = obs.adv

    while not intercepted and s.t < T:
        clock = time.perf_counter()
        if model is None:
            action = Action.STAY
        else:
            step_cfg = replace(cfg, seed=(plan_seed + s.t) & 0xFFFFFFFFFFFFFFFF)
            action = pomcp_plan(world, params, s.ego, belief, model, step_cfg, horizon=T)
        plan_time += time.perf_counter() - clock
        decisions += 1

        out = step(world, params, s, action, adversary_next(policy, s.t))
        total += out.reward
        s = out.state
        trace.append((s.t, s.ego, s.adv))
        if out.terminal:
            intercepted, steps = True, s.t
            break

        clock = time.perf_counter()
        obs = observe(world, s)
        if model is not None:
            belief = belief_predict(belief, model, rng)
            if isinstance(model, MLEModel) and prev_seen is not None and obs.adv is not None:
                mle_record(model, prev_seen, obs.adv)
            belief = resample(belief_update(belief, obs, tab, rng), rng)
        plan_time += time.perf_counter() - clock
        prev_seen = obs.adv

    done_at = completion_time(aut, traj)
    completed = done_at is not None and (not intercepted or done_at <= steps)
    return EpisodeResult(intercepted, steps, completed, total, decisions, plan_time, seed,
                         done_at, trace)


# --- suites and metrics ----------------------------------------------------------

@dataclass
class MetricsRow:
    planner: str
    mission: str
    n: int
    atcr: Optional[float]
    sti: Optional[float]
    intercept_rate: Optional[float]
    mean_reward: Optional[float]
    mean_plan_ms: Optional[float]


@dataclass
class MetricsTable:
    rows: list
    episodes: dict = field(default_factory=dict, repr=False)  # (planner, mission) -> [EpisodeResult]
    errors: dict = field(default_factory=dict)

    def get(self, planner: str, mission: str) -> MetricsRow:
        for r in self.rows:
            if r.planner == planner and r.mission == mission:
                return r
        raise KeyError((planner, mission))

    def format(self) -> str:
        head = f"{'planner':8} {'mission':8} {'n':>4} {'ATCR':>7} {'StI':>7} {'int.rate':>8} {'reward':>8} {'ms/dec':>8}"
        out = [head]
        for r in self.rows:
            def f(v, spec):
                return format(v, spec) if v is not None else format("-", f">{spec.split('.')[0]}")
            line = (f"{r.planner:8} {r.mission:8} {r.n:4d} {f(r.atcr, '7.3f')} {f(r.sti, '7.2f')} "
                    f"{f(r.intercept_rate, '8.3f')} {f(r.mean_reward, '8.2f')} {f(r.mean_plan_ms, '8.3f')}")
            if r.n == 0:
                err = self.errors.get((r.planner, r.mission))
                line += f"  [empty: {err}]" if err else "  [empty]"
            out.append(line)
        return "\n".join(out)


def aggregate(planner: str, mission: str, results: list) -> MetricsRow:
    n = len(results)
    if n == 0:
        return MetricsRow(planner, mission, 0, None, None, None, None, None)
    caught = [r.steps_to_interception for r in results if r.intercepted]
    decisions = sum(r.decisions for r in results)
    plan = sum(r.planning_time_total for r in results)
    return MetricsRow(
        planner, mission, n,
        atcr=sum(r.adversary_completed for r in results) / n,
        sti=(sum(caught) / len(caught)) if caught else None,
        intercept_rate=len(caught) / n,
        mean_reward=sum(r.total_reward for r in results) / n,
        mean_plan_ms=(1000.0 * plan / decisions) if decisions else None,
    )


@dataclass
class SuiteConfig:
    scenarios: list  # of (name, map_path, mission_path_or_text, horizon)
    planners: list = field(default_factory=lambda: list(PLANNERS))
    episodes: int = 150
    seed: int = 0
    adversary: str = "tab"
    adversary_opts: dict = field(default_factory=dict)
    particles: int = 1000
    mle_carryover: bool = True
    pomcp: PomcpConfig = field(default_factory=PomcpConfig)
    reward: RewardParams = field(default_factory=RewardParams)


def load_suite(source, base_dir=None) -> SuiteConfig:
    """Suite from a JSON file path or an already-parsed dict.

    Relative map and mission paths resolve against the suite file's directory.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        data = json.loads(path.read_text())
        base_dir = base_dir or path.parent
    else:
        data = dict(source)
    base = Path(base_dir or ".")

    def resolve(p):
        q = Path(p)
        return q if q.is_absolute() else base / q

    default_map = data.get("map")
    default_horizon = data.get("horizon")
    scenarios = []
    for i, m in enumerate(data.get("missions", [])):
        if isinstance(m, str):
            m = {"mission": m}
        map_path = m.get("map", default_map)
        horizon = m.get("horizon", default_horizon)
        if map_path is None or horizon is None:
            raise ValueError(f"mission entry {i} needs a map and a horizon")
        mission = m["mission"]
        mpath = resolve(mission)
        name = m.get("name") or (mpath.stem if mpath.suffix == ".mission" else f"mission{i}")
        scenarios.append((name, str(resolve(map_path)),
                          str(mpath) if mpath.exists() else mission, int(horizon)))
    pomcp = PomcpConfig(**{k: v for k, v in data.get("pomcp", {}).items()})
    reward = RewardParams(**data.get("reward", {}))
    planners = data.get("planners", list(PLANNERS))
    for p in planners:
        if p not in PLANNERS + STUB_PLANNERS:
            raise ValueError(f"unknown planner {p!r}")
    return SuiteConfig(scenarios, planners, int(data.get("episodes", 150)), int(data.get("seed", 0)),
                       data.get("adversary", "tab"), dict(data.get("adversary_opts", {})),
                       int(data.get("particles", 1000)), bool(data.get("mle_carryover", True)),
                       pomcp, reward)


@functools.lru_cache(maxsize=32)
def _scenario(name, map_path, mission, horizon) -> Scenario:
    return Scenario(name, load_map(map_path), load_mission(mission), horizon)


def run_cell(suite: SuiteConfig, planner: str, scenario_key: tuple) -> list:
    scenario = _scenario(*scenario_key)
    mle = MLEModel(scenario.world, aut=scenario.aut) if planner == "mle" and suite.mle_carryover else None
    results = []
    for i in range(suite.episodes):
        results.append(run_episode(scenario, suite.reward, planner, suite.adversary, suite.pomcp,
                                   suite.seed + i, n_particles=suite.particles, mle_model=mle,
                                   adversary_opts=suite.adversary_opts))
    return results


def _run_cell_safe(args):
    suite, planner, key = args
    try:
        return run_cell(suite, planner, key), None
    except Exception as exc:  # reported per cell, the rest of the suite continues
        return [], f"{type(exc).__name__}: {exc}"


def run_benchmark(suite, jobs: int = 1) -> MetricsTable:
    if not isinstance(suite, SuiteConfig):
        suite = load_suite(suite)
    cells = [(suite, p, key) for key in suite.scenarios for p in suite.planners]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_cell_safe, cells))
    else:
        outcomes = [_run_cell_safe(c) for c in cells]
    table = MetricsTable([])
    for (_, planner, key), (results, err) in zip(cells, outcomes):
        name = key[0]
        table.rows.append(aggregate(planner, name, results))
        table.episodes[(planner, name)] = results
        if err:
            log.error("cell %s/%s failed: %s", planner, name, err)
            table.errors[(planner, name)] = err
    return table


# --- output ------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def metrics_csv(table: MetricsTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["planner", "mission", "atcr", "sti", "intercept_rate", "mean_reward", "n"])
    for r in table.rows:
        w.writerow([r.planner, r.mission, _fmt(r.atcr), _fmt(r.sti), _fmt(r.intercept_rate),
                    _fmt(r.mean_reward), r.n])
    return buf.getvalue()


def write_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "ego_row", "ego_col", "adv_row", "adv_col"])
        for t, ego, adv in trace:
            w.writerow([t, ego[0], ego[1], adv[0], adv[1]])


def emit_results(table: MetricsTable, out_dir, suite: Optional[SuiteConfig] = None,
                 traces: bool = True, heatmaps: bool = True) -> list:
    """Write metrics.csv, timing.csv, episodes.csv, traces/ and heatmaps/.

    metrics.csv depends only on the suite and its seeds; wall-clock numbers go
    to timing.csv so that reruns reproduce metrics.csv byte for byte.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "metrics.csv"
    p.write_text(metrics_csv(table))
    written.append(p)

    p = out / "timing.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["planner", "mission", "mean_plan_ms", "decisions", "n"])
        for r in table.rows:
            dec = sum(e.decisions for e in table.episodes.get((r.planner, r.mission), []))
            w.writerow([r.planner, r.mission, _fmt(r.mean_plan_ms), dec, r.n])
    written.append(p)

    p = out / "episodes.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["planner", "mission", "episode", "seed", "intercepted", "steps_to_interception",
                    "adversary_completed", "completion_time", "total_reward", "decisions",
                    "planning_time_s"])
        for (planner, mission), results in table.episodes.items():
            for i, e in enumerate(results):
                w.writerow([planner, mission, i, e.seed, int(e.intercepted),
                            _fmt(e.steps_to_interception), int(e.adversary_completed),
                            _fmt(e.completion_time), f"{e.total_reward:.6f}", e.decisions,
                            f"{e.planning_time_total:.6f}"])
    written.append(p)

    if traces:
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for (planner, mission), results in table.episodes.items():
            for i, e in enumerate(results):
                tp = tdir / f"{mission}_{planner}_{i:04d}.csv"
                write_trace(tp, e.trace)
                written.append(tp)
    if heatmaps and suite is not None:
        for key in suite.scenarios:
            sc = _scenario(*key)
            written += write_tabfield(sc.tab, out / "heatmaps" / sc.name)
    return written
