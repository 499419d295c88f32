"""Command-line entry point: ``tabfields {check,tabfield,episode,bench}``.

Exit codes: 0 success, 1 usage or input error, 2 infeasible mission, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .adversary import KINDS
from .bench import (STUB_PLANNERS, Scenario, emit_results, load_suite, run_benchmark, run_episode,
                    write_trace)
from .errors import InfeasibleMission, MapError, MissionCompileError, MissionSyntaxError
from .gridworld import RewardParams, load_map
from .mission import compile_automaton, load_mission
from .planner import PLANNERS, PomcpConfig
from .tabfield import build_reference, compute_tabfield, write_tabfield

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags, which we reserve for infeasible missions
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_config(path) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return data


def _merged(args, config: dict, name: str, default=None):
    """A flag given on the command line wins over the config file."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(name, default)


def _overrides(cls, base, values: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"unknown {cls.__name__} field(s): {', '.join(sorted(unknown))}")
    return replace(base, **values)


def _load_inputs(args, config):
    map_path = _merged(args, config, "map")
    mission = _merged(args, config, "mission")
    horizon = _merged(args, config, "horizon")
    if map_path is None or mission is None or horizon is None:
        raise UsageError("--map, --mission and --horizon are required (flag or config)")
    if not Path(map_path).exists():
        raise UsageError(f"map file not found: {map_path}")
    world = load_map(map_path)
    try:
        spec = load_mission(str(mission))
    except MissionSyntaxError:
        raise
    except ValueError as exc:
        raise UsageError(f"invalid mission: {exc}") from exc
    return world, spec, int(horizon)


def cmd_check(args, config) -> int:
    world, spec, horizon = _load_inputs(args, config)
    aut = compile_automaton(spec, world, horizon)
    print(f"mission: {len(spec.tuples)} clause(s), horizon {horizon}")
    print(f"automaton: {aut.n_states} states ({aut.n_reach} reach goals)")
    if world.adv_start is None:
        print("feasibility: unknown (map has no adversary start 's')")
        return EXIT_OK
    tab = compute_tabfield(world, build_reference(world), aut, world.adv_start, horizon)
    print(f"feasible (log_Z = {tab.log_Z:.6f})")
    return EXIT_OK


def cmd_tabfield(args, config) -> int:
    world, spec, horizon = _load_inputs(args, config)
    if world.adv_start is None:
        raise UsageError("map has no adversary start 's'")
    aut = compile_automaton(spec, world, horizon)
    tab = compute_tabfield(world, build_reference(world), aut, world.adv_start, horizon)
    print(f"feasible: log_Z = {tab.log_Z:.6f}")
    out = _merged(args, config, "out", "tabfield_out")
    written = write_tabfield(tab, out, scale=int(config.get("scale", 1)))
    print(f"wrote {len(written)} files to {out}")
    return EXIT_OK


def cmd_episode(args, config) -> int:
    world, spec, horizon = _load_inputs(args, config)
    planner = _merged(args, config, "planner", "tab")
    adversary = _merged(args, config, "adversary", "tab")
    if planner not in PLANNERS + STUB_PLANNERS:
        raise UsageError(f"unknown planner {planner!r}")
    if adversary not in KINDS:
        raise UsageError(f"unknown adversary {adversary!r}")
    seed = int(_merged(args, config, "seed", 0))
    params = _overrides(RewardParams, RewardParams(), config.get("reward", {}))
    cfg = _overrides(PomcpConfig, PomcpConfig(), config.get("pomcp", {}))
    try:
        scenario = Scenario("episode", world, spec, horizon)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    # surface compile and feasibility errors before any planning
    _ = scenario.tab if adversary == "tab" else scenario.aut
    res = run_episode(scenario, params, planner, adversary, cfg, seed,
                      n_particles=int(config.get("particles", 1000)),
                      adversary_opts=config.get("adversary_opts"))
    for name in ("intercepted", "steps_to_interception", "adversary_completed", "completion_time",
                 "total_reward", "decisions", "planning_time_total"):
        value = getattr(res, name)
        print(f"{name + ':':22} {value:.4f}" if isinstance(value, float) else f"{name + ':':22} {value}")
    out = _merged(args, config, "out")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        path = Path(out) / "trace.csv"
        write_trace(path, res.trace)
        print(f"trace: {path}")
    return EXIT_OK


def cmd_bench(args, config) -> int:
    suite_path = args.suite or config.get("suite")
    if suite_path is None:
        raise UsageError("bench needs a suite file")
    if not Path(suite_path).exists():
        raise UsageError(f"suite file not found: {suite_path}")
    try:
        suite = load_suite(suite_path)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad suite: {exc}") from exc
    if args.episodes is not None:
        suite.episodes = args.episodes
    if args.seed is not None:
        suite.seed = args.seed
    table = run_benchmark(suite, jobs=int(_merged(args, config, "jobs", 1)))
    out = _merged(args, config, "out", "bench_out")
    emit_results(table, out, suite, traces=not args.no_traces)
    print(table.format())
    print(f"results: {out}")
    return EXIT_RUNTIME if table.errors else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tabfields", description="Mission-conditioned adversary fields and interception planning.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_flags(sp, out=True):
        sp.add_argument("--map", help="map file")
        sp.add_argument("--mission", help="mission file or inline mission text")
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--config", help="JSON file with defaults and overrides")
        if out:
            sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("check", help="parse and compile a mission, report feasibility")
    scenario_flags(sp, out=False)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("tabfield", help="compute the field and write per-step heatmaps")
    scenario_flags(sp)
    sp.set_defaults(func=cmd_tabfield)

    sp = sub.add_parser("episode", help="run one seeded interception episode")
    scenario_flags(sp)
    sp.add_argument("--planner", choices=PLANNERS + STUB_PLANNERS)
    sp.add_argument("--adversary", choices=KINDS)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_episode)

    sp = sub.add_parser("bench", help="run a benchmark suite")
    sp.add_argument("suite", nargs="?", help="suite JSON file")
    sp.add_argument("--config", help="JSON file with defaults")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--jobs", type=int, help="worker processes")
    sp.add_argument("--seed", type=int, help="override the suite seed base")
    sp.add_argument("--episodes", type=int, help="override episodes per cell")
    sp.add_argument("--no-traces", action="store_true", help="skip per-episode trace files")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _read_config(getattr(args, "config", None))
        return args.func(args, config)
    except MissionSyntaxError as exc:
        print(f"error: {exc.annotated()}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleMission as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MapError, MissionCompileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
