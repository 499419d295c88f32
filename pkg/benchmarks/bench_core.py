"""Time the compiled and pure-Python POMCP search kernels on identical inputs.

    python benchmarks/bench_core.py [--sims 2000] [--repeats 5]
"""
import argparse
import time
from pathlib import Path

import numpy as np

import tabfields
from tabfields import RewardParams, build_reference, compute_tabfield, parse_map, parse_mission
from tabfields import core
from tabfields.planner import PomcpConfig, init_belief, make_tab_model, make_uniform_model, pomcp_search

SCENARIOS = Path(tabfields.__file__).parent / "scenarios"


def _time(kernel, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        res = pomcp_search(*args, kernel=kernel)
        best = min(best, time.perf_counter() - start)
    return best, res


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sims", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    compiled = core.compiled_search()
    if compiled is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    world = parse_map((SCENARIOS / "arena.map").read_text())
    spec = parse_mission((SCENARIOS / "m1.mission").read_text())
    tab = compute_tabfield(world, build_reference(world), spec, world.adv_start, 14)
    belief = init_belief(tab, 1000, np.random.default_rng(0))
    cfg = PomcpConfig(num_sims=args.sims, uct_c=75, max_depth=30, seed=0)

    print(f"{'model':<8}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}  same result")
    for name, model in (("tab", make_tab_model(tab)), ("uniform", make_uniform_model(world, tab.aut))):
        inputs = (world, RewardParams(), world.ego_start, belief, model, cfg, 14)
        py_t, py_res = _time(core.python_search, inputs, args.repeats)
        c_t, c_res = _time(compiled, inputs, args.repeats)
        same = np.array_equal(py_res.visits, c_res.visits)
        print(f"{name:<8}{py_t * 1e3:>12.1f}{c_t * 1e3:>14.2f}{py_t / c_t:>9.0f}x  {same}")


if __name__ == "__main__":
    main()
