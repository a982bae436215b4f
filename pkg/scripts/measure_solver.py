"""Time the branch-and-bound solver against plan enumeration and against fixed-plan LPs."""
import argparse
import itertools
import time
from pathlib import Path

import numpy as np

from railmpc.errors import InfeasibleModelError
from railmpc.mip import DiscretePlan, build_fixed_integer_lp, build_full_mip, extract_plans, inventory_feasible
from railmpc.network import Scenario
from railmpc.pipeline import random_state
from railmpc.solver import solve_lp, solve_milp

ROOT = Path(__file__).resolve().parents[1]


def enumerate_plans(sc, state, horizon):
    origins = tuple(d.origin_platform for d in sc.network.depots)
    best = np.inf
    for combo in itertools.product(range(sc.costs.ell_min, sc.costs.ell_max + 1), repeat=len(origins) * horizon):
        plan = DiscretePlan(origins, np.array(combo).reshape(len(origins), horizon))
        if not inventory_feasible(sc.network, state, plan):
            continue
        try:
            r = solve_lp(build_fixed_integer_lp(state, sc, horizon, plan))
        except InfeasibleModelError:
            continue
        if r.ok:
            best = min(best, r.objective)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=str(ROOT / "scenarios" / "small4.json"))
    ap.add_argument("--horizon", type=int, default=4)
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--enumerate", type=int, default=1, help="instances also checked by enumeration")
    a = ap.parse_args()
    sc = Scenario.load(a.scenario)
    rng = np.random.default_rng(0)
    t_mip, t_lp, nodes = [], [], []
    for i in range(a.instances):
        state = random_state(sc, a.horizon, 1, rng)
        t0 = time.perf_counter()
        prog = build_full_mip(state, sc, a.horizon)
        res = solve_milp(prog)
        t_mip.append(time.perf_counter() - t0)
        nodes.append(res.nodes)
        dplan, _ = extract_plans(prog, res.x)
        t0 = time.perf_counter()
        lp = solve_lp(build_fixed_integer_lp(state, sc, a.horizon, dplan))
        t_lp.append(time.perf_counter() - t0)
        if i < a.enumerate:
            t0 = time.perf_counter()
            best = enumerate_plans(sc, state, a.horizon)
            print(f"instance {i}: milp {res.objective:.6f} enumeration {best:.6f} "
                  f"({time.perf_counter() - t0:.1f}s), fixed LP {lp.objective:.6f}")
    print(f"milp  mean {1000 * np.mean(t_mip):.1f} ms  max {1000 * np.max(t_mip):.1f} ms  "
          f"nodes mean {np.mean(nodes):.1f}")
    print(f"lp    mean {1000 * np.mean(t_lp):.1f} ms  max {1000 * np.max(t_lp):.1f} ms")


if __name__ == "__main__":
    main()
