"""Run generate -> train -> ensemble -> simulate -> compare at desk scale and time each stage.

    python3 scripts/run_desk_experiment.py --output runs/desk
"""
import argparse
import json
import os
import sys
import time
from pathlib import Path

from railmpc import cli

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--output", default="runs/desk")
    ap.add_argument("--scenario", default=str(ROOT / "scenarios" / "small4.json"))
    ap.add_argument("--horizon", type=int, default=4)
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--steps", type=int, default=6)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--grid", default="default")
    ap.add_argument("--sim-episodes", type=int, default=50)
    ap.add_argument("--sim-steps", type=int, default=20)
    ap.add_argument("--jobs", type=int, default=1)
    a = ap.parse_args()

    common = ["--output", a.output]
    stages = [
        ("generate", ["--scenario", a.scenario, "--horizon", str(a.horizon), "--n-segments", "2",
                      "--seg-len", "2", "--episodes", str(a.episodes), "--steps", str(a.steps),
                      "--epochs", str(a.epochs), "--grid", a.grid, "--sim-episodes", str(a.sim_episodes),
                      "--sim-steps", str(a.sim_steps), "--jobs", str(a.jobs)]),
        ("train", []), ("ensemble", []), ("simulate", []), ("compare", []),
    ]
    timings = {}
    for name, extra in stages:
        t0 = time.perf_counter()
        code = cli.main([name, *extra, *common])
        timings[name] = round(time.perf_counter() - t0, 2)
        if code:
            print(f"{name} exited with {code}", file=sys.stderr)
            return code
    timings["total"] = round(sum(timings.values()), 2)
    print(json.dumps(timings, indent=1))
    out = Path(a.output)
    if not out.is_absolute() and os.environ.get(cli.OUTPUT_ENV):
        out = Path(os.environ[cli.OUTPUT_ENV]) / out
    (out / "timings.json").write_text(json.dumps(timings, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
