"""Command-line entry point: generate, train, ensemble, simulate, compare."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import RailMPCError

OUTPUT_ENV = "RAILMPC_OUTPUT_ROOT"
VARIANTS = ("full", "reduced")


@dataclass
class ExperimentConfig:
    scenario: str | None = None
    per_direction: int = 2
    cycle: float = 240.0
    demand_seed: int = 0
    horizon: int = 8
    n_segments: int = 4
    seg_len: int = 2
    time_limit: float = 240.0
    gap_tol: float = 1e-6
    grid: str = "default"
    epochs: int = 60
    episodes: int = 100
    steps: int = 6
    test_episodes: int = 4
    test_steps: int = 10
    keep: int = 15
    sim_episodes: int = 50
    sim_steps: int = 30
    seed: int = 0
    output: str = "runs/default"
    jobs: int = 1
    methods: list[str] = field(default_factory=lambda: ["exact-milp", "learning-lp-full-state",
                                                        "learning-lp-reduced-state"])

    def validate(self) -> None:
        from .errors import InvalidParameterError
        if self.horizon < self.n_segments * self.seg_len:
            raise InvalidParameterError(
                f"horizon {self.horizon} shorter than the reduced span {self.n_segments * self.seg_len}")
        if self.scenario is not None and not Path(self.scenario).exists():
            raise FileNotFoundError(f"scenario file {self.scenario} not found")

    @property
    def out(self) -> Path:
        return Path(self.output)


def _solver(cfg: ExperimentConfig):
    from .solver import SolverConfig
    return SolverConfig(time_limit=cfg.time_limit, gap_tol=cfg.gap_tol)


def _scenario(cfg: ExperimentConfig):
    from .network import Scenario, build_synthetic_network
    if cfg.scenario:
        return Scenario.load(cfg.scenario)
    saved = cfg.out / "scenario.json"
    if saved.exists():
        return Scenario.load(saved)
    return build_synthetic_network(cfg.per_direction, cfg.cycle, cfg.demand_seed)


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{path} is missing; {hint}")
    return path


# ---------------------------------------------------------------------------

def cmd_generate(cfg: ExperimentConfig) -> int:
    from . import pipeline as pl
    from .network import validate_scenario
    from .reduction import ReductionConfig

    sc = _scenario(cfg)
    bad = validate_scenario(sc)
    if bad:
        raise RailMPCError("invalid scenario: " + "; ".join(v.message for v in bad))
    data_dir = cfg.out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    sc.save(cfg.out / "scenario.json")
    (cfg.out / "config.json").write_text(json.dumps(dataclasses.asdict(cfg), indent=1))

    t0 = time.perf_counter()
    per_slot = pl.acquire_data(sc, cfg.episodes, cfg.steps, _solver(cfg), ReductionConfig.identity(cfg.horizon),
                               cfg.seed, cfg.horizon)
    reduced = pl.rereduce(per_slot, ReductionConfig(cfg.n_segments, cfg.seg_len)).split(0.2, cfg.seed)
    # the full-state variant gets the byte budget the reduced variant used
    full = pl.cap_bytes(per_slot, reduced.nbytes).split(0.2, cfg.seed)
    full.save(data_dir / "full.rmd")
    reduced.save(data_dir / "reduced.rmd")

    rows = [{"state": name, "dimension": d.dim, "points": len(d), "bytes": d.nbytes,
             "checksum": d.checksum()} for name, d in (("full", full), ("reduced", reduced))]
    expected = per_slot.meta["x_dim"] + per_slot.meta["n_platforms"] * cfg.n_segments
    acct = {"rows": rows, "discarded_episodes": per_slot.meta["discarded"],
            "seconds": time.perf_counter() - t0}
    (data_dir / "accounting.json").write_text(json.dumps(acct, indent=1))
    print(f"{'State':<10}{'Dimension':>10}{'Points':>10}{'Bytes':>12}")
    for r in rows:
        print(f"{r['state']:<10}{r['dimension']:>10}{r['points']:>10}{r['bytes']:>12}")
    return 0 if reduced.dim == expected else 1


def _grid(cfg: ExperimentConfig):
    from .classifier import HyperParams, default_grid
    if cfg.grid == "default":
        return default_grid(cfg.epochs, cfg.seed)
    if cfg.grid == "small":
        return [HyperParams(lr=lr, hidden=h, epochs=cfg.epochs, seed=cfg.seed)
                for lr in (1e-2, 1e-3) for h in (16, 32)]
    entries = json.loads(Path(cfg.grid).read_text())
    return [HyperParams(**{"epochs": cfg.epochs, "seed": cfg.seed, **hp}) for hp in entries]


def cmd_train(cfg: ExperimentConfig) -> int:
    from .classifier import Dataset, save, train_grid

    grid = _grid(cfg)
    for variant in VARIANTS:
        ds = Dataset.load(_require(cfg.out / "data" / f"{variant}.rmd", "run `railmpc generate` first"))
        mdir = cfg.out / "models" / variant
        mdir.mkdir(parents=True, exist_ok=True)
        results = train_grid(ds, grid, cfg.jobs)
        board = []
        for i, (model, met) in enumerate(results):
            save(model, mdir / f"{i:03d}.rmm")
            board.append({"index": i, "tag": model.hp.tag(), "train_loss": met.train_loss,
                          "val_loss": met.val_loss, "train_accuracy": met.train_accuracy})
        board.sort(key=lambda r: (r["val_loss"] if r["val_loss"] == r["val_loss"] else r["train_loss"],
                                  r["index"]))
        (mdir / "leaderboard.json").write_text(json.dumps(board, indent=1))
        print(f"{variant}: {len(board)} models, best {board[0]['tag']} val loss {board[0]['val_loss']:.4f}")
    return 0


def _models(cfg: ExperimentConfig, variant: str):
    from .classifier import load
    mdir = _require(cfg.out / "models" / variant, "run `railmpc train` first")
    paths = sorted(mdir.glob("*.rmm"))
    if not paths:
        raise FileNotFoundError(f"no models in {mdir}; run `railmpc train` first")
    return [load(p) for p in paths]


def cmd_ensemble(cfg: ExperimentConfig) -> int:
    from . import pipeline as pl
    sc = _scenario(cfg)
    for variant in VARIANTS:
        models = _models(cfg, variant)
        ens = pl.form_ensemble(models, sc, cfg.test_episodes, cfg.test_steps, cfg.keep, cfg.seed,
                               cfg.horizon, _solver(cfg))
        (cfg.out / f"ensemble_{variant}.json").write_text(json.dumps(ens.to_dict(), indent=1))
        print(f"{variant}: kept {len(ens.order)} of {len(models)}, best cost {ens.costs[0]:.1f}")
    return 0


def cmd_simulate(cfg: ExperimentConfig) -> int:
    from . import pipeline as pl
    sc = _scenario(cfg)
    solver = _solver(cfg)
    edir = cfg.out / "episodes"
    edir.mkdir(parents=True, exist_ok=True)
    plans = {}
    for method in cfg.methods:
        kw = {}
        if method != pl.EXACT:
            variant = "full" if method == pl.LEARN_FULL else "reduced"
            path = _require(cfg.out / f"ensemble_{variant}.json", "run `railmpc ensemble` first")
            kw = {"ensemble": pl.Ensemble.from_dict(json.loads(path.read_text())),
                  "models": _models(cfg, variant)}
        plans[method] = kw
    worst = 0.0
    for method, kw in plans.items():
        eps = [pl.run_closed_loop(sc, method, cfg.horizon, cfg.sim_steps, cfg.seed + e, solver=solver, **kw)
               for e in range(cfg.sim_episodes)]
        worst = max([worst] + [ep.worst_violation for ep in eps])
        with open(edir / f"{method}.csv", "w", newline="") as fh:
            pl.write_episodes_csv(eps, fh)
        print(f"{method}: {len(eps)} episodes, mean cost {sum(e.total_cost for e in eps) / len(eps):.1f}")
    return 0 if worst <= solver.feas_tol else 3


def cmd_compare(cfg: ExperimentConfig) -> int:
    from . import pipeline as pl
    edir = _require(cfg.out / "episodes", "run `railmpc simulate` first")
    text = ""
    for i, path in enumerate(sorted(edir.glob("*.csv"))):
        body = path.read_text()
        text += body if i == 0 else body.split("\n", 1)[1]
    report = pl.compare_from_csv(text)
    (cfg.out / "report.json").write_text(report.to_json())
    (cfg.out / "report.txt").write_text(report.render() + "\n")
    print(report.render())
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "ensemble": cmd_ensemble,
            "simulate": cmd_simulate, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="railmpc", description=__doc__)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON file whose keys override the flags below")
    for f in dataclasses.fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        if isinstance(default, list):
            ap.add_argument(flag, nargs="+", default=None)
        elif isinstance(default, bool):
            ap.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        else:
            typ = type(default) if default is not None else str
            ap.add_argument(flag, type=typ, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the run's saved config, then flags, then ``--config``."""
    values = {f.name: getattr(args, f.name) for f in dataclasses.fields(ExperimentConfig)
              if getattr(args, f.name) is not None}
    if args.config:
        values.update(json.loads(Path(args.config).read_text()))
    output = values.get("output", ExperimentConfig.output)
    root = os.environ.get(OUTPUT_ENV)
    if root and not Path(output).is_absolute():
        output = str(Path(root) / output)
    saved = Path(output) / "config.json"
    base = json.loads(saved.read_text()) if saved.exists() and args.command != "generate" else {}
    cfg = ExperimentConfig(**{**base, **values, "output": output})
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (RailMPCError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"railmpc {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
