"""Command-line entry point: ``recovery-chaining <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness, plots
from .discovery import discover_failures, load_dataset
from .lazy import LazyConfig
from .ppo import PPOConfig
from .sim import Task, TaskConfig, load_config
from .skills import SkillId


SCALE_BUDGETS = {"500k": 500_000, "200k": 200_000}


def _task(s: str) -> Task:
    try:
        return Task(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown task {s!r}; one of {', '.join(t.value for t in Task)}")


def _config(args) -> TaskConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        if cfg.task is not args.task:
            raise SystemExit(f"config file is for {cfg.task.value}, not {args.task.value}")
        return cfg
    return TaskConfig.default(args.task)


def _ppo(args) -> PPOConfig:
    cfg = PPOConfig.paper_scale(total_timesteps=SCALE_BUDGETS[args.paper_scale]) if args.paper_scale else PPOConfig()
    if args.timesteps:
        cfg = cfg.replace(total_timesteps=args.timesteps)
    return cfg


def _data(args, task: Task) -> harness.TaskData:
    cfg = load_config(args.config) if getattr(args, "config", None) else TaskConfig.default(task)
    train = None
    if getattr(args, "dataset", None):
        _, train = load_dataset(args.dataset, cfg)
    return harness.TaskData(cfg, train_failures=train)


def _add_training_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--timesteps", type=int, default=None, help="override total agent timesteps")
    p.add_argument("--paper-scale", nargs="?", const="500k", choices=sorted(SCALE_BUDGETS),
                   help="hidden [256, 256] with a 500k (default) or 200k timestep budget")
    p.add_argument("--pp-dataset-size", type=int, choices=(250, 400, 600), default=400)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--config", type=Path, help="JSON task-config overrides")


# -- subcommands -------------------------------------------------------------------

def cmd_show_config(args) -> int:
    cfg = _config(args)
    print(json.dumps({"task": cfg.to_dict(), "config_hash": cfg.hash(), "ppo": _ppo(args).to_dict(),
                      "lazy": LazyConfig().__dict__}, indent=2, sort_keys=True))
    return 0


def cmd_calibrate(args) -> int:
    rep = harness.calibrate_nominal(args.target, args.tolerance, episodes=args.episodes)
    sys.stdout.write(rep.to_csv())
    if rep.selected_margin is None:
        print("no margin within tolerance", file=sys.stderr)
        return 1
    print(f"selected wall_margin={rep.selected_margin} (nominal success {rep.selected_rate:.3f})")
    if args.out:
        cfg = TaskConfig.default(Task.PICK_PLACE).replace(wall_margin=rep.selected_margin)
        Path(args.out).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_discover(args) -> int:
    cfg = _config(args)
    max_f = None if args.max_failures <= 0 else args.max_failures
    recs = discover_failures(cfg, None, args.episodes, max_f, out=args.out)
    kinds: dict[str, int] = {}
    for r in recs:
        kinds[r.failure_kind.value] = kinds.get(r.failure_kind.value, 0) + 1
    print(f"{len(recs)} failures written to {args.out}: {kinds}")
    return 0 if recs else 2


def _run(method: str, task: Task, args, data: harness.TaskData) -> harness.ExperimentResult:
    spec = harness.ExperimentSpec(method, task, tuple(args.seeds), _ppo(args), args.pp_dataset_size,
                                  out_dir=args.out)
    return harness.run_experiment(spec, data)


def _write_tables(out: Path, results: list[harness.ExperimentResult]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "results_table.csv").write_text(harness.results_csv(results))
    entries = []
    for r in results:
        if r.spec.method in ("RC", "LazyRC"):
            k = len(harness.nominal_plan(harness.make_env(TaskConfig.default(r.spec.task))))
            for s in r.seeds:
                entries.append((r.spec.method, r.spec.task.value, s.seed,
                                harness.option_usage_histogram(s.option_rounds, k)))
    if entries:
        (out / "option_usage.csv").write_text(harness.option_usage_csv(entries))


def cmd_train(args) -> int:
    data = _data(args, args.task)
    res = _run(args.method, args.task, args, data)
    _write_tables(args.out, [res])
    for s in res.seeds:
        print(f"{args.method} {args.task.value} seed {s.seed}: recovery {s.recovery_rate:.3f} "
              f"overall {s.success:.1f}% rollout sim steps {s.sim_steps}")
    print(f"mean overall success {res.mean_success:.1f}%")
    return 0


def cmd_evaluate(args) -> int:
    from . import acceptance
    results = []
    for task in args.tasks:
        data = _data(args, task)
        for method in args.methods:
            results.append(_run(method, task, args, data))
    _write_tables(args.out, results)
    sys.stdout.write(harness.results_csv(results))
    if not args.assert_:
        return 0
    checks = acceptance.table_checks(results)
    for c in checks:
        print(c.line())
    return 0 if all(c.passed for c in checks) else 1


def cmd_ablate_pp(args) -> int:
    data = _data(args, args.task)
    results = []
    for size in args.sizes:
        spec = harness.ExperimentSpec("PP", args.task, tuple(args.seeds), _ppo(args), size)
        res = harness.run_experiment(spec, data)
        results.append(res)
        out = args.out / "pp_ablation"
        out.mkdir(parents=True, exist_ok=True)
        for s in res.seeds:
            (out / f"PP{size}_{args.task.value}_{s.seed}.csv").write_text(harness.curve_csv(s.curve))
        print(f"PP n={size}: final recovery {res.mean_recovery:.3f}, "
              f"final training reward {sum(s.curve[-1]['mean_reward'] for s in res.seeds) / len(res.seeds):.3f}")
    return 0


def cmd_export_plots(args) -> int:
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    written = export_plots(out, args.resolution)
    for w in written:
        print(w)
    return 0


def export_plots(out: Path, resolution: int = 25) -> list[Path]:
    import csv
    written: list[Path] = []
    curves = sorted((out / "curves").glob("*.csv")) if (out / "curves").exists() else []
    for path in curves:
        rows = list(csv.DictReader(path.open()))
        xs = [float(r["timesteps"]) for r in rows]
        series = {"mean reward": (xs, [float(r["mean_reward"]) for r in rows])}
        rec = [(float(r["timesteps"]), float(r["recovery_rate"])) for r in rows if r["recovery_rate"] != ""]
        if rec:
            series["recovery rate"] = ([x for x, _ in rec], [y for _, y in rec])
        svg = plots.line_plot(series, path.stem, "timesteps", "rate", (0.0, 1.05))
        dst = path.with_suffix(".svg")
        dst.write_text(svg)
        written.append(dst)
    usage = out / "option_usage.csv"
    if usage.exists():
        rows = list(csv.DictReader(usage.open()))
        if rows:
            first = (rows[0]["method"], rows[0]["task"], rows[0]["seed"])
            sel = [r for r in rows if (r["method"], r["task"], r["seed"]) == first]
            opts = [k for k in sel[0] if k.startswith("option_")]
            series = {k: ([float(r["round"]) for r in sel], [float(r[k]) for r in sel]) for k in opts}
            dst = out / "option_usage.svg"
            dst.write_text(plots.line_plot(series, "option usage per 120-action round "
                                           f"({first[0]} {first[1]} seed {first[2]})", "round", "count"))
            written.append(dst)
    for task, skill in ((Task.PICK_PLACE, SkillId.PICK), (Task.SHELF, SkillId.PLACE_S)):
        pts = harness.initiation_set_export(task, resolution)
        name = f"initiation_set_{skill.value}"
        (out / f"{name}.csv").write_text(harness.initiation_csv(pts))
        groups = {
            "in precondition": [(p.coord_a, p.coord_b) for p in pts if p.in_precondition],
            "failure": [(p.coord_a, p.coord_b) for p in pts if p.failed],
            "timeout": [(p.coord_a, p.coord_b) for p in pts if p.timeout],
        }
        xl, yl = ("ee a", "ee b") if task is Task.PICK_PLACE else ("box a - target a", "box b - target b")
        dst = out / f"{name}.svg"
        dst.write_text(plots.scatter_plot(groups, f"{skill.value} initiation set ({task.value})", xl, yl))
        written += [out / f"{name}.csv", dst]
    return written


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recovery-chaining", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("show-config", help="print the effective task and PPO configuration")
    s.add_argument("--task", type=_task, default=Task.PICK_PLACE)
    s.add_argument("--config", type=Path)
    s.add_argument("--paper-scale", nargs="?", const="500k", choices=sorted(SCALE_BUDGETS))
    s.add_argument("--timesteps", type=int)
    s.set_defaults(fn=cmd_show_config)

    s = sub.add_parser("calibrate", help="sweep the pick-place wall margin against a nominal success target")
    s.add_argument("--target", type=float, default=0.70)
    s.add_argument("--tolerance", type=float, default=0.05)
    s.add_argument("--episodes", type=int, default=1000)
    s.add_argument("--out", type=Path, help="write the calibrated config JSON here")
    s.set_defaults(fn=cmd_calibrate)

    s = sub.add_parser("discover", help="run the nominal plan and save detected failures")
    s.add_argument("--task", type=_task, required=True)
    s.add_argument("--episodes", type=int, default=1000)
    s.add_argument("--max-failures", type=int, default=100, help="stop after this many (<= 0: no limit)")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--config", type=Path)
    s.set_defaults(fn=cmd_discover)

    s = sub.add_parser("train", help="train one method on one task over seeds")
    s.add_argument("--method", choices=harness.METHODS, required=True)
    s.add_argument("--task", type=_task, required=True)
    s.add_argument("--dataset", type=Path, help="failure dataset from `discover` (default: rediscover)")
    _add_training_args(s)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("evaluate", help="run methods x tasks and write results_table.csv")
    s.add_argument("--tasks", type=_task, nargs="+", default=list(Task))
    s.add_argument("--methods", nargs="+", choices=harness.METHODS, default=list(harness.METHODS))
    s.add_argument("--assert", dest="assert_", action="store_true", help="exit nonzero if a check fails")
    _add_training_args(s)
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("ablate-pp", help="PP with 250/400/600 nominal trajectories")
    s.add_argument("--task", type=_task, default=Task.PICK_PLACE)
    s.add_argument("--sizes", type=int, nargs="+", default=[250, 400, 600])
    _add_training_args(s)
    s.set_defaults(fn=cmd_ablate_pp)

    s = sub.add_parser("export-plots", help="SVGs for curves, option usage and initiation sets")
    s.add_argument("--out", type=Path, default=Path("results"))
    s.add_argument("--resolution", type=int, default=25)
    s.set_defaults(fn=cmd_export_plots)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return int(args.fn(args) or 0)


if __name__ == "__main__":
    sys.exit(main())
