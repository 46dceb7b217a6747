"""Command-line interface: ``hydro-tdrl <command> ...``.

Exit codes: 0 success, 2 usage error, 3 bad input data, 4 runtime failure.
Every command that writes output also writes a ``run.json`` sidecar holding the
argument vector, seed and the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import CheckpointError, atomic_write_bytes
from .dataset import DataError, desk_dataset_path, load_instance, read_schedule, write_schedule
from .decomposition import BoundsError, ObjectiveBounds, WeightVector, estimate_bounds, weight_grid
from .env import ActionSpace
from .hydro import HydroError, check_constraints, derive_trajectory, objective_triple
from .moea import MoeaConfig, moead_run, nsga3_run
from .pareto import (FrontError, FrontRow, format_report, improvement_report, merge_fronts,
                     read_front, write_front)
from .policy import EncoderConfig, PolicyModel
from .trainer import TrainConfig, curve_csv, greedy_evaluation, train_subproblem, train_sweep

EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 2, 3, 4
log = logging.getLogger("hydro_tdrl")


class ConfigError(ValueError):
    """Configuration file is malformed."""


DEFAULT_CONFIG = {
    "action_space": {"qp_bins": 51, "qs_bins": 51},
    "train": {k: v for k, v in asdict(TrainConfig()).items()},
    "moea": MoeaConfig().to_dict(),
    "bounds": {"method": "sample", "budget": 2000},
    "seed": 0,
}


def load_config(path) -> dict:
    """Defaults overlaid with the JSON file at ``path`` (one level of nesting merged)."""
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(user, dict):
        raise ConfigError(f"{path}:1: top level must be a JSON object")
    for key, val in user.items():
        if key not in cfg:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        if isinstance(cfg[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{path}: {key!r} must be an object")
            unknown = set(val) - set(cfg[key])
            if unknown:
                raise ConfigError(f"{path}: unknown keys in {key!r}: {sorted(unknown)}")
            if key == "train" and "encoder" in val:
                cfg[key]["encoder"].update(val.pop("encoder"))
            cfg[key].update(val)
        else:
            cfg[key] = val
    return cfg


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    d = dict(cfg["train"])
    enc = EncoderConfig(**d.pop("encoder"))
    d["seed"] = seed
    try:
        return TrainConfig(encoder=enc, **d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train config: {exc}") from None


def _space(cfg: dict) -> ActionSpace:
    try:
        return ActionSpace(**cfg["action_space"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"action_space config: {exc}") from None


def _dataset(arg: str):
    path = desk_dataset_path() if arg == "desk" else Path(arg)
    return load_instance(path), str(path)


def _seed(args, cfg) -> int:
    return int(args.seed if args.seed is not None else cfg["seed"])


def write_json(path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def write_sidecar(path, args, argv, seed, cfg, outputs) -> None:
    write_json(path, {"command": args.command, "argv": list(argv), "seed": seed, "config": cfg,
                      "outputs": [str(o) for o in outputs], "version": __version__})


def _csv_bytes(rows) -> bytes:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue().encode("utf-8")


def _triple_dict(obj) -> dict:
    return {"power": float(obj[0]), "aapfd": float(obj[1]), "water_revenue": float(obj[2])}


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args, argv) -> int:
    inst, path = _dataset(args.dataset)
    I, J, T = inst.dims
    a = inst.arrays
    print(f"dataset {path}: OK")
    print(f"  I={I} reservoirs ({', '.join(r.id for r in inst.reservoirs)})")
    print(f"  J={J} areas ({', '.join(x.id for x in inst.areas)})")
    print(f"  T={T} periods of {inst.period_seconds:g} s")
    print(f"  turbine range [m3/s]: " + ", ".join(f"{lo:g}-{hi:g}" for lo, hi in zip(a.qp_lo, a.qp_hi)))
    return 0


def cmd_bounds(args, argv) -> int:
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    inst, _ = _dataset(args.dataset)
    method = args.method or cfg["bounds"]["method"]
    budget = args.budget or cfg["bounds"]["budget"]
    cfg["bounds"].update(method=method, budget=budget)
    bounds = estimate_bounds(inst, _space(cfg), method=method, budget=budget, seed=seed)
    out = Path(args.out)
    bounds.save(out)
    write_sidecar(out.with_name(out.name + ".run.json"), args, argv, seed, cfg, [out])
    print(bounds.to_json())
    return 0


def cmd_train(args, argv) -> int:
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    inst, _ = _dataset(args.dataset)
    weights = WeightVector.parse(args.weights)
    bounds = ObjectiveBounds.load(args.bounds)
    tc = _train_config(cfg, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.ckpt"
    res = train_subproblem(inst, _space(cfg), weights, bounds, tc, checkpoint_path=ckpt,
                           progress=_progress(args))
    atomic_write_bytes(out / "reward_curve.csv", curve_csv(res.curve).encode())
    sched = res.greedy_episode.schedule(0)
    write_schedule(out / "schedule.csv", inst, sched)
    write_json(out / "objectives.json", {**_triple_dict(res.greedy_objectives),
                                         "feasible": res.greedy_feasible, "reward": res.greedy_reward,
                                         "weights": weights.as_array().tolist()})
    write_sidecar(out / "run.json", args, argv, seed, cfg,
                  [ckpt, out / "reward_curve.csv", out / "schedule.csv", out / "objectives.json"])
    print(f"greedy decode: feasible={res.greedy_feasible} reward={res.greedy_reward:.6f} "
          f"objectives={_triple_dict(res.greedy_objectives)}")
    return 0


def _progress(args):
    if not getattr(args, "verbose", False):
        return None
    return lambda p: log.info("iter %d epoch %d mean_reward %.5f baseline %.5f",
                              p.iteration, p.epoch, p.mean_reward, p.baseline_reward)


def cmd_sweep(args, argv) -> int:
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    inst, _ = _dataset(args.dataset)
    bounds = ObjectiveBounds.load(args.bounds)
    tc = _train_config(cfg, seed)
    weights = weight_grid()
    if args.limit is not None:
        weights = weights[:args.limit]
    out = Path(args.out)
    records = train_sweep(inst, _space(cfg), bounds, tc, weights, out_dir=out / "checkpoints",
                          workers=args.workers)
    rows = []
    summary = [["index", "weights", "seed", "feasible", "reward", "power", "aapfd", "water_revenue",
                "diagnostic"]]
    for r in records:
        obj = r.objectives if r.objectives is not None else [np.nan] * 3
        if r.feasible:
            rows.append(FrontRow("drl", r.weights.label(), *obj, True, r.seed))
        summary.append([r.index, r.weights.label(), r.seed, int(r.feasible), repr(r.reward)]
                       + [repr(float(v)) for v in obj] + [r.diagnostic])
        if r.curve:
            atomic_write_bytes(out / "curves" / f"reward_curve_{r.index:03d}.csv", curve_csv(r.curve).encode())
    write_front(out / "front.csv", rows)
    atomic_write_bytes(out / "sweep.csv", _csv_bytes(summary))
    write_sidecar(out / "run.json", args, argv, seed, cfg, [out / "front.csv", out / "sweep.csv"])
    failed = sum(not r.feasible for r in records)
    print(f"{len(records)} subproblems, {len(records) - failed} feasible, {failed} failed")
    return 0


def cmd_moea(args, argv) -> int:
    cfg = load_config(args.config)
    seed = _seed(args, cfg)
    inst, _ = _dataset(args.dataset)
    try:
        mc = MoeaConfig(**{**cfg["moea"], "seed": seed})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"moea config: {exc}") from None
    rng = np.random.default_rng(seed)
    if args.algo == "nsga3":
        res = nsga3_run(inst, mc, rng)
    else:
        if args.bounds is None:
            raise ConfigError("moead needs --bounds (shared objective bounds file)")
        res = moead_run(inst, ObjectiveBounds.load(args.bounds), mc, rng)
    rows = [FrontRow(args.algo, str(k), *obj, True, seed) for k, obj in enumerate(res.objectives)]
    out = Path(args.out)
    write_front(out, rows)
    write_sidecar(out.with_name(out.name + ".run.json"), args, argv, seed, cfg, [out])
    print(f"{args.algo}: {len(rows)} feasible nondominated solutions "
          f"({res.feasible_count} feasible in final population)")
    return 0


def cmd_pareto(args, argv) -> int:
    rows = []
    for path in args.inputs:
        rows.extend(read_front(path))
    merged = merge_fronts(rows)
    out = Path(args.out)
    write_front(out, merged)
    methods = list(dict.fromkeys(r.method for r in rows if r.feasible))
    reports = {}
    if methods:
        ref = args.against or methods[0]
        mine = [r.objectives for r in rows if r.feasible and r.method == ref]
        for other in methods:
            if other == ref:
                continue
            theirs = [r.objectives for r in rows if r.feasible and r.method == other]
            if mine and theirs:
                reports[other] = improvement_report(mine, theirs)
                print(f"{ref} vs {other}:")
                print(format_report(reports[other]))
    write_json(out.with_name(out.name + ".report.json"), reports)
    write_sidecar(out.with_name(out.name + ".run.json"), args, argv, None, {}, [out])
    print(f"merged front: {len(merged)} nondominated rows from {len(rows)} inputs")
    return 0


def cmd_evaluate(args, argv) -> int:
    inst, _ = _dataset(args.dataset)
    model, meta = PolicyModel.load(args.checkpoint)
    env, ev = greedy_evaluation(model, inst)
    sched = env.schedule(0)
    report = check_constraints(inst, sched)
    triple = objective_triple(inst, sched)
    out = Path(args.out)
    write_schedule(out, inst, sched)
    obj_path = out.with_name(out.stem + ".objectives.json")
    write_json(obj_path, {**_triple_dict(triple.as_tuple()), "feasible": report.feasible,
                          "violations": report.summary()})
    write_sidecar(out.with_name(out.name + ".run.json"), args, argv, meta.get("seed"), meta, [out, obj_path])
    print(f"schedule written to {out}; feasible={report.feasible}; {_triple_dict(triple.as_tuple())}")
    return 0


def rescore_schedule(path, inst):
    """Objective triple of a schedule CSV recomputed from its decision columns."""
    qp, x, qs = read_schedule(path, inst)
    return objective_triple(inst, derive_trajectory(inst, qp, x, qs))


def cmd_export_plots(args, argv) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [["run", "iteration", "mean_reward", "baseline_reward", "lr"]]
    for run in args.runs or []:
        for path in sorted(Path(run).rglob("reward_curve*.csv")):
            with open(path, newline="", encoding="utf-8") as fh:
                for rec in csv.DictReader(fh):
                    lines.append([str(path.relative_to(run).with_suffix("")), rec["iteration"],
                                  rec["mean_reward"], rec["baseline_reward"], rec["lr"]])
    atomic_write_bytes(out / "reward_curves.csv", _csv_bytes(lines))
    scatter = [["method", "power", "aapfd", "water_revenue"]]
    for path in args.fronts or []:
        for r in read_front(path):
            if r.feasible:
                scatter.append([r.method, repr(r.power), repr(r.aapfd), repr(r.water_revenue)])
    atomic_write_bytes(out / "front_scatter.csv", _csv_bytes(scatter))
    write_sidecar(out / "run.json", args, argv, None, {}, [out / "reward_curves.csv", out / "front_scatter.csv"])
    print(f"wrote {len(lines) - 1} curve points and {len(scatter) - 1} front points to {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hydro-tdrl", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True, config=True):
        if config:
            p.add_argument("--config", help="JSON config file (defaults apply to missing keys)")
        if seed:
            p.add_argument("--seed", type=int, help="overrides the config seed")

    p = sub.add_parser("validate", help="check a dataset directory")
    p.add_argument("dataset", help="dataset directory or 'desk' for the bundled instance")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bounds", help="estimate objective bounds")
    p.add_argument("dataset")
    p.add_argument("--method", choices=["sample", "train"])
    p.add_argument("--budget", type=int)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("train", help="train one weighted subproblem")
    p.add_argument("dataset")
    p.add_argument("--weights", required=True, help="a,b,c summing to 1")
    p.add_argument("--bounds", required=True)
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train every subproblem of the weight grid")
    p.add_argument("dataset")
    p.add_argument("--bounds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, help="only the first N weight vectors")
    p.add_argument("--workers", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("moea", help="run an evolutionary baseline")
    p.add_argument("dataset")
    p.add_argument("--algo", choices=["nsga3", "moead"], required=True)
    p.add_argument("--bounds", help="shared bounds file (required for moead)")
    p.add_argument("--out", required=True, help="front CSV path")
    common(p)
    p.set_defaults(func=cmd_moea)

    p = sub.add_parser("pareto", help="merge fronts and report improvements")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--against", help="method whose best values are compared to the others "
                                     "(default: first method seen)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("evaluate", help="greedy-decode a checkpoint into a schedule CSV")
    p.add_argument("checkpoint")
    p.add_argument("--dataset", default="desk")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-plots", help="plot-ready CSVs for reward curves and fronts")
    p.add_argument("--runs", nargs="*", help="training output directories")
    p.add_argument("--fronts", nargs="*", help="front CSV files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_plots)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except (DataError, HydroError, FrontError, BoundsError, CheckpointError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: file not found", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # reported with its type, never swallowed
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
