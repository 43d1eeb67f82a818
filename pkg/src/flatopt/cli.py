"""Command-line front end.

Subcommands: ``train``, ``landscape``, ``verify``, ``bound``, ``compare``.
Every job is deterministic under its config+seed; primary outputs are
byte-identical across reruns (wall-clock timings go to a sidecar). Exit
codes: 0 success, 2 config error, 3 verification failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from .config import (
    BOUND_SCHEMA,
    LANDSCAPE_SCHEMA,
    TRAIN_SCHEMA,
    config_to_jsonable,
    parse_config_file,
    resolve,
)
from .errors import ConfigError, FlatOptError, MissingRun, UnknownSuite
from .flatness import grid_csv, landscape_grids
from .objectives import ToyLandscape2D, toy_landscape
from .pacbayes import BoundInputs, bound_report
from .records import RunRecord, atomic_write_text, dumps_stable, format_float
from .training import run_training
from .verify import run_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3

PANEL_FILES = {
    "original": "panel_a_original.csv",
    "smoothed": "panel_b_smoothed.csv",
    "ball_max": "panel_c_ball_max.csv",
    "taylor": "panel_d_taylor.csv",
}


def _load_config(path, schema, seed_override=None):
    raw = parse_config_file(path) if path else {}
    resolved = resolve(raw, schema)
    if seed_override is not None:
        resolved["seed"] = seed_override
    return resolved


def cmd_train(args) -> int:
    cfg = _load_config(args.config, TRAIN_SCHEMA, args.seed)
    record = run_training(cfg)
    record.save(args.out)
    print(
        f"train: optimizer={cfg['optimizer']} dataset={cfg['dataset']} "
        f"epochs={len(record.rows)} best_test_acc={record.best_test_acc:.4f} -> {args.out}"
    )
    return EXIT_OK


def cmd_landscape(args) -> int:
    cfg = _load_config(args.config, LANDSCAPE_SCHEMA, args.seed)
    params = ToyLandscape2D(
        c1=(cfg["c1x"], cfg["c1y"]),
        c2=(cfg["c2x"], cfg["c2y"]),
        a1=cfg["a1"],
        a2=cfg["a2"],
        s1=cfg["s1"],
        s2=cfg["s2"],
        kappa=cfg["kappa"],
    )
    axis, grids = landscape_grids(
        toy_landscape(params),
        bounds=(cfg["bound_min"], cfg["bound_max"]),
        resolution=cfg["resolution"],
        rho=cfg["rho"],
        mc_samples=cfg["mc_samples"],
        max_points=cfg["max_points"],
        seed=cfg["seed"],
    )
    os.makedirs(args.out, exist_ok=True)
    for panel, filename in PANEL_FILES.items():
        atomic_write_text(os.path.join(args.out, filename), grid_csv(axis, grids[panel]))
    atomic_write_text(
        os.path.join(args.out, "landscape_config.json"),
        dumps_stable(config_to_jsonable(cfg)),
    )
    print(f"landscape: {cfg['resolution']}x{cfg['resolution']} grids at rho={cfg['rho']} -> {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_suite(args.suite)
    os.makedirs(args.out, exist_ok=True)
    atomic_write_text(os.path.join(args.out, "report.json"), dumps_stable(report))
    for check in report["checks"]:
        status = "PASS" if check["pass"] else "FAIL"
        print(f"[{status}] {check['check']}: value={check['value']} tolerance={check['tolerance']}")
    print(f"verify: suite={args.suite} {'PASS' if report['pass'] else 'FAIL'} -> {args.out}")
    return EXIT_OK if report["pass"] else EXIT_VERIFY


def cmd_bound(args) -> int:
    cfg = _load_config(args.config, BOUND_SCHEMA)
    inputs = BoundInputs(
        p=cfg["p"],
        n=cfg["n"],
        delta=cfg["delta"],
        empirical_sam_loss=cfg["empirical_sam_loss"],
        kl_value=cfg["kl"],
        l_max=cfg["l_max"],
    )
    report = bound_report(inputs, c_cover=cfg["c_cover"], gamma_form=cfg["gamma_form"])
    os.makedirs(args.out, exist_ok=True)
    header = "p,n,delta,kl,gamma,bound_with_cover,bound_without_cover"
    row = ",".join(
        [str(report["p"]), str(report["n"])]
        + [
            format_float(report[k])
            for k in ("delta", "kl", "gamma", "bound_with_cover", "bound_without_cover")
        ]
    )
    atomic_write_text(os.path.join(args.out, "bound.csv"), header + "\n" + row + "\n")
    print(f"bound: gamma={report['gamma']:.4f} bound={report['bound_with_cover']:.4f} -> {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    groups = {}
    for run_dir in args.run_dirs:
        run_json = os.path.join(run_dir, "run.json")
        if not os.path.exists(run_json):
            raise MissingRun(f"no run.json under {run_dir}")
        record = RunRecord.load(run_dir)
        key = (record.config.get("dataset", "?"), record.config.get("optimizer", "?"))
        groups.setdefault(key, []).append(record.best_test_acc)
    lines = ["dataset,optimizer,runs,best_test_acc"]
    for (dataset, optimizer) in sorted(groups):
        accs = np.asarray(groups[(dataset, optimizer)])
        std = accs.std(ddof=1) if accs.size > 1 else 0.0
        cell = f"{100 * accs.mean():.2f}^{{±{100 * std:.2f}}}"
        lines.append(f"{dataset},{optimizer},{accs.size},{cell}")
    os.makedirs(args.out, exist_ok=True)
    atomic_write_text(os.path.join(args.out, "comparison.csv"), "\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flatopt",
        description="Perturbed-gradient optimizers and flatness verification toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train an MLP on a synthetic dataset")
    train.add_argument("--config", default=None, help="flat key=value config file")
    train.add_argument("--out", default="run_out", help="output directory")
    train.add_argument("--seed", type=int, default=None, help="override the config seed")
    train.set_defaults(func=cmd_train)

    landscape = sub.add_parser("landscape", help="emit the four landscape panel grids")
    landscape.add_argument("--config", default=None)
    landscape.add_argument("--out", default="landscape_out")
    landscape.add_argument("--seed", type=int, default=None)
    landscape.set_defaults(func=cmd_landscape)

    verify = sub.add_parser("verify", help="run a named verification suite")
    verify.add_argument("--suite", default="all",
                        help="prop1|prop2|prop3|prop4|upperbound|kl|bound|all")
    verify.add_argument("--out", default="verify_out")
    verify.set_defaults(func=cmd_verify)

    bound = sub.add_parser("bound", help="evaluate the generalization bound")
    bound.add_argument("--config", default=None)
    bound.add_argument("--out", default="bound_out")
    bound.set_defaults(func=cmd_bound)

    compare = sub.add_parser("compare", help="summarize runs as mean +- std per optimizer")
    compare.add_argument("run_dirs", nargs="+", help="directories containing run.json")
    compare.add_argument("--out", default="compare_out")
    compare.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UnknownSuite, MissingRun) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FlatOptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
