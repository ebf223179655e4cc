"""Command-line entry point: ``lailoss <command> ...``.

Exit status is 0 on success, 1 on runtime failure and 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import datasets, landscape, metrics
from .errors import ConfigError, DimensionError, LaiError, ParseError
from .lai_loss import factor_mae, factor_mse
from .mlp import load_checkpoint, save_checkpoint
from .trainer import TrainConfig, run_experiment


class UsageError(Exception):
    pass


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {path}")
    return p


def _fresh_output_dir(path: str) -> Path:
    out = Path(path)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise UsageError(f"output directory {path} exists and is not empty")
    return out


def cmd_train(args) -> int:
    cfg_path = _require_file(args.config)
    data_path = _require_file(args.data)
    out = _fresh_output_dir(args.out)
    config = TrainConfig.from_json(cfg_path)
    if args.seed is not None:
        config.seed = args.seed
    data = datasets.load_csv(data_path, drop_id=args.drop_id)
    config.lai.lambdas_for(data.n_features)

    result = run_experiment(config, data)
    summary = result.summary()
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".lailoss-", dir=out.parent))
    try:
        result.report.write_csv(tmp / "report.csv")
        result.report.write_timing_csv(tmp / "timing.csv")
        result.report.write_batch_trail(tmp / "lai_batches.csv")
        save_checkpoint(result.model, tmp / "checkpoint.txt", result.train.standardization)
        (tmp / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (tmp / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
        if out.exists():
            out.rmdir()
        tmp.rename(out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_landscape(args) -> int:
    data = datasets.gen_linear_band(
        args.n, args.slope, args.intercept, args.x_half_range, args.band_half_width, args.seed, symmetric=not args.iid
    )
    grid = landscape.grid_eval(
        data,
        (args.slope_min, args.slope_max, args.slope_steps),
        (args.intercept_min, args.intercept_max, args.intercept_steps),
        args.loss,
        args.lam,
    )
    if args.out:
        landscape.export_grid(grid, args.out)
    m, b, v = landscape.grid_argmin(grid)
    print(json.dumps({"slope": m, "intercept": b, "loss": v}))
    return 0


def cmd_sensitivity(args) -> int:
    model, stats = load_checkpoint(_require_file(args.checkpoint))
    data = datasets.load_csv(_require_file(args.data), drop_id=args.drop_id)
    if data.n_features != model.n_inputs:
        raise DimensionError(f"checkpoint expects {model.n_inputs} features, data has {data.n_features}")
    if stats is not None:
        data = datasets.apply_standardization(data, *stats)
    report = metrics.sensitivity_report(model, data.X, data.feature_names, args.sigma, args.seed, args.repeats)
    baseline = metrics.read_sensitivity_csv(_require_file(args.baseline)) if args.baseline else None
    metrics.write_sensitivity_csv(report, args.out, baseline)
    change = report.percent_change()
    print(
        json.dumps(
            {
                "features": report.feature_names,
                "sensitivity": report.values.tolist(),
                "percent_change": None if change is None else change.tolist(),
            }
        )
    )
    return 0


def cmd_factor_curve(args) -> int:
    if not args.lam > 0:
        raise ConfigError(f"lambda must be > 0, got {args.lam}")
    if args.steps < 2 or not args.k_max > args.k_min:
        raise ConfigError("need k_max > k_min and at least 2 steps")
    k = np.linspace(args.k_min, args.k_max, args.steps)
    f = factor_mae(k, args.lam) if args.loss == "mae" else factor_mse(k, args.lam)
    with open(args.out, "w") as fh:
        fh.write("k,factor\n")
        for kk, ff in zip(k, f):
            fh.write(f"{kk:.17g},{ff:.17g}\n")
    i = int(np.argmin(f))
    print(json.dumps({"k_at_min": float(k[i]), "min_factor": float(f[i])}))
    return 0


def _read_report(path: Path) -> dict:
    header = path.read_text().splitlines()[0].split(",")
    if header[:2] == ["feature_name", "sensitivity"]:
        rep = metrics.read_sensitivity_csv(path)
        return {"kind": "sensitivity", "names": rep.feature_names, "values": rep.values}
    if header[:3] == ["epoch", "train_loss", "val_rmse"]:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return {"kind": "train", "val_rmse": data[:, 2]}
    raise ParseError(f"{path}: unrecognised report header {header}")


def cmd_compare(args) -> int:
    a = _read_report(_require_file(args.report_a))
    b = _read_report(_require_file(args.report_b))
    if a["kind"] != b["kind"]:
        raise ConfigError("cannot compare a training report with a sensitivity report")
    if a["kind"] == "train":
        ra, rb = float(a["val_rmse"][-1]), float(b["val_rmse"][-1])
        out = {
            "final_val_rmse": [ra, rb],
            "percent_change": 100.0 * (rb - ra) / ra,
            "max_curve_gap": float(np.max(np.abs(a["val_rmse"][: len(b["val_rmse"])] - b["val_rmse"][: len(a["val_rmse"])]))),
        }
    else:
        if a["names"] != b["names"]:
            raise DimensionError("sensitivity reports cover different features")
        out = {
            "features": a["names"],
            "percent_change": (100.0 * (b["values"] - a["values"]) / a["values"]).tolist(),
        }
    print(json.dumps(out))
    return 0


def cmd_gen_data(args) -> int:
    if args.kind == "band":
        data = datasets.gen_linear_band(args.n, seed=args.seed)
    else:
        data = datasets.gen_nonlinear(args.n, seed=args.seed, noise=args.noise)
    datasets.save_csv(data, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lailoss", description="Lai loss experiments", allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="pretrain, then Lai Training or control epochs", allow_abbrev=False)
    p.add_argument("--config", required=True, help="JSON training config")
    p.add_argument("--data", required=True, help="CSV with header; last column is the target")
    p.add_argument("--out", required=True, help="fresh output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--drop-id", action="store_true", help="drop the first CSV column")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("landscape", help="brute-force (slope, intercept) loss grid", allow_abbrev=False)
    p.add_argument("--loss", choices=landscape.LOSS_KINDS, default="LaiMAE")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--slope", type=float, default=3.0)
    p.add_argument("--intercept", type=float, default=4.0)
    p.add_argument("--x-half-range", type=float, default=1.0)
    p.add_argument("--band-half-width", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iid", action="store_true", help="independent draws instead of mirrored pairs")
    p.add_argument("--slope-min", type=float, default=landscape.DEFAULT_SLOPE_AXIS[0])
    p.add_argument("--slope-max", type=float, default=landscape.DEFAULT_SLOPE_AXIS[1])
    p.add_argument("--slope-steps", type=int, default=landscape.DEFAULT_SLOPE_AXIS[2])
    p.add_argument("--intercept-min", type=float, default=landscape.DEFAULT_INTERCEPT_AXIS[0])
    p.add_argument("--intercept-max", type=float, default=landscape.DEFAULT_INTERCEPT_AXIS[1])
    p.add_argument("--intercept-steps", type=int, default=landscape.DEFAULT_INTERCEPT_AXIS[2])
    p.add_argument("--out", default=None, help="CSV path for the full grid")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("sensitivity", help="per-feature Gaussian-noise sensitivity", allow_abbrev=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--baseline", default=None, help="earlier sensitivity CSV to compare against")
    p.add_argument("--drop-id", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("factor-curve", help="sample the geometric factor over k", allow_abbrev=False)
    p.add_argument("--loss", choices=("mae", "mse"), default="mae")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--k-min", type=float, default=0.0)
    p.add_argument("--k-max", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=3001)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_factor_curve)

    p = sub.add_parser("compare", help="percent-change summary of two reports", allow_abbrev=False)
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-data", help="write a synthetic dataset as CSV", allow_abbrev=False)
    p.add_argument("kind", choices=("band", "nonlinear"))
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ParseError, DimensionError) as exc:
        print(f"lailoss: error: {exc}", file=sys.stderr)
        return 2
    except (LaiError, OSError) as exc:
        print(f"lailoss: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
