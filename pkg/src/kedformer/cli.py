"""Command-line entry point: train, predict, decompose, ablate, bench.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage error.
"""

import argparse
import csv
import json
import logging
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import DEFAULT_GRID, run_scaling
from .decomp import DEFAULT_KERNEL, mstw_decompose
from .errors import ConfigurationError, IncompatibleCheckpointError, InsufficientDataError, KedformerError
from .model import ABLATIONS, KEDformer, ModelConfig, load_checkpoint
from .data import (
    SYNTHETIC_KINDS, Scaler, SeriesFrame, SplitSpec, format_timestamp, chronological_split, load_csv, save_csv,
    standardize, synth_generate, window_arrays,
)
from .train import (
    TrainConfig, baseline_mean, baseline_persistence, baseline_seasonal_naive, evaluate, mae, mse,
    train_loop,
)

log = logging.getLogger("kedformer")

OUT_ENV = "KEDFORMER_OUT"
CHECKPOINT_FILE = "model.kedf"
SCALER_FILE = "scaler.json"
MANIFEST_FILE = "manifest.json"
FORECAST_FILE = "forecast.csv"


class UsageError(Exception):
    """Bad flags or missing inputs; maps to exit code 2."""


# ------------------------------------------------------------------ parser
def _add_data_flags(p, synthetic_default=None):
    src = p.add_mutually_exclusive_group(required=synthetic_default is None)
    src.add_argument("--data", metavar="PATH", help="CSV with a timestamp column then feature columns")
    src.add_argument("--synthetic", metavar="KIND", choices=SYNTHETIC_KINDS, default=synthetic_default,
                     help=f"generate a series instead: {', '.join(SYNTHETIC_KINDS)}")
    p.add_argument("--length", type=int, default=2000, help="synthetic series length")
    p.add_argument("--features", type=int, default=1, help="synthetic feature count")
    p.add_argument("--noise", type=float, default=0.1, help="synthetic noise level")
    p.add_argument("--period", type=int, default=24, help="synthetic period; also the seasonal-naive period")
    p.add_argument("--forward-fill", action="store_true", help="fill empty CSV cells from the previous row")


def _add_model_flags(p):
    p.add_argument("--I", dest="input_len", type=int, default=96, help="input window length")
    p.add_argument("--O", dest="horizon", type=int, default=24, help="forecast horizon")
    p.add_argument("--d-model", type=int, default=32)
    p.add_argument("--enc-layers", type=int, default=2)
    p.add_argument("--dec-layers", type=int, default=1)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--factor", type=float, default=3.0, help="attention factor c")
    p.add_argument("--ma-kernel", type=int, default=DEFAULT_KERNEL, help="moving-average kernel (odd)")


def _add_train_flags(p):
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--weight-decay", type=float, default=0.1)
    p.add_argument("--max-epochs", type=int, default=10)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)


def _add_out_flag(p):
    p.add_argument("--out", metavar="DIR", help=f"output directory (default: ${OUT_ENV} or ./runs)")


def build_parser():
    parser = argparse.ArgumentParser(prog="kedformer", description="Seasonal-trend forecasting with "
                                     "knowledge-extraction attention.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and write its run directory")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--variant", choices=ABLATIONS, default="KEDformer", help="attention layout")
    p.add_argument("--repeats", type=int, default=1, help="independent runs with seeds seed, seed+1, ...")
    _add_out_flag(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", help="forecast the window after the last I rows of a CSV")
    p.add_argument("--run", metavar="DIR", help="run directory holding the checkpoint and scaler")
    p.add_argument("--checkpoint", metavar="PATH")
    p.add_argument("--scaler", metavar="PATH")
    p.add_argument("--data", metavar="PATH", required=True, help="input CSV with at least I rows")
    p.add_argument("--forward-fill", action="store_true")
    _add_out_flag(p)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("decompose", help="write raw, trend and seasonal columns per feature")
    _add_data_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ma-kernel", type=int, default=DEFAULT_KERNEL)
    _add_out_flag(p)
    p.set_defaults(handler=cmd_decompose)

    p = sub.add_parser("ablate", help="train the KEDformer, V1 and V2 layouts under one seed")
    _add_data_flags(p)
    _add_model_flags(p)
    _add_train_flags(p)
    _add_out_flag(p)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("bench", help="attention forward-pass scaling study")
    p.add_argument("--L-grid", dest="grid", default=",".join(map(str, DEFAULT_GRID)),
                   help="comma-separated sequence lengths")
    p.add_argument("--reps", type=int, default=5, help="timed repetitions per point (median reported)")
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--factor", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    _add_out_flag(p)
    p.set_defaults(handler=cmd_bench)
    return parser


# ----------------------------------------------------------------- helpers
def _out_dir(args, default_name):
    path = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "runs")) / default_name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _git_describe():
    try:
        result = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                                cwd=Path(__file__).resolve().parent, capture_output=True, text=True,
                                timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return result.stdout.strip() or "unknown"


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value):
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def _require_file(path):
    if not Path(path).is_file():
        raise UsageError(f"file not found: {path}")


def load_source(args, seed=None):
    """The raw series named by ``--data`` or ``--synthetic``, plus a description."""
    if args.data:
        _require_file(args.data)
        return load_csv(args.data, forward_fill=args.forward_fill), {"path": str(args.data)}
    seed = args.seed if seed is None else seed
    if args.length < 1 or args.features < 1:
        raise UsageError("--length and --features must be positive")
    frame = synth_generate(args.synthetic, args.length, D=args.features, noise=args.noise, seed=seed,
                           period=args.period)
    return frame, {"synthetic": args.synthetic, "length": args.length, "features": args.features,
                   "noise": args.noise, "period": args.period, "seed": seed}


def model_config(args, n_features, variant="KEDformer"):
    return ModelConfig.for_ablation(
        variant, heads=args.heads, factor=args.factor, input_len=args.input_len, horizon=args.horizon,
        feature_dim=n_features, d_model=args.d_model, enc_layers=args.enc_layers,
        dec_layers=args.dec_layers, ma_kernel=args.ma_kernel,
    )


def train_config(args, seed):
    return TrainConfig(lr=args.lr, batch_size=args.batch, weight_decay=args.weight_decay,
                       max_epochs=args.max_epochs, patience=args.patience, seed=seed)


def prepare(frame, input_len, horizon):
    """Split 7:1:2, standardize on train, window each segment."""
    parts = chronological_split(frame, SplitSpec(), min_len=input_len + horizon)
    scaled, scaler = standardize(*parts)
    arrays = [window_arrays(p, input_len, horizon) for p in scaled]
    return arrays, scaler


def forecast_last_window(model, scaler, frame):
    """Original-unit forecast for the ``O`` steps after the last ``I`` rows (batch size 1)."""
    cfg = model.cfg
    if frame.n_features != cfg.feature_dim or len(scaler.mean) != cfg.feature_dim:
        raise IncompatibleCheckpointError(
            f"data has {frame.n_features} features, scaler {len(scaler.mean)}, checkpoint {cfg.feature_dim}"
        )
    if len(frame) < cfg.input_len:
        raise InsufficientDataError(f"need at least {cfg.input_len} rows to forecast, got {len(frame)}")
    window = scaler.transform(frame.values[-cfg.input_len:])
    pred = scaler.inverse(model.predict(window[None])[0])
    stamps = frame.timestamps
    step = stamps[-1] - stamps[-2] if len(stamps) > 1 else 1.0
    return SeriesFrame(stamps[-1] + step * np.arange(1, cfg.horizon + 1), pred, frame.names)


def baseline_metrics(X, Y, horizon, period):
    out = {}
    preds = {"persistence": baseline_persistence(X, horizon), "mean": baseline_mean(X, horizon)}
    if 1 <= period <= X.shape[-2]:
        preds["seasonal_naive"] = baseline_seasonal_naive(X, horizon, period)
    for name, pred in preds.items():
        out[f"{name}_mse"] = mse(pred, Y)
        out[f"{name}_mae"] = mae(pred, Y)
    return out


def run_training(args, seed, out_dir, variant, frame=None, source=None):
    """Train one model and write every artifact into ``out_dir``; returns the metric dict."""
    if frame is None:
        frame, source = load_source(args, seed)
    (train_xy, val_xy, test_xy), scaler = prepare(frame, args.input_len, args.horizon)
    cfg = model_config(args, frame.n_features, variant)
    tcfg = train_config(args, seed)
    model = KEDformer(cfg, seed=seed)
    log.info("training %s (%d parameters) on %d windows", variant, model.n_params(), len(train_xy[0]))
    history = train_loop(model, train_xy, val_xy, tcfg)

    scores = evaluate(model, *test_xy)
    metrics = {"test_mse": scores["mse"], "test_mae": scores["mae"],
               "best_val_mse": min(h["val_mse"] for h in history), "epochs": len(history)}
    metrics.update(baseline_metrics(*test_xy, args.horizon, getattr(args, "period", 24)))

    out_dir.mkdir(parents=True, exist_ok=True)
    if args.data is None:
        save_csv(frame, out_dir / "data.csv")
    model.save(out_dir / CHECKPOINT_FILE, extra={"variant": variant, "train_config": tcfg.to_dict()})
    _write_json(out_dir / SCALER_FILE, scaler.to_dict())
    _write_rows(out_dir / "history.csv", ["epoch", "train_mse", "val_mse", "seconds"],
                [[h["epoch"], _fmt(h["train_mse"]), _fmt(h["val_mse"]), _fmt(h["seconds"])] for h in history])
    _write_rows(out_dir / "metrics.csv", ["metric", "value"], [[k, _fmt(v)] for k, v in metrics.items()])
    save_csv(forecast_last_window(model, scaler, frame), out_dir / FORECAST_FILE)
    _write_json(out_dir / MANIFEST_FILE, {
        "command": "train",
        "version": __version__,
        "git_describe": _git_describe(),
        "variant": variant,
        "seed": seed,
        "dataset": source,
        "model_config": cfg.to_dict(),
        "train_config": tcfg.to_dict(),
        "n_params": model.n_params(),
        "artifacts": sorted(p.name for p in out_dir.iterdir() if p.name != MANIFEST_FILE) + [MANIFEST_FILE],
    })
    metrics["seconds_per_epoch"] = float(np.mean([h["seconds"] for h in history]))
    metrics["n_params"] = model.n_params()
    return metrics


# ---------------------------------------------------------------- commands
def cmd_train(args):
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    root = _out_dir(args, f"train-{args.variant}-seed{args.seed}")
    seeds = [args.seed + r for r in range(args.repeats)]
    results = []
    for seed in seeds:
        out = root if args.repeats == 1 else root / f"seed{seed}"
        results.append(run_training(args, seed, out, args.variant))
        print(f"seed {seed}: test MSE {results[-1]['test_mse']:.6f}  MAE {results[-1]['test_mae']:.6f}")
    if args.repeats > 1:
        rows = []
        for key in ("test_mse", "test_mae"):
            vals = np.array([r[key] for r in results])
            rows.append([key, _fmt(vals.mean()), _fmt(vals.min()), _fmt(vals.max())])
            print(f"{key}: {vals.mean():.6f} (range {vals.min():.6f} .. {vals.max():.6f}, {len(vals)} runs)")
        _write_rows(root / "summary.csv", ["metric", "mean", "min", "max"], rows)
    print(f"artifacts in {root}")
    return 0


def cmd_predict(args):
    run = Path(args.run) if args.run else None
    checkpoint = args.checkpoint or (run / CHECKPOINT_FILE if run else None)
    scaler_path = args.scaler or (run / SCALER_FILE if run else None)
    if checkpoint is None or scaler_path is None:
        raise UsageError("give --run DIR or both --checkpoint and --scaler")
    for path in (checkpoint, scaler_path, args.data):
        _require_file(path)
    cfg, params, seed, _ = load_checkpoint(checkpoint)
    with open(scaler_path) as fh:
        try:
            scaler = Scaler.from_dict(json.load(fh))
        except (ValueError, KeyError) as exc:
            raise IncompatibleCheckpointError(f"{scaler_path} is not a scaler file: {exc}") from None
    frame = load_csv(args.data, forward_fill=args.forward_fill)
    forecast = forecast_last_window(KEDformer(cfg, params, seed), scaler, frame)
    out = _out_dir(args, "predict") / FORECAST_FILE
    save_csv(forecast, out)
    print(f"wrote {cfg.horizon}-step forecast to {out}")
    return 0


def cmd_decompose(args):
    frame, _ = load_source(args)
    pair = mstw_decompose(frame.values[None], args.ma_kernel)
    trend, seasonal = pair.trend.data[0], pair.seasonal.data[0]
    rows = []
    for j, name in enumerate(frame.names):
        for t in range(len(frame)):
            rows.append([format_timestamp(frame.timestamps[t]), name, _fmt(frame.values[t, j]), _fmt(trend[t, j]),
                         _fmt(seasonal[t, j])])
    out = _out_dir(args, "decompose") / "decomposition.csv"
    _write_rows(out, ["t", "feature", "raw", "trend", "seasonal"], rows)
    print(f"wrote {len(frame)} rows x {frame.n_features} features to {out}")
    return 0


def cmd_ablate(args):
    root = _out_dir(args, f"ablate-seed{args.seed}")
    frame, source = load_source(args)
    results = {v: run_training(args, args.seed, root / v, v, frame, source) for v in ABLATIONS}
    counts = {v: r["n_params"] for v, r in results.items()}
    if len(set(counts.values())) != 1:
        raise KedformerError(f"ablation variants differ in parameter count: {counts}")
    rows = [[v, _fmt(r["test_mse"]), _fmt(r["test_mae"]), _fmt(r["seconds_per_epoch"]), r["n_params"]]
            for v, r in results.items()]
    _write_rows(root / "ablation.csv", ["variant", "mse", "mae", "seconds_per_epoch", "n_params"], rows)
    print(f"{'variant':<10} {'mse':>10} {'mae':>10} {'s/epoch':>9}")
    for v, r in results.items():
        print(f"{v:<10} {r['test_mse']:>10.6f} {r['test_mae']:>10.6f} {r['seconds_per_epoch']:>9.2f}")
    base = next(iter(results.values()))
    print(f"mean baseline {base['mean_mse']:.6f}, persistence {base['persistence_mse']:.6f}")
    return 0


def cmd_bench(args):
    try:
        grid = [int(x) for x in args.grid.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--L-grid must be comma-separated integers, got {args.grid!r}") from None
    if len(grid) < 2 or min(grid) < 2 or args.reps < 1:
        raise UsageError("need at least two lengths >= 2 and --reps >= 1")
    out = _out_dir(args, "bench")
    rows, slopes = run_scaling(grid, repeats=args.reps, d_model=args.d_model, heads=args.heads,
                               factor=args.factor, seed=args.seed)
    _write_rows(out / "bench.csv", ["mechanism", "L", "seconds"],
                [[r.mechanism, r.length, _fmt(r.seconds)] for r in rows])
    _write_json(out / MANIFEST_FILE, {
        "command": "bench", "version": __version__, "git_describe": _git_describe(), "grid": grid,
        "reps": args.reps, "d_model": args.d_model, "heads": args.heads, "factor": args.factor,
        "seed": args.seed, "threads": 1, "slopes": slopes,
    })
    for name, slope in slopes.items():
        print(f"{name}: log-log slope {slope:.3f}")
    return 0


# -------------------------------------------------------------------- main
def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        # non-finite values are reported by the finite checks with provenance
        with np.errstate(over="ignore", invalid="ignore"):
            return args.handler(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"kedformer {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (KedformerError, OSError) as exc:
        print(f"kedformer {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
