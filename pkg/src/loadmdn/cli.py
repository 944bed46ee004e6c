"""Command-line entry point: ``loadmdn {ingest,stats,train,predict,evaluate,compare}``.

Exit status is 0 on success, 2 for usage/config errors and 1 for runtime
failures.  Every command writes the effective ``config.toml`` into ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io, plotting
from .config import CLI_VARIANTS, ConfigError, RunConfig, load_config
from .data import (IngestError, build_features, describe, ingest_load_csv, pacf, resample_hourly,
                   split_chronological)
from .ensemble import EnsembleError, predict_samples, predictive_summary, train_ensemble
from .scoring import ScoreReport, crps_empirical, improvement_table, read_report_csv
from .training import TrainingError

log = logging.getLogger("loadmdn")


class UsageError(Exception):
    pass


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out)
    return out


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _stats_document(values, n_lags: int) -> tuple[dict, np.ndarray | None]:
    values = np.asarray(values, dtype=np.float64)
    doc = {"n": int(values.size), "n_missing": int(np.isnan(values).sum()), "describe": describe(values).as_dict()}
    finite = values[~np.isnan(values)]
    n_lags = min(n_lags, finite.size - 1)
    p = None
    if n_lags >= 1 and finite.std() > 0:
        p = pacf(finite, n_lags)
        doc["pacf"] = p.tolist()
    return doc, p


def _quantile_rows(path: Path, timestamps, targets, mean, q, levels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "kwh", "mean", *(f"q{round(lv * 100):02d}" for lv in levels)])
        for ts, y, m, row in zip(io.format_timestamps(timestamps), targets, mean, q):
            w.writerow([ts, repr(float(y)), repr(float(m)), *(repr(float(v)) for v in row)])


# --- commands ---------------------------------------------------------------

def cmd_ingest(args, cfg: RunConfig) -> int:
    if not args.raw:
        raise UsageError("ingest needs --raw CSV")
    d = cfg.data
    series = ingest_load_csv(args.raw, d.household or None, d.schema, d.skip_invalid)
    hourly = resample_hourly(series)
    data = split_chronological(build_features(hourly), d.train_frac, d.val_frac, d.test_frac)
    out = _out_dir(args, cfg)
    io.write_dataset(data, out)
    stats, p = _stats_document(hourly.kwh, d.pacf_lags)
    stats.update({"household_id": series.household_id, "duplicates": series.duplicates,
                  "hourly_gaps": hourly.n_gaps, "n_samples": len(data),
                  "split": {t: int(data.mask(t).sum()) for t in ("train", "val", "test")}})
    _write_json(stats, out / "stats.json")
    if p is not None:
        plotting.pacf_plot(p, int(np.isfinite(hourly.kwh).sum()), out / "pacf.png")
    print(f"ingested {series.household_id}: {len(series)} readings -> {len(data)} samples in {out}")
    return 0


def cmd_stats(args, cfg: RunConfig) -> int:
    if args.dataset:
        data = io.read_dataset(args.dataset)
        values, label = data.targets, str(args.dataset)
        extra = {t: describe(data.part(t).targets).as_dict() for t in ("train", "val", "test")
                 if data.split is not None and data.mask(t).any()}
    elif args.raw:
        d = cfg.data
        hourly = resample_hourly(ingest_load_csv(args.raw, d.household or None, d.schema, d.skip_invalid))
        values, label, extra = hourly.kwh, str(args.raw), {}
    else:
        raise UsageError("stats needs --dataset or --raw")
    doc, p = _stats_document(values, cfg.data.pacf_lags)
    if extra:
        doc["by_split"] = extra
    out = _out_dir(args, cfg)
    _write_json(doc, out / "stats.json")
    if p is not None:
        plotting.pacf_plot(p, int(np.isfinite(values).sum()), out / "pacf.png")
    s = doc["describe"]
    print(f"{label}: n={doc['n']} mean={s['mean']:.4f} std={s['std']:.4f} median={s['50%']:.4f}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    if not args.dataset:
        raise UsageError("train needs --dataset")
    data = io.read_dataset(args.dataset)
    if data.split is None or data.x_scaler is None:
        raise io.ArtifactError(f"{args.dataset}: dataset has no split/scalers; rerun ingest")
    out = _out_dir(args, cfg)
    model = train_ensemble(cfg.model_spec(), data, cfg.train_config(), cfg.n_members, cfg.train.workers)
    io.save_model(model, out, cfg.variant)
    plotting.training_curves([m.history for m in model.members], out / "history.png")
    for i, m in enumerate(model.members):
        print(f"member {i} seed {m.seed}: best epoch {m.best_epoch} of {len(m.history)}, "
              f"val {m.history[m.best_epoch - 1][2]:.5f}")
    return 0


def _load_for_scoring(args):
    if not args.model or not args.dataset:
        raise UsageError(f"{args.command} needs --model and --dataset")
    manifest = io.read_manifest(args.model)
    data = io.read_dataset(args.dataset)
    io.check_compatible(manifest, data)
    return manifest, io.load_model(args.model), data


def _subset(data, split: str):
    return data if split == "all" or data.split is None else data.part(split)


def cmd_predict(args, cfg: RunConfig) -> int:
    manifest, model, data = _load_for_scoring(args)
    part = _subset(data, args.split)
    p = cfg.predict
    s = predict_samples(model, part.inputs, math.ceil(p.n_samples / len(model)), cfg.seed)
    summary = predictive_summary(s, tuple(p.quantiles))
    out = _out_dir(args, cfg)
    _quantile_rows(out / "quantiles.csv", part.timestamps, part.targets, summary["mean"], summary["quantiles"],
                   summary["levels"])
    plotting.quantile_fan(part.timestamps, part.targets, summary["quantiles"], summary["levels"],
                          out / "quantile_fan.png")
    print(f"{manifest['variant']}: {len(part)} predictive distributions -> {out / 'quantiles.csv'}")
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    manifest, model, data = _load_for_scoring(args)
    part = _subset(data, args.split)
    if len(part) == 0:
        raise ValueError("no rows to evaluate")
    p = cfg.predict
    s = predict_samples(model, part.inputs, math.ceil(p.n_samples / len(model)), cfg.seed)
    report = ScoreReport.from_scores(crps_empirical(s.samples, part.targets), part.timestamps, manifest["variant"])
    summary = predictive_summary(s, tuple(p.quantiles))
    out = _out_dir(args, cfg)
    report.write_csv(out / "crps_report.csv")
    with open(out / "crps_per_sample.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "kwh", "crps"])
        for ts, y, c in zip(io.format_timestamps(part.timestamps), part.targets, report.per_sample):
            w.writerow([ts, repr(float(y)), repr(float(c))])
    _quantile_rows(out / "quantiles.csv", part.timestamps, part.targets, summary["mean"], summary["quantiles"],
                   summary["levels"])
    plotting.crps_profile(report, out / "crps_profile.png")
    plotting.quantile_fan(part.timestamps, part.targets, summary["quantiles"], summary["levels"],
                          out / "quantile_fan.png")
    print(f"{manifest['variant']}: CRPS {report.overall:.6f} kWh over {len(part)} windows")
    return 0


def cmd_compare(args, cfg: RunConfig) -> int:
    if not args.report or len(args.report) < 2:
        raise UsageError("compare needs at least two --report files")
    if not args.baseline:
        raise UsageError("compare needs --baseline")
    reports = {}
    for path in args.report:
        r = read_report_csv(path)
        name = r["variant"] or Path(path).parent.name
        if name in reports:
            raise UsageError(f"duplicate variant {name!r} among reports")
        reports[name] = r["overall"]
    table = improvement_table(reports, args.baseline)
    out = _out_dir(args, cfg)
    with open(out / "improvements.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "crps", "improvement_pct"])
        for name in reports:
            w.writerow([name, repr(reports[name]), repr(table[name])])
    for name in reports:
        print(f"{name:>14}  {reports[name]:.6f}  {table[name]:+7.2f}%")
    return 0


COMMANDS = {"ingest": cmd_ingest, "stats": cmd_stats, "train": cmd_train, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loadmdn", description="Probabilistic household load forecasting.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--seed", type=int)
        if name in ("ingest", "stats"):
            p.add_argument("--raw", help="half-hourly readings CSV")
            p.add_argument("--household")
        if name in ("stats", "train", "predict", "evaluate"):
            p.add_argument("--dataset", help="dataset artifact (directory or dataset.csv)")
        if name == "train":
            p.add_argument("--variant", choices=sorted(CLI_VARIANTS))
        if name in ("predict", "evaluate"):
            p.add_argument("--model", help="model directory holding manifest.json")
            p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
        if name == "compare":
            p.add_argument("--report", action="append", help="crps_report.csv (repeatable)")
            p.add_argument("--baseline", help="variant name to compare against")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"variant": getattr(args, "variant", None), "seed": args.seed,
                                        "data.household": getattr(args, "household", None)})
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"loadmdn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, EnsembleError) as exc:
        cause = exc if isinstance(exc, TrainingError) else exc.__cause__
        if isinstance(cause, TrainingError):
            who = f"member {exc.member}, " if isinstance(exc, EnsembleError) else ""
            print(f"loadmdn {args.command}: training diverged ({who}epoch {cause.epoch}, batch {cause.batch}): "
                  f"{cause}", file=sys.stderr)
        else:
            print(f"loadmdn {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, IngestError, io.ArtifactError) as exc:
        print(f"loadmdn {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
