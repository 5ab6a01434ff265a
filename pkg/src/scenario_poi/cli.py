"""Command-line entry point: prepare, train, eval, analyze.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import TrainConfig, load_config_file, resolve_config
from .evaluator import (
    category_delta,
    distance_hist,
    slice_report,
    target_ranks,
    write_category_csv,
    write_distance_csv,
)
from .fusion import top_k
from .ingest import ConfigError, ParseError
from .manifest import RunManifest, sha256_file
from .pipeline import load_prepared, prepare_from_file, save_prepared
from .scenarios import DEFAULT_ACCOMMODATION, load_centers
from .trainer import CHECKPOINT_VERSION, load_checkpoint, read_meta, save_checkpoint, train

logger = logging.getLogger("scenario_poi")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
REPORT_VERSION = 1


class UsageError(Exception):
    pass


# -- prepare ----------------------------------------------------------------

def cmd_prepare(args: argparse.Namespace) -> int:
    dataset = Path(args.dataset)
    if not dataset.is_file():
        raise UsageError(f"dataset not found: {dataset}")
    centers = load_centers(args.centers) if args.centers else None
    accommodation = tuple(a.strip() for a in args.accommodation.split(",") if a.strip())
    data = prepare_from_file(
        dataset, args.format, centers,
        tz_offset=args.tz_offset, min_user=args.min_user, min_poi=args.min_poi,
        ratio=args.split_ratio, tourist_threshold=args.tourist_threshold,
        radius_km=args.downtown_radius_km, accommodation=accommodation,
    )
    settings = {
        "format": args.format,
        "tz_offset": args.tz_offset,
        "min_user": args.min_user,
        "min_poi": args.min_poi,
        "split_ratio": args.split_ratio,
        "tourist_threshold": args.tourist_threshold,
        "downtown_radius_km": args.downtown_radius_km,
        "accommodation": list(accommodation),
        "centers": [[c.name, c.lat, c.lon] for c in data.centers],
    }
    save_prepared(data, args.out, args.geo_threshold_km, source=dataset, settings=settings)
    logger.info("prepared %d users, %d POIs, %d/%d train/test trajectories -> %s",
                data.catalog.n_users, data.catalog.n_pois, len(data.train), len(data.test), args.out)
    return EXIT_OK


# -- train ------------------------------------------------------------------

def _config_overrides(args: argparse.Namespace) -> dict:
    return {f.name: getattr(args, f.name) for f in fields(TrainConfig) if getattr(args, f.name, None) is not None}


def cmd_train(args: argparse.Namespace) -> int:
    file_values = load_config_file(args.config) if args.config else {}
    config = resolve_config(file_values, _config_overrides(args))
    data = load_prepared(args.prepared)
    result = train(config, data)
    out = save_checkpoint(result, args.out, prepared=args.prepared)

    from .plotting import plot_losses

    plot_losses(result.loss_rows, out / "losses.png")
    RunManifest(
        kind="checkpoint",
        version=CHECKPOINT_VERSION,
        config=config.to_dict(),
        inputs={"prepared": sha256_file(Path(args.prepared) / "trajectories.tsv")},
        seed=config.seed,
        extra={"best_epoch": result.best_epoch, "splits": len(result.splits)},
    ).write(out)
    logger.info("trained %d epochs (best %d), %d splits -> %s",
                len(result.history), result.best_epoch, len(result.splits), out)
    return EXIT_OK


# -- eval / analyze ---------------------------------------------------------

def _open_checkpoint(args: argparse.Namespace):
    ckpt = Path(args.checkpoint)
    meta = read_meta(ckpt)
    prepared = Path(args.prepared) if args.prepared else None
    if prepared is None:
        if meta.get("prepared") is None:
            raise UsageError("checkpoint does not record its prepared directory; pass --prepared")
        prepared = (ckpt / meta["prepared"]).resolve()
    data = load_prepared(prepared)
    model, _opt, config, _splits = load_checkpoint(ckpt, data)
    return ckpt, prepared, data, model, config


def _output_dir(args: argparse.Namespace, ckpt: Path, default: str) -> Path:
    out = Path(args.out) if args.out else ckpt / default
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, kind: str, ckpt: Path, prepared: Path, config: TrainConfig, extra=None) -> None:
    RunManifest(
        kind=kind,
        version=REPORT_VERSION,
        config=config.to_dict(),
        inputs={
            "checkpoint_routing": sha256_file(ckpt / "routing.json"),
            "prepared": sha256_file(prepared / "trajectories.tsv"),
        },
        seed=config.seed,
        extra=extra or {},
    ).write(out)


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt, prepared, data, model, config = _open_checkpoint(args)
    out = _output_dir(args, ckpt, "eval")
    scenarios = data.test_scenarios
    scores = model.score_all(data.test, scenarios)
    targets = [t.target.poi_id for t in data.test]
    ranks = target_ranks(scores, targets)
    report = slice_report(ranks, scenarios)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "metrics.csv").write_text(report.to_csv(), encoding="utf-8")

    first_test_id = len(data.train)
    k = min(args.top_k, data.catalog.n_pois)
    best = top_k(scores, k) if len(scores) else np.zeros((0, k), dtype=np.int64)
    with open(out / "predictions.tsv", "w", encoding="utf-8") as fh:
        for i, row in enumerate(best):
            for rank, p in enumerate(row, start=1):
                fh.write(f"{first_test_id + i}\t{rank}\t{int(p)}\t{float(scores[i, p])!r}\n")
    with open(out / "scenarios.tsv", "w", encoding="utf-8") as fh:
        for i, s in enumerate(scenarios):
            fh.write(f"{first_test_id + i}\t{s}\n")

    from .plotting import plot_slice_metrics

    if report["overall"] is not None:
        plot_slice_metrics(report.slices, out / "slice_metrics.png")
    _write_manifest(out, "eval", ckpt, prepared, config, {"top_k": k})
    overall = report["overall"]
    if overall:
        logger.info("overall acc@1 %.4f acc@5 %.4f mrr %.4f over %d trajectories",
                    overall["acc@1"], overall["acc@5"], overall["mrr"], overall["count"])
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    from .plotting import plot_category_delta, plot_distance_hist

    ckpt, prepared, data, model, config = _open_checkpoint(args)
    out = _output_dir(args, ckpt, "analysis")
    scenarios = data.test_scenarios
    scores = model.score_all(data.test, scenarios)
    predicted = top_k(scores, 1)[:, 0] if len(scores) else np.zeros(0, dtype=np.int64)
    targets = [t.target.poi_id for t in data.test]
    notes = []

    delta = category_delta(predicted, targets, [p.category for p in data.catalog.pois], scenarios)
    if delta is None:
        notes.append("category delta skipped: dataset has no POI categories")
        print(f"notice: {notes[-1]}", file=sys.stderr)
    else:
        write_category_csv(delta, out / "category_delta.csv")
        plot_category_delta(delta, out / "category_delta.png")

    origins = np.array([[t.last_input.lat, t.last_input.lon] for t in data.test], dtype=float).reshape(-1, 2)
    hist = distance_hist(predicted, targets, origins, data.poi_coords(), scenarios)
    write_distance_csv(hist, out / "distance_hist.csv")
    if len(hist) > 1:
        plot_distance_hist(hist, out / "distance_hist.png")
    _write_manifest(out, "analysis", ckpt, prepared, config, {"notes": notes})
    return EXIT_OK


# -- argument parsing -------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_argument_group("config overrides (take precedence over --config)")
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            group.add_argument(flag, dest=f.name, action="store_const", const=True, default=None)
        elif f.type == "int":
            group.add_argument(flag, dest=f.name, type=int, default=None, metavar="N")
        elif f.type == "float":
            group.add_argument(flag, dest=f.name, type=float, default=None, metavar="X")
        else:
            group.add_argument(flag, dest=f.name, default=None, metavar="A,B",
                               help="comma-separated parameter names or prefixes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenario-poi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest check-ins, label scenarios, build graphs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", required=True, choices=("foursquare", "gowalla"))
    p.add_argument("--centers", help="TSV of name<TAB>lat<TAB>lon (required for gowalla)")
    p.add_argument("--out", required=True)
    p.add_argument("--tz-offset", type=int, default=0, help="minutes added to UTC for gowalla rows")
    p.add_argument("--min-user", type=int, default=0, help="drop users with fewer check-ins")
    p.add_argument("--min-poi", type=int, default=0, help="drop POIs with fewer check-ins")
    p.add_argument("--split-ratio", type=float, default=0.8)
    p.add_argument("--geo-threshold-km", type=float, default=2.5)
    p.add_argument("--downtown-radius-km", type=float, default=10.0)
    p.add_argument("--tourist-threshold", type=float, default=0.05)
    p.add_argument("--accommodation", default=",".join(DEFAULT_ACCOMMODATION),
                   help="comma-separated category substrings counted as accommodation")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a prepared directory")
    p.add_argument("--prepared", required=True)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", required=True, help="checkpoint directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func, default in (("eval", cmd_eval, "eval"), ("analyze", cmd_analyze, "analysis")):
        p = sub.add_parser(name, help=f"{name} a checkpoint on the test split")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--prepared", help="override the prepared directory recorded in the checkpoint")
        p.add_argument("--out", help=f"output directory (default <checkpoint>/{default})")
        if name == "eval":
            p.add_argument("--top-k", type=int, default=20)
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, OSError, ValueError, FloatingPointError, json.JSONDecodeError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
