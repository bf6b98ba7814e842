"""Command-line interface.

Exit codes: 0 success, 2 configuration error (including bad usage),
3 data error (unreadable, malformed or unsuitable input).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from .bench import DEFAULT_ALPHAS, deflate_baseline, run_sweep, write_rows
from .clustering import build_cluster_tree
from .engine import ReductionConfig, prepare, reduce
from .errors import ConfigError, KDSTRError, TechniqueCannotImpute
from .io import CsvSchema, load_csv, parse_time, write_csv
from .metrics import impute, mape, nrmse_details, reconstruct
from .partitioning import PartitionTree
from .serialize import read_reduction, write_reduction
from .synthetic import ARCHETYPES, SyntheticParams, gen_synthetic
from .types import LINK_MODES, TECHNIQUES, Dataset, dataset_storage, reduction_storage

log = logging.getLogger("kdstr")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
STATS_SCHEMA = "kdstr.stats/1"


def _csv_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--input", "-i", help="input CSV")
    g.add_argument("--output", "-o", help="output file (stdout when omitted, where that makes sense)")
    g.add_argument("--time-col", default="time", help="time column (epoch seconds or ISO-8601)")
    g.add_argument("--coord-cols", default="x,y", help="comma-separated coordinate columns")
    g.add_argument("--feature-cols", default=None, help="comma-separated feature columns (default: all others)")
    g.add_argument("--sensor-col", default=None, help="optional sensor label column")
    m = p.add_argument_group("reduction")
    m.add_argument("--alpha", type=float, default=0.5, help="storage weight in [0, 1] (default 0.5)")
    m.add_argument("--technique", choices=TECHNIQUES, default="plr")
    m.add_argument("--link", choices=LINK_MODES, default="region", help="one model per region or per cluster")
    m.add_argument("--metric", choices=("nrmse", "mape"), default="nrmse")
    m.add_argument("--seed", type=int, default=None, help="randomise region seeding with this seed")
    m.add_argument("--max-complexity", type=int, default=32)
    m.add_argument("--max-iterations", type=int, default=10_000)
    m.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kdstr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="reduce a CSV dataset and write the reduction file")
    _common(p)
    p.add_argument("--format", choices=("binary", "json"), default="binary")
    p.add_argument("--dump-partitions", metavar="PATH", help="write every visited partition level as JSON")
    p.add_argument("--stats", metavar="PATH", help="also write the stats record to PATH")

    p = sub.add_parser("sweep", help="alpha x technique x link grid, CSV rows")
    _common(p)
    p.add_argument("--alphas", type=_float_list, default=list(DEFAULT_ALPHAS))
    p.add_argument("--techniques", type=_csv_list, default=list(TECHNIQUES))
    p.add_argument("--links", type=_csv_list, default=list(LINK_MODES))

    p = sub.add_parser("impute", help="model value at an arbitrary time and location")
    _common(p)
    p.add_argument("--reduction", "-r", required=True)
    p.add_argument("--time", required=True, help="epoch seconds or ISO-8601")
    p.add_argument("--location", required=True, type=_float_list, help="comma-separated coordinates")

    p = sub.add_parser("reconstruct", help="write the dataset as modelled by a reduction")
    _common(p)
    p.add_argument("--reduction", "-r", required=True)

    p = sub.add_parser("stats", help="dataset statistics, and reduction statistics when one is given")
    _common(p)
    p.add_argument("--reduction", "-r", default=None)
    p.add_argument("--dendrogram", metavar="PATH", help="write the cluster tree merges as JSON")

    p = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    _common(p)
    p.add_argument("--archetype", choices=ARCHETYPES, required=True)
    p.add_argument("--sensors", type=int, default=100)
    p.add_argument("--times", type=int, default=100)
    p.add_argument("--features", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--event-probability", type=float, default=0.15)

    p = sub.add_parser("baseline", help="DEFLATE size of the raw table next to the reduction's storage ratio")
    _common(p)
    return parser


def _schema(args) -> CsvSchema:
    feats = tuple(_csv_list(args.feature_cols)) if args.feature_cols else None
    return CsvSchema(time=args.time_col, coords=tuple(_csv_list(args.coord_cols)), features=feats, sensor=args.sensor_col)


def _load(args) -> Dataset:
    if not args.input:
        raise ConfigError("--input is required for this command")
    return load_csv(args.input, _schema(args))


def _config(args) -> ReductionConfig:
    return ReductionConfig(
        alpha=args.alpha,
        technique=args.technique,
        link_mode=args.link,
        error_metric=args.metric,
        max_iterations=args.max_iterations,
        max_complexity=args.max_complexity,
        seed=args.seed,
    )


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _errors(d: Dataset, d_prime: Dataset) -> dict:
    det = nrmse_details(d, d_prime)
    out = {"nrmse": det["nrmse"], "nrmse_per_feature": det["per_feature"], "zero_range_rmse": det["excluded"]}
    try:
        out["mape"] = mape(d, d_prime)
    except KDSTRError:
        out["mape"] = None
    return out


def _stats_record(d: Dataset, r, wall_time: float | None = None) -> dict:
    rec = {
        "schema": STATS_SCHEMA,
        "instances": d.n_instances,
        "features": d.n_features,
        "k": d.k,
        "regions": len(r.regions),
        "models": len(r.models),
        "technique": r.technique,
        "link_mode": r.link_mode,
        "alpha": r.alpha,
        "storage_original": dataset_storage(d),
        "storage_reduced": reduction_storage(r, d.k),
        "storage_ratio": reduction_storage(r, d.k) / dataset_storage(d),
        **_errors(d, reconstruct(d, r)),
    }
    if "iterations" in r.meta:
        rec["iterations"] = r.meta["iterations"]
        rec["descent"] = [
            {"iteration": e["iteration"], "action": e["action"], "h": e["h"], "regions": e["regions"]}
            for e in r.meta["log"]
        ]
    if wall_time is not None:
        rec["wall_time"] = wall_time
    return rec


def _dump_levels(d: Dataset, k: int, cfg: ReductionConfig, prepared, path: str) -> None:
    pt = PartitionTree(d, prepared.tree, prepared.cells, prepared.graph, cfg.seed)
    levels = [
        {
            "k": lvl.k,
            "regions": [
                {
                    "id": reg.id,
                    "cluster": reg.cluster,
                    "sensors": list(reg.sensors),
                    "t_begin": reg.t_begin,
                    "t_end": reg.t_end,
                    "outline": [list(p) for p in reg.outline],
                }
                for reg in lvl.regions
            ],
        }
        for lvl in pt.levels(k)
    ]
    Path(path).write_text(json.dumps({"levels": levels}, indent=1), encoding="utf-8")


def cmd_reduce(args) -> int:
    if not args.output:
        raise ConfigError("reduce needs --output for the reduction file")
    d = _load(args)
    cfg = _config(args)
    started = time.perf_counter()
    prepared = prepare(d)
    r = reduce(d, cfg, prepared)
    wall = time.perf_counter() - started
    write_reduction(args.output, r, args.format)
    if args.dump_partitions:
        _dump_levels(d, r.meta["k"], cfg, prepared, args.dump_partitions)
    rec = json.dumps(_stats_record(d, r, wall), indent=1) + "\n"
    if args.stats:
        Path(args.stats).write_text(rec, encoding="utf-8")
    sys.stdout.write(rec)
    return EXIT_OK


def cmd_sweep(args) -> int:
    d = _load(args)
    for t in args.techniques:
        if t not in TECHNIQUES:
            raise ConfigError(f"unknown technique {t!r}")
    for lm in args.links:
        if lm not in LINK_MODES:
            raise ConfigError(f"unknown link mode {lm!r}")
    for a in args.alphas:
        ReductionConfig(alpha=a)
    rows = run_sweep(
        d,
        alphas=args.alphas,
        techniques=args.techniques,
        link_modes=args.links,
        error_metric=args.metric,
        seed=args.seed,
        max_complexity=args.max_complexity,
        jobs=args.jobs,
    )
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            write_rows(rows, fh)
    else:
        write_rows(rows, sys.stdout)
    return EXIT_OK


def cmd_impute(args) -> int:
    r = read_reduction(args.reduction)
    try:
        t = parse_time(args.time)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    vals = impute(r, t, args.location)
    out = {"time": t, "location": args.location, "values": dict(zip(r.feature_names, map(float, vals)))}
    _emit(json.dumps(out) + "\n", args.output)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    d = _load(args)
    r = read_reduction(args.reduction)
    d_prime = reconstruct(d, r)
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            write_csv(d_prime, fh, _csv_list(args.coord_cols))
        sys.stdout.write(json.dumps(_errors(d, d_prime)) + "\n")
    else:
        write_csv(d_prime, sys.stdout, _csv_list(args.coord_cols))
    return EXIT_OK


def cmd_stats(args) -> int:
    d = _load(args)
    rec = {
        "schema": STATS_SCHEMA,
        "instances": d.n_instances,
        "features": d.n_features,
        "feature_names": list(d.feature_names),
        "sensors": d.n_sensors,
        "timesteps": d.n_times,
        "k": d.k,
        "storage_original": dataset_storage(d),
    }
    if args.reduction:
        rec["reduction"] = _stats_record(d, read_reduction(args.reduction))
    if args.dendrogram:
        tree = build_cluster_tree(d)
        merges = [[int(a), int(b), float(h), int(n)] for a, b, h, n in tree.merges]
        Path(args.dendrogram).write_text(json.dumps({"leaf_count": tree.leaf_count, "merges": merges}), encoding="utf-8")
    _emit(json.dumps(rec, indent=1) + "\n", args.output)
    return EXIT_OK


def cmd_gen(args) -> int:
    params = SyntheticParams(
        n_sensors=args.sensors,
        n_times=args.times,
        n_features=args.features,
        noise=args.noise,
        event_probability=args.event_probability,
    )
    d = gen_synthetic(args.archetype, params, seed=0 if args.seed is None else args.seed)
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            write_csv(d, fh)
    else:
        write_csv(d, sys.stdout)
    return EXIT_OK


def cmd_baseline(args) -> int:
    d = _load(args)
    base = deflate_baseline(d)
    r = reduce(d, _config(args))
    out = {
        "deflate": base,
        "reduction": {
            "storage_ratio": r.final_storage_ratio,
            "nrmse": r.final_error if r.error_metric == "nrmse" else None,
            "basis": "logical units (stored scalars)",
        },
        "note": "DEFLATE is measured in bytes, the reduction in stored scalars; the two ratios use different bases.",
    }
    _emit(json.dumps(out, indent=1) + "\n", args.output)
    return EXIT_OK


COMMANDS = {
    "reduce": cmd_reduce,
    "sweep": cmd_sweep,
    "impute": cmd_impute,
    "reconstruct": cmd_reconstruct,
    "stats": cmd_stats,
    "gen": cmd_gen,
    "baseline": cmd_baseline,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except (ConfigError, TechniqueCannotImpute) as exc:
        print(f"kdstr: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KDSTRError, OSError) as exc:
        print(f"kdstr: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
