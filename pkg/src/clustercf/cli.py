"""Command-line interface: ``clustercf fit | explain | represent | bench``.

Search settings resolve as command-line flags > JSON config file >
built-in defaults; ``CLUSTERCF_SEED`` replaces the built-in seed. Every
command writes the resolved settings as a run manifest next to its output.
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from clustercf.clustering import NOISE, load_model, save_model
from clustercf.dataspace import Dataset, FeatureEncoder, FeatureSchema, load_csv
from clustercf.engine import Explainer, fit_model
from clustercf.evalharness import (
    AGGREGATIONS, ProtocolSpec, cardinality_check, emit_tables, run_benchmark,
)
from clustercf.representatives import median_heuristic, representatives_for_model
from clustercf.search import STRATEGY_ALIASES, PreconditionError, SearchConfig

logger = logging.getLogger("clustercf")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SEARCH_FIELDS = {f.name for f in fields(SearchConfig)}
CLI_STRATEGIES = ("hard", "distance", "agnostic")


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def _share(text: str) -> float:
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"share must be in (0, 1], got {v}")
    return v


def _csv_list(conv):
    def parse(text: str):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        return [conv(t) for t in items]
    return parse


def _strategy(text: str) -> str:
    if text not in CLI_STRATEGIES and text not in STRATEGY_ALIASES.values():
        raise argparse.ArgumentTypeError(f"unknown strategy {text!r}; choose from {', '.join(CLI_STRATEGIES)}")
    return text


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("search")
    g.add_argument("--config", help="JSON file with search settings")
    g.add_argument("--seed", type=int, default=None, help="RNG seed (default: $CLUSTERCF_SEED or 0)")
    g.add_argument("--share", type=_share, default=None, help="representative share for the agnostic strategy")
    g.add_argument("--max-rounds", type=int, default=None)
    g.add_argument("--initial-samples", type=_positive_int, default=None)
    g.add_argument("--candidates-per-round", type=_positive_int, default=None)
    g.add_argument("--evaluations-per-round", type=_positive_int, default=None)
    g.add_argument("--patience", type=int, default=None, help="rounds without improvement before stopping; 0 disables")
    g.add_argument("--time-budget", type=_positive_float, default=None, help="seconds per search")
    g.add_argument("--no-guard", action="store_true", help="disable the outlier guard")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="dataset CSV")
    p.add_argument("--no-header", action="store_true", help="CSV has no header row")
    p.add_argument("--categorical", default="", help="comma-separated columns to treat as categorical")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clustercf", description="Counterfactual explanations for clustering models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a clustering model")
    _add_data_flags(p)
    p.add_argument("--algo", choices=("kmeans", "dbscan"), default="kmeans")
    p.add_argument("--k", type=_positive_int, default=3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eps", type=_positive_float, default=0.5)
    p.add_argument("--min-pts", type=_positive_int, default=5)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("-o", "--out", default="model.json")

    p = sub.add_parser("explain", help="search counterfactuals for one row")
    _add_data_flags(p)
    p.add_argument("--model", required=True, help="model JSON written by 'fit'")
    p.add_argument("--instance", type=int, required=True, help="row index in the dataset")
    p.add_argument("--target", type=int, required=True, help="target cluster id")
    p.add_argument("--strategy", type=_strategy, default=None, help="hard | distance | agnostic")
    p.add_argument("--top", type=int, default=5, help="counterfactuals to print")
    p.add_argument("--timing", action="store_true", help="include wall-clock fields in the result JSON")
    p.add_argument("-o", "--out", default="result.json")
    _add_search_flags(p)

    p = sub.add_parser("represent", help="select prototypes and criticisms")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--share", type=_share, default=0.2)
    p.add_argument("-o", "--out", default="representatives.json")

    p = sub.add_parser("bench", help="run the benchmark protocol")
    _add_data_flags(p)
    p.add_argument("--model", help="model JSON; otherwise a model is fitted with --algo/--k")
    p.add_argument("--algo", choices=("kmeans", "dbscan"), default="kmeans")
    p.add_argument("--k", type=_positive_int, default=3)
    p.add_argument("--eps", type=_positive_float, default=0.5)
    p.add_argument("--min-pts", type=_positive_int, default=5)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--strategies", type=_csv_list(_strategy), default=list(CLI_STRATEGIES))
    p.add_argument("--shares", type=_csv_list(_share), default=None)
    p.add_argument("--repeats", type=_positive_int, default=3)
    p.add_argument("--instances", type=_positive_int, default=5, help="instances per cluster")
    p.add_argument("--aggregation", choices=AGGREGATIONS, default="best")
    p.add_argument("--reference-sizes", type=_csv_list(int), default=None,
                   help="expected cluster sizes to check and record in the metadata")
    p.add_argument("-o", "--out", default="bench.csv")
    p.add_argument("--log", default=None, help="JSON run-log path (default: <out>.log.json)")
    _add_search_flags(p)
    return parser


def default_seed() -> int:
    env = os.environ.get("CLUSTERCF_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CLUSTERCF_SEED must be an integer, got {env!r}")


def resolve_config(args, strategy: str | None = None) -> SearchConfig:
    """Flags > config file > defaults (seed default from the environment)."""
    values: dict = {"rng_seed": default_seed()}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        unknown = set(doc) - SEARCH_FIELDS - {"seed"}
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "seed" in doc:
            doc["rng_seed"] = doc.pop("seed")
        values.update(doc)
    flags = {
        "rng_seed": args.seed, "share": getattr(args, "share", None), "max_rounds": args.max_rounds,
        "initial_samples": args.initial_samples, "candidates_per_round": args.candidates_per_round,
        "evaluations_per_round": args.evaluations_per_round, "time_budget": args.time_budget,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    if args.patience is not None:
        values["patience"] = None if args.patience == 0 else args.patience
    if args.no_guard:
        values["outlier_guard_enabled"] = False
    if strategy is not None:
        values["sy_strategy"] = strategy
    try:
        return SearchConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))


def _load_data(args, schema: FeatureSchema | None = None) -> Dataset:
    hints = [c for c in args.categorical.split(",") if c]
    ds = load_csv(args.data, has_header=not args.no_header, categorical_hints=hints)
    if schema is not None:
        if ds.schema.names != schema.names:
            raise PreconditionError("dataset columns do not match the model's schema")
        ds = Dataset(schema, ds.rows, ds.id)
    return ds


def _load_fitted(args) -> tuple[Dataset, FeatureEncoder, object, dict]:
    model, doc = load_model(args.model)
    if "schema" not in doc or "encoder" not in doc:
        raise PreconditionError(f"{args.model} was not written by 'clustercf fit'")
    schema = FeatureSchema.from_dict(doc["schema"])
    return _load_data(args, schema), FeatureEncoder.from_dict(doc["encoder"]), model, doc


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _manifest(args, path_out, config: SearchConfig | None = None, **extra) -> dict:
    return {
        "command": args.command,
        "config_file": getattr(args, "config", None),
        "dataset": str(args.data),
        "model_file": getattr(args, "model", None),
        "output": str(path_out),
        "rng_seed": config.rng_seed if config else getattr(args, "seed", None),
        "search_config": config.to_dict() if config else None,
        **extra,
    }


def _manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".manifest.json")


def cmd_fit(args) -> int:
    ds = _load_data(args)
    seed = args.seed if args.seed is not None else default_seed()
    encoder, model = fit_model(ds, args.algo, k=args.k, seed=seed, eps=args.eps, min_pts=args.min_pts,
                               standardize=not args.no_standardize)
    save_model(model, args.out, {"schema": ds.schema.to_dict(), "encoder": encoder.to_dict(),
                                 "dataset": str(args.data), "standardized": not args.no_standardize})
    sizes = {s.cluster_id: s.cardinality for s in model.summaries()}
    noise = int((model.labels == NOISE).sum())
    _write_json(_manifest_path(args.out), _manifest(args, args.out, algo=args.algo, k=args.k, seed=seed,
                                                    eps=args.eps, min_pts=args.min_pts,
                                                    standardize=not args.no_standardize))
    print(f"{args.algo}: {model.num_clusters} clusters, sizes {sizes}" + (f", noise {noise}" if args.algo == "dbscan" else ""))
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_explain(args) -> int:
    config = resolve_config(args, args.strategy)
    ds, encoder, model, _ = _load_fitted(args)
    if not 0 <= args.instance < len(ds):
        raise UsageError(f"--instance must be in [0, {len(ds) - 1}]")
    ex = Explainer(ds, encoder, model, guard_enabled=config.outlier_guard_enabled, guard_seed=config.rng_seed)
    current = ex.assign_row(args.instance)
    if args.target == current:
        raise PreconditionError(f"row {args.instance} is already in cluster {args.target}; choose another target")
    if args.target not in model.cluster_ids:
        raise PreconditionError(f"cluster {args.target} does not exist (clusters: {model.cluster_ids})")
    result = ex.explain(ds.rows[args.instance], args.target, config)
    doc = result.to_dict(ds.schema, timing=args.timing)
    doc["instance"] = args.instance
    doc["origin_cluster"] = current
    doc["strategy"] = config.sy_strategy
    if config.sy_strategy == "membership":
        doc["representatives"] = ex.representatives[config.share].to_dict()
    _write_json(args.out, doc)
    telemetry = {"time_to_first": result.time_to_first, "time_to_best": result.time_to_best,
                 "elapsed": result.elapsed}
    _write_json(_manifest_path(args.out), _manifest(args, args.out, config, instance=args.instance,
                                                    target=args.target, telemetry=telemetry))

    print(f"row {args.instance}: cluster {current} -> {args.target}, strategy {config.sy_strategy}")
    print(f"{len(result.counterfactuals)} counterfactuals in {result.evaluations} evaluations "
          f"({result.stop_reason})")
    for rank, cf in enumerate(result.counterfactuals[: args.top], start=1):
        b = cf.breakdown
        print(f"#{rank} F={b.total:.4f} Sf={b.s_f:.3f} Sx={b.s_x:.3f} Sy={b.s_y:.3f}")
        for name, ch in cf.changed_features(result.origin, ds.schema).items():
            if "delta" in ch:
                print(f"    {name}: {ch['from']:.6g} -> {ch['to']:.6g} ({ch['delta']:+.6g})")
            else:
                print(f"    {name}: {ch['from']} -> {ch['to']}")
    print(f"result written to {args.out}")
    return EXIT_OK


def cmd_represent(args) -> int:
    ds, encoder, model, _ = _load_fitted(args)
    X = encoder.encode(ds.codes)
    reps = representatives_for_model(X, model, args.share, median_heuristic(X))
    _write_json(args.out, reps.to_dict())
    _write_json(_manifest_path(args.out), _manifest(args, args.out, share=args.share))
    for cr in reps.clusters:
        print(f"cluster {cr.cluster_id}: {len(cr.prototypes)} prototypes, {len(cr.criticisms)} criticisms")
    for w in reps.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"representatives written to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    config = resolve_config(args)
    if args.model:
        ds, encoder, model, _ = _load_fitted(args)
        model_name = model.algorithm
    else:
        ds = _load_data(args)
        encoder, model = fit_model(ds, args.algo, k=args.k, seed=config.rng_seed, eps=args.eps,
                                   min_pts=args.min_pts, standardize=not args.no_standardize)
        model_name = args.algo
    spec = ProtocolSpec(instances_per_cluster=args.instances, repeats=args.repeats,
                        strategies=tuple(args.strategies))
    ex = Explainer(ds, encoder, model, guard_enabled=config.outlier_guard_enabled, guard_seed=config.rng_seed)
    notes = {}
    if args.reference_sizes:
        check = cardinality_check([s.cardinality for s in model.summaries()], args.reference_sizes)
        notes["clustering_reference"] = check
        if not check["matches"]:
            notes["clustering_deviation"] = (
                f"cluster sizes {check['cardinalities']} differ from the reference {check['reference']} "
                f"by more than {check['tolerance']}; metrics are reported on the obtained clustering")
    result = run_benchmark(ex, spec, config, shares=args.shares, dataset_name=ds.id, model_name=model_name,
                           aggregation=args.aggregation, notes=notes or None)
    _, table = emit_tables(result.rows, args.out)
    log_path = args.log or str(Path(args.out).with_suffix("")) + ".log.json"
    result.write_log(log_path)
    _write_json(_manifest_path(args.out), _manifest(args, args.out, config, log=log_path,
                                                    protocol=result.metadata["protocol"]))
    print(table, end="")
    print(f"{len(result.records)} runs; metrics written to {args.out}, run log to {log_path}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "explain": cmd_explain, "represent": cmd_represent, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"clustercf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PreconditionError, OSError, ValueError) as exc:
        print(f"clustercf: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
