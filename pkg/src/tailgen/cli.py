"""Command-line surface for batch use.

Subcommands map onto the pipeline stages: `oversample` emits the Stage-1
pool, `refine` trains the adversarial stage on an existing pool, `augment`
runs both stages and writes the augmented training set, `evaluate` scores a
predictions file, `benchmark` runs the multi-split mode comparison, and
`diagnose` reports distribution diagnostics for a pool.

Every subcommand is a pure function of its input files, config and seed:
fixed seeds give byte-identical outputs. Exit codes: 0 success, 1 usage
error, 2 data error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace

import numpy as np

from . import CONFIG_SCHEMA_VERSION, __version__
from .data import Dataset, RngStream, apply_scaler, fit_scaler, load_csv, save_csv
from .errors import DataError, DivergedTraining, ParseError
from .gan import GanConfig, history_rows, refine, train
from .harness import (
    MODES,
    ExperimentConfig,
    run_benchmark,
)
from .metrics import (
    UtilityParams,
    default_tau,
    diagnose_pool,
    pca_project,
    precision_recall_f1,
    rmse,
    sera,
)
from .nn import mlp_from_dict, mlp_to_dict
from .pipeline import augment as run_augment
from .relevance import fit_relevance, partition_rare
from .smogn import SmognParams, SyntheticPool, oversample

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems via exit code 1."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return payload


def _smogn_params(args, cfg: dict) -> SmognParams:
    """Precedence: explicit flag > config file section > built-in default."""
    section = dict(cfg.get("smogn", {}))
    params = SmognParams(**section) if section else SmognParams()
    if getattr(args, "k", None) is not None:
        params = replace(params, k=args.k)
    if getattr(args, "per_seed", None) is not None:
        params = replace(params, per_seed=args.per_seed)
    if getattr(args, "t_r", None) is not None:
        params = replace(params, t_r=args.t_r)
    if getattr(args, "jitter_cap", None) is not None:
        params = replace(params, jitter_cap=args.jitter_cap)
    return params


def _gan_config(args, cfg: dict) -> GanConfig:
    section = dict(cfg.get("gan", {}))
    config = GanConfig.from_dict(section) if section else GanConfig()
    for flag, fieldname in (
        ("iterations", "iterations"),
        ("batch_size", "batch_size"),
        ("critic_steps", "critic_steps_per_gen"),
        ("alpha", "alpha"),
        ("lambda_gp", "lambda_gp"),
        ("gen_lr", "gen_lr"),
        ("critic_lr", "critic_lr"),
        ("bandwidth", "bandwidth"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            config = replace(config, **{fieldname: value})
    return config


def _pool_extra_columns(pool: SyntheticPool) -> dict:
    return {
        "provenance": [str(p) for p in pool.provenance],
        "seed_index": [int(i) for i in pool.seed_index],
    }


def _write_pool_csv(path, pool: SyntheticPool, column_names: list[str]) -> None:
    ds = Dataset.from_joint(pool.rows, column_names)
    save_csv(path, ds, extra_columns=_pool_extra_columns(pool))


def _load_pool_csv(path, target_column: str):
    """Pool CSV reader tolerating the extra provenance/seed_index columns."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: file is empty")
        header = [h.strip() for h in header]
        meta_cols = {name: header.index(name) for name in ("provenance", "seed_index")
                     if name in header}
        value_cols = [i for i in range(len(header)) if i not in meta_cols.values()]
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not found")
        tcol = header.index(target_column)
        rows, prov, seed_idx = [], [], []
        for rownum, record in enumerate(reader, start=1):
            if not record:
                continue
            try:
                vals = [float(record[i]) for i in value_cols if i != tcol]
                vals.append(float(record[tcol]))
            except (ValueError, IndexError):
                raise ParseError(f"{path}: row {rownum}: bad numeric cell") from None
            rows.append(vals)
            prov.append(record[meta_cols["provenance"]] if "provenance" in meta_cols
                        else "interpolated")
            seed_idx.append(int(record[meta_cols["seed_index"]])
                            if "seed_index" in meta_cols else -1)
    if not rows:
        raise DataError(f"{path}: no data rows")
    names = [header[i] for i in value_cols if i != tcol] + [target_column]
    pool = SyntheticPool(
        rows=np.asarray(rows, dtype=np.float64),
        provenance=np.asarray(prov, dtype=object),
        seed_index=np.asarray(seed_idx, dtype=np.int64),
    )
    return pool, names


def _history_csv(path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "critic_loss", "gen_loss", "mmd2", "gp"])
        for row in history_rows(history):
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def _cmd_oversample(args) -> int:
    cfg = _load_config_file(args.config)
    params = _smogn_params(args, cfg)
    data = load_csv(args.input, args.target)
    scaler = fit_scaler(data)
    scaled = apply_scaler(data, scaler)
    fn = fit_relevance(scaled.target)
    pool = oversample(scaled, fn, params, RngStream(args.seed))
    pool = SyntheticPool(
        rows=scaler.inverse_joint(pool.rows),
        provenance=pool.provenance,
        seed_index=pool.seed_index,
        draws=pool.draws,
    )
    _write_pool_csv(args.out, pool, data.column_names)
    print(f"wrote {pool.n_rows} synthetic rows to {args.out}")
    return EXIT_OK


def _cmd_refine(args) -> int:
    cfg = _load_config_file(args.config)
    gan_config = _gan_config(args, cfg)
    t_r = args.t_r if args.t_r is not None else cfg.get("t_r", 0.8)
    data = load_csv(args.input, args.target)
    pool, names = _load_pool_csv(args.pool, args.target)

    scaler = fit_scaler(data)
    scaled = apply_scaler(data, scaler)
    fn = fit_relevance(scaled.target)
    rare, _ = partition_rare(scaled, fn, t_r)
    scaled_pool = SyntheticPool(
        rows=scaler.transform_joint(pool.rows),
        provenance=pool.provenance,
        seed_index=pool.seed_index,
    )
    generator, critic, history = train(
        rare.joint(), scaled_pool, gan_config, RngStream(args.seed)
    )
    refined = refine(generator, scaled_pool)
    refined = SyntheticPool(
        rows=scaler.inverse_joint(refined.rows),
        provenance=refined.provenance,
        seed_index=refined.seed_index,
    )
    _write_pool_csv(args.out, refined, data.column_names)
    if args.history:
        _history_csv(args.history, history)
    if args.generator_out:
        _write_json(args.generator_out, mlp_to_dict(generator))
    if args.critic_out:
        _write_json(args.critic_out, mlp_to_dict(critic))
    print(f"wrote {refined.n_rows} refined rows to {args.out}")
    return EXIT_OK


def _cmd_augment(args) -> int:
    cfg = _load_config_file(args.config)
    params = _smogn_params(args, cfg)
    gan_config = _gan_config(args, cfg)
    data = load_csv(args.input, args.target)
    result = run_augment(data, params, gan_config, RngStream(args.seed))
    save_csv(args.out, result.augmented)
    if args.pool_out:
        _write_pool_csv(args.pool_out, result.initial_pool, data.column_names)
    if args.refined_out:
        _write_pool_csv(args.refined_out, result.refined_pool, data.column_names)
    if args.history:
        _history_csv(args.history, result.history)
    print(
        f"wrote {result.augmented.n_rows} rows "
        f"({data.n_rows} original + {result.refined_pool.n_rows} synthetic) to {args.out}"
    )
    return EXIT_OK


def _read_predictions(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: file is empty")
        header = [h.strip() for h in header]
        for col in ("y_true", "y_pred"):
            if col not in header:
                raise DataError(f"{path}: predictions file needs a {col!r} column")
        ti, pi = header.index("y_true"), header.index("y_pred")
        y_true, y_pred = [], []
        for rownum, record in enumerate(reader, start=1):
            if not record:
                continue
            try:
                y_true.append(float(record[ti]))
                y_pred.append(float(record[pi]))
            except (ValueError, IndexError):
                raise ParseError(f"{path}: row {rownum}: bad numeric cell") from None
    if not y_true:
        raise DataError(f"{path}: no data rows")
    return np.asarray(y_true), np.asarray(y_pred)


def _cmd_evaluate(args) -> int:
    train_data = load_csv(args.train, args.target)
    y_true, y_pred = _read_predictions(args.predictions)
    fn = fit_relevance(train_data.target)
    t_r = args.t_r if args.t_r is not None else 0.8
    util = UtilityParams(t_r=t_r, tolerance_tau=default_tau(train_data.target))
    pr = precision_recall_f1(y_true, y_pred, fn, util)
    payload = {
        "rmse": rmse(y_true, y_pred),
        "sera": sera(y_true, y_pred, fn),
        "precision": pr.precision,
        "recall": pr.recall,
        "f1": pr.f1,
        "empty_precision_region": pr.empty_precision_region,
        "empty_recall_region": pr.empty_recall_region,
        "t_r": t_r,
        "n_points": int(y_true.size),
        "version": __version__,
    }
    _write_json(args.out, payload)
    print(f"wrote metrics for {y_true.size} predictions to {args.out}")
    return EXIT_OK


def _split_csv_rows(report) -> list[list]:
    rows = []
    for mode in report.modes:
        for res in report.results[mode]:
            for metric in ("rmse", "sera", "precision", "recall", "f1"):
                rows.append([res.split_index, mode, metric, repr(res.metric(metric))])
    return rows


def _cmd_benchmark(args) -> int:
    cfg = _load_config_file(args.config)
    params = _smogn_params(args, cfg)
    gan_config = _gan_config(args, cfg)
    t_r = args.t_r if args.t_r is not None else cfg.get("t_r", 0.8)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for mode in modes:
        if mode not in MODES:
            raise _UsageError(
                f"unknown mode {mode!r}; choose from {', '.join(MODES)}"
            )
    data = load_csv(args.input, args.target)
    config = ExperimentConfig(
        mode=modes[0],
        n_splits=args.splits,
        test_fraction=args.test_fraction,
        t_r=t_r,
        smogn_params=params,
        gan_config=gan_config,
        knn_k=args.knn_k,
        master_seed=args.seed,
    )
    started = time.perf_counter()
    report = run_benchmark(config, modes, data, threads=args.threads)
    elapsed = time.perf_counter() - started

    payload = {
        "version": __version__,
        "config_schema": CONFIG_SCHEMA_VERSION,
        "config": {
            "modes": modes,
            "n_splits": config.n_splits,
            "test_fraction": config.test_fraction,
            "t_r": config.t_r,
            "knn_k": config.knn_k,
            "master_seed": config.master_seed,
            "smogn": {
                "k": params.k,
                "per_seed": params.per_seed,
                "t_r": params.t_r,
                "jitter_cap": params.jitter_cap,
            },
            "gan": gan_config.to_dict(),
        },
        "dataset": {
            "path": str(args.input),
            "rows": data.n_rows,
            "features": data.n_features,
            "target": data.column_names[-1],
        },
        "splits": [
            {
                "mode": res.mode,
                "split_index": res.split_index,
                "rmse": res.rmse,
                "sera": res.sera,
                "precision": res.precision,
                "recall": res.recall,
                "f1": res.f1,
                "train_pool_size": res.train_pool_size,
                "degraded_to_baseline": res.degraded_to_baseline,
            }
            for mode in report.modes
            for res in report.results[mode]
        ],
        "comparisons": [
            {
                "method_a": comp.method_a,
                "method_b": comp.method_b,
                "metrics": {
                    name: {
                        "wins_a": mc.wins_a,
                        "wins_b": mc.wins_b,
                        "ties": mc.ties,
                        "p_value": mc.p_value,
                        "significant": mc.significant,
                    }
                    for name, mc in comp.metrics.items()
                },
            }
            for comp in report.comparisons
        ],
    }
    # wall-clock timing is opt-in so default runs stay byte-reproducible
    if args.timings:
        payload["timings"] = {"total_seconds": elapsed}
    _write_json(args.out, payload)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["split_index", "mode", "metric", "value"])
            writer.writerows(_split_csv_rows(report))
    print(
        f"benchmark over {config.n_splits} splits x {len(modes)} modes "
        f"done in {elapsed:.1f}s -> {args.out}",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    t_r = args.t_r if args.t_r is not None else 0.8
    data = load_csv(args.input, args.target)
    fn = fit_relevance(data.target)
    rare, _ = partition_rare(data, fn, t_r)

    pools = {}
    pool_a, _ = _load_pool_csv(args.pool, args.target)
    pools["pool"] = pool_a
    if args.pool_b:
        pool_b, _ = _load_pool_csv(args.pool_b, args.target)
        pools["pool_b"] = pool_b

    n_comp = min(rare.n_rows - 1, rare.n_features + 1, args.components)
    payload = {"version": __version__, "t_r": t_r, "rare_rows": rare.n_rows,
               "reports": {}}
    for label, pool in pools.items():
        payload["reports"][label] = diagnose_pool(rare, pool, n_comp).to_dict()
    _write_json(args.out, payload)

    if args.pca_csv:
        real_rows = rare.joint()
        _, _, components = pca_project(real_rows, n_comp)
        center = real_rows.mean(axis=0)
        with open(args.pca_csv, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"pc{i + 1}" for i in range(n_comp)] + ["source"])
            for label, rows in [("real", real_rows)] + [
                (lbl, p.rows) for lbl, p in pools.items()
            ]:
                proj = (rows - center) @ components
                for row in proj:
                    writer.writerow([repr(float(v)) for v in row] + [label])
    print(f"wrote diagnostics for {len(pools)} pool(s) to {args.out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="tailgen", description=__doc__)
    parser.add_argument(
        "--version",
        action="version",
        version=f"tailgen {__version__} (config schema {CONFIG_SCHEMA_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common_io(p, pool_input=False):
        p.add_argument("--input", required=True, help="input dataset CSV")
        p.add_argument("--target", required=True, help="target column name")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--t-r", dest="t_r", type=float, default=None,
                       help="relevance threshold (default 0.8)")

    def smogn_flags(p):
        p.add_argument("--k", type=int, default=None, help="neighbour count")
        p.add_argument("--per-seed", dest="per_seed", type=int, default=None,
                       help="synthetic rows per rare seed (default: balance)")
        p.add_argument("--jitter-cap", dest="jitter_cap", type=float, default=None)

    def gan_flags(p):
        p.add_argument("--iterations", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--critic-steps", dest="critic_steps", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--lambda-gp", dest="lambda_gp", type=float, default=None)
        p.add_argument("--gen-lr", dest="gen_lr", type=float, default=None)
        p.add_argument("--critic-lr", dest="critic_lr", type=float, default=None)
        p.add_argument("--bandwidth", type=float, default=None,
                       help="fixed kernel bandwidth (default: median heuristic)")

    p = sub.add_parser("oversample", help="emit the Stage-1 synthetic pool")
    common_io(p)
    smogn_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_oversample)

    p = sub.add_parser("refine", help="adversarially refine an existing pool")
    common_io(p)
    gan_flags(p)
    p.add_argument("--pool", required=True, help="Stage-1 pool CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None, help="training history CSV")
    p.add_argument("--generator-out", dest="generator_out", default=None)
    p.add_argument("--critic-out", dest="critic_out", default=None)
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("augment", help="run the full two-stage pipeline")
    common_io(p)
    smogn_flags(p)
    gan_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--pool-out", dest="pool_out", default=None)
    p.add_argument("--refined-out", dest="refined_out", default=None)
    p.add_argument("--history", default=None)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("evaluate", help="score a predictions CSV")
    p.add_argument("--train", required=True, help="training CSV (fits relevance)")
    p.add_argument("--target", required=True)
    p.add_argument("--predictions", required=True,
                   help="CSV with y_true and y_pred columns")
    p.add_argument("--t-r", dest="t_r", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("benchmark", help="multi-split mode comparison")
    common_io(p)
    smogn_flags(p)
    gan_flags(p)
    p.add_argument("--modes", default="baseline,smogn,smogan",
                   help=f"comma list from {','.join(MODES)}")
    p.add_argument("--splits", type=int, default=25)
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=0.2)
    p.add_argument("--knn-k", dest="knn_k", type=int, default=5)
    p.add_argument("--threads", type=int, default=1,
                   help="parallel split workers (1 = bit-reproducible order)")
    p.add_argument("--timings", action="store_true",
                   help="include wall-clock timings in the report JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None, help="flat per-split metric table")
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("diagnose", help="distribution diagnostics for a pool")
    common_io(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--pool-b", dest="pool_b", default=None)
    p.add_argument("--components", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--pca-csv", dest="pca_csv", default=None)
    p.set_defaults(func=_cmd_diagnose)

    return parser


def run_cli(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except DivergedTraining as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    raise SystemExit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
