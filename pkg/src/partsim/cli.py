"""Command line interface.

Every command reads an optional flat ``key = value`` config file and accepts
per-key overrides.  Reports go to stdout (JSON with ``--json``), logs to
stderr, exit code 0 on success.  Commands that write delimited reports also
render a PNG figure next to them when an output directory is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import sys
import urllib.request

from . import evaluation, model as model_mod, partitioning, pipeline
from .config import RunConfig, apply_overrides, load_config
from .errors import ConfigError, PartsimError
from .interactions import ingest, read_interaction_file

_log = logging.getLogger("partsim")

_CONFIG_KEYS = (
    ("train", str, "training interaction file"),
    ("test", str, "held-out interaction file"),
    ("model", str, "model file path"),
    ("theta_1", float, "l1 penalty weight"),
    ("theta_2", float, "degree-weighted l2 penalty weight"),
    ("eta", float, "partition-membership augmentation weight"),
    ("lam", float, "global similarity mix weight"),
    ("rho", float, "ADMM penalty"),
    ("admm_iters", int, "ADMM iteration cap"),
    ("admm_tol", float, "ADMM primal residual stop"),
    ("prune_threshold", float, "post-solve small-value filter"),
    ("k", int, "spectral rank"),
    ("tau", float, "partition size ratio cap"),
    ("top_k", int, "recommendation list length"),
    ("seed", int, "RNG seed"),
    ("threads", int, "partition solver workers"),
    ("svd_tol", float, "spectral solver residual tolerance"),
    ("svd_iters", int, "spectral solver iteration cap"),
    ("memory_budget_mb", int, "dense partition buffer budget"),
    ("dataset", str, "dataset name for reports and fetching"),
)


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value configuration file")
    group = parser.add_argument_group("configuration overrides")
    for name, kind, help_text in _CONFIG_KEYS:
        group.add_argument(
            f"--{name.replace('_', '-')}", dest=f"cfg_{name}", type=kind,
            default=None, help=help_text,
        )


def _build_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, base=cfg)
    overrides = {
        name: getattr(args, f"cfg_{name}")
        for name, _, _ in _CONFIG_KEYS
        if hasattr(args, f"cfg_{name}")
    }
    return apply_overrides(cfg, overrides)


def _emit(args, report: dict, human: str | None = None) -> None:
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    elif human is not None:
        print(human)


def _write_csv(path, rows, fieldnames) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


# --- commands ---------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = _build_config(args)
    path = cfg.train
    if not path:
        raise ConfigError("ingest needs --train (or train= in the config)")
    m = ingest(read_interaction_file(path))
    density = m.nnz / (m.n_users * m.n_items)
    report = {
        "path": os.path.basename(path),
        "n_users": m.n_users,
        "n_items": m.n_items,
        "n_interactions": int(m.nnz),
        "density": density,
    }
    human = (
        f"{report['path']}: {m.n_users} users, {m.n_items} items, "
        f"{m.nnz} interactions (density {density:.4%})"
    )
    _emit(args, report, human)
    return 0


def cmd_train(args) -> int:
    cfg = _build_config(args).validate()
    if not cfg.train:
        raise ConfigError("train needs --train (or train= in the config)")
    trained, report, _ = pipeline.train_file(cfg.train, cfg)
    if args.report_dir:
        os.makedirs(args.report_dir, exist_ok=True)
        stages = {
            name.removesuffix("_seconds"): report[name]
            for name in ("ingest_seconds", "svd_seconds", "partition_seconds",
                         "admm_seconds", "assemble_seconds", "save_seconds")
            if name in report
        }
        rows = [{"stage": k, "seconds": repr(v)} for k, v in stages.items()]
        _write_csv(os.path.join(args.report_dir, "stages.csv"), rows,
                   ["stage", "seconds"])
        from . import figures
        figures.save_stage_timings(stages, os.path.join(args.report_dir, "stages.png"))
    human_lines = [f"model written to {cfg.model}" if cfg.model else "model not saved"]
    for key in sorted(report):
        human_lines.append(f"  {key}: {report[key]}")
    _emit(args, report, "\n".join(human_lines))
    return 0


def _load_model_and_history(cfg: RunConfig):
    if not cfg.model:
        raise ConfigError("a --model path is required")
    trained = model_mod.load(cfg.model)
    if not cfg.train:
        raise ConfigError("the training file is required to build user histories")
    history = evaluation.history_matrix(
        trained, read_interaction_file(cfg.train)
    )
    return trained, history


def cmd_evaluate(args) -> int:
    cfg = _build_config(args)
    trained, history = _load_model_and_history(cfg)
    if not cfg.test:
        raise ConfigError("evaluate needs --test (or test= in the config)")
    report = evaluation.evaluate(
        trained, history, read_interaction_file(cfg.test), k=cfg.top_k,
    )
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        with open(os.path.join(args.out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        with open(os.path.join(args.out_dir, "report.txt"), "w", encoding="utf-8") as fh:
            fh.write(report.table() + "\n")
        from . import figures
        figures.save_metric_bars(
            [("model", {"recall": report.recall, "ndcg": report.ndcg})],
            ["recall", "ndcg"],
            os.path.join(args.out_dir, "metrics.png"),
            title=f"Ranking metrics @ {report.k}",
        )
    _emit(args, report.to_dict(), report.table())
    return 0


def cmd_recommend(args) -> int:
    cfg = _build_config(args)
    trained, history = _load_model_and_history(cfg)
    if args.users:
        wanted = [u.strip() for u in args.users.split(",") if u.strip()]
        index = {ext: i for i, ext in enumerate(trained.user_ids)}
        missing = [u for u in wanted if u not in index]
        if missing:
            raise ConfigError(f"unknown users: {', '.join(missing[:5])}")
        user_rows = [(u, index[u]) for u in wanted]
    else:
        user_rows = [(ext, i) for i, ext in enumerate(trained.user_ids)]
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for ext, idx in user_rows:
            indices, scores = model_mod.recommend(
                trained, history[idx], k=cfg.top_k, mask_seen=not args.keep_seen,
            )
            for rank, (item_idx, value) in enumerate(zip(indices, scores), start=1):
                out.write(
                    f"{ext}\t{rank}\t{trained.item_ids[int(item_idx)]}\t{value:.8g}\n"
                )
    finally:
        if args.out:
            out.close()
    return 0


_ABLATION_VARIANTS = (
    ("full", {}),
    ("eta=0", {"eta": 0.0}),
    ("lam=0", {"lam": 0.0}),
    ("theta_2=0", {"theta_2": 0.0}),
)


def run_ablation(cfg: RunConfig):
    """Train and evaluate the four standard variants on one split."""
    if not cfg.train or not cfg.test:
        raise ConfigError("ablate needs both --train and --test")
    m = ingest(read_interaction_file(cfg.train))
    test_pairs = list(read_interaction_file(cfg.test))
    rows = []
    for label, patch in _ABLATION_VARIANTS:
        variant = RunConfig(**cfg.to_dict())
        variant.model = ""
        for key, value in patch.items():
            setattr(variant, key, value)
        trained, report = pipeline.train_matrix(m, variant)
        rep = evaluation.evaluate(trained, m.matrix, test_pairs, k=cfg.top_k)
        rows.append({
            "variant": label,
            "recall": rep.recall,
            "ndcg": rep.ndcg,
            "n_parameters": rep.n_parameters,
            "train_seconds": report["total_seconds"],
        })
        _log.info("ablation %s: recall=%.6f ndcg=%.6f", label, rep.recall, rep.ndcg)
    return rows


def cmd_ablate(args) -> int:
    cfg = _build_config(args).validate()
    rows = run_ablation(cfg)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_csv(
            os.path.join(args.out_dir, "ablation.csv"),
            [{k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()}
             for row in rows],
            ["variant", "recall", "ndcg", "n_parameters", "train_seconds"],
        )
        from . import figures
        figures.save_metric_bars(
            [(row["variant"], row) for row in rows],
            ["recall", "ndcg"],
            os.path.join(args.out_dir, "ablation.png"),
            title=f"Ablation @ {cfg.top_k}",
        )
    human = "\n".join(
        f"{row['variant']:<10} recall={row['recall']:.6f} ndcg={row['ndcg']:.6f} "
        f"params={row['n_parameters']}"
        for row in rows
    )
    _emit(args, {"rows": rows}, human)
    return 0


def cmd_diagnose_connectivity(args) -> int:
    cfg = _build_config(args)
    if not cfg.train:
        raise ConfigError("diagnose connectivity needs --train")
    if args.k_min < 1 or args.k_max < args.k_min:
        raise ConfigError("need 1 <= k-min <= k-max")
    m = ingest(read_interaction_file(cfg.train))
    ks = range(args.k_min, args.k_max + 1, args.k_step)
    from . import diagnostics
    points = diagnostics.connectivity_sweep(
        m, ks, sym_weight=args.sym_weight, seed=cfg.seed
    )
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_csv(
            os.path.join(args.out_dir, "connectivity.csv"),
            [{"k_neighbors": k, "fiedler_value": repr(v)} for k, v in points],
            ["k_neighbors", "fiedler_value"],
        )
        from . import figures
        figures.save_connectivity_curve(
            points, os.path.join(args.out_dir, "connectivity.png")
        )
    human = "\n".join(f"k={k:<4d} connectivity={v:.6g}" for k, v in points)
    _emit(args, {"points": [{"k_neighbors": k, "fiedler_value": v} for k, v in points]},
          human)
    return 0


def cmd_diagnose_partitions(args) -> int:
    cfg = _build_config(args).validate()
    if not cfg.train:
        raise ConfigError("diagnose partitions needs --train")
    from .interactions import normalize
    m = ingest(read_interaction_file(cfg.train))
    parts = partitioning.partition(
        normalize(m), tau=cfg.tau, seed=cfg.seed,
        tol=cfg.svd_tol, max_iter=cfg.svd_iters,
    )
    rows = partitioning.trace_rows(parts)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_csv(
            os.path.join(args.out_dir, "partitions.csv"), rows,
            ["node_id", "depth", "size", "fiedler_value",
             "left_size", "right_size", "unsplittable"],
        )
        from . import figures
        figures.save_partition_sizes(
            [len(p) for p in parts.partitions], cfg.tau, m.n_items,
            os.path.join(args.out_dir, "partitions.png"),
        )
    report = {
        "n_partitions": parts.n_partitions,
        "sizes": [len(p) for p in parts.partitions],
        "trace": rows,
    }
    human = (
        f"{parts.n_partitions} partitions over {m.n_items} items "
        f"(tau={cfg.tau}, largest={max(len(p) for p in parts.partitions)})"
    )
    _emit(args, report, human)
    return 0


def cmd_grid_search(args) -> int:
    cfg = _build_config(args).validate()
    if not cfg.train:
        raise ConfigError("grid-search needs --train")
    grids = {}
    for entry in args.grid or []:
        if "=" not in entry:
            raise ConfigError(f"--grid expects key=v1,v2,..., got {entry!r}")
        key, values = entry.split("=", 1)
        key = key.strip().replace("-", "_")
        kinds = {name: kind for name, kind, _ in _CONFIG_KEYS}
        if key not in kinds:
            raise ConfigError(f"unknown grid key {key!r}")
        grids[key] = [kinds[key](v) for v in values.split(",") if v.strip()]
    if not grids:
        raise ConfigError("at least one --grid key=v1,v2 is required")
    m = ingest(read_interaction_file(cfg.train))
    best, rows = pipeline.grid_search(
        m, cfg, grids, metric=args.metric, folds=args.folds,
    )
    report = {"best": {k: getattr(best, k) for k in grids}, "rows": rows}
    human = "\n".join(
        [f"best: {report['best']}"]
        + [f"  {row}" for row in rows]
    )
    _emit(args, report, human)
    return 0


def _read_manifest(path) -> dict:
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            entries[key] = value
    return entries


def _convert_adjacency(src, dst) -> None:
    """Rewrite 'user item item ...' adjacency lines as one pair per line."""
    with open(src, "r", encoding="utf-8") as fin, \
            open(dst, "w", encoding="utf-8") as fout:
        for raw in fin:
            fields = raw.split()
            if not fields:
                continue
            user = fields[0]
            for item in fields[1:]:
                fout.write(f"{user}\t{item}\n")


def cmd_fetch_dataset(args) -> int:
    cfg = _build_config(args)
    name = cfg.dataset or args.name
    if not name:
        raise ConfigError("fetch-dataset needs --dataset")
    entries = _read_manifest(args.manifest)
    fmt = entries.get(f"{name}.format", "pairs")
    if fmt not in ("pairs", "adjacency"):
        raise ConfigError(f"unknown dataset format {fmt!r} in manifest")
    out_dir = os.path.join(args.out_dir, name)
    os.makedirs(out_dir, exist_ok=True)
    written = {}
    for split in ("train", "test"):
        key = f"{name}.{split}"
        if key not in entries:
            raise ConfigError(f"manifest has no entry for {key}")
        url = entries[key]
        raw_path = os.path.join(out_dir, f"{split}.download")
        _log.info("fetching %s -> %s", url, raw_path)
        with urllib.request.urlopen(url) as resp, open(raw_path, "wb") as fh:
            shutil.copyfileobj(resp, fh)
        final = os.path.join(out_dir, f"{split}.txt")
        if fmt == "adjacency":
            _convert_adjacency(raw_path, final)
            os.remove(raw_path)
        else:
            os.replace(raw_path, final)
        written[split] = final
    _emit(args, {"dataset": name, "files": written},
          "\n".join(f"{split}: {path}" for split, path in written.items()))
    return 0


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partsim",
        description="Partition-aware sparse item-similarity recommender",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--json", action="store_true",
                       help="machine-readable report on stdout")
        _add_config_options(p)
        return p

    add("ingest", cmd_ingest, "parse an interaction file and report statistics")

    p = add("train", cmd_train, "train a similarity model end to end")
    p.add_argument("--report-dir", help="write per-stage timing CSV and figure here")

    p = add("evaluate", cmd_evaluate, "ranking metrics on a held-out split")
    p.add_argument("--out-dir", help="write report.json/.txt and metrics.png here")

    p = add("recommend", cmd_recommend, "emit top-K items as TSV")
    p.add_argument("--users", help="comma-separated external user ids (default: all)")
    p.add_argument("--out", help="TSV output file (default: stdout)")
    p.add_argument("--keep-seen", action="store_true",
                   help="do not mask training items")

    p = add("ablate", cmd_ablate, "train and evaluate the standard variants")
    p.add_argument("--out-dir", help="write ablation.csv and ablation.png here")

    diag = sub.add_parser("diagnose", help="item-graph diagnostics")
    diag_sub = diag.add_subparsers(dest="diagnose_command", required=True)

    p = diag_sub.add_parser("connectivity",
                            help="connectivity of the sampled item graph")
    p.set_defaults(func=cmd_diagnose_connectivity)
    p.add_argument("--json", action="store_true")
    _add_config_options(p)
    p.add_argument("--k-min", type=int, default=5)
    p.add_argument("--k-max", type=int, default=50)
    p.add_argument("--k-step", type=int, default=5)
    p.add_argument("--sym-weight", choices=("max", "mean"), default="max")
    p.add_argument("--out-dir", help="write connectivity.csv and .png here")

    p = diag_sub.add_parser("partitions", help="recursion trace of the partitioner")
    p.set_defaults(func=cmd_diagnose_partitions)
    p.add_argument("--json", action="store_true")
    _add_config_options(p)
    p.add_argument("--out-dir", help="write partitions.csv and .png here")

    p = add("grid-search", cmd_grid_search,
            "pick hyperparameters on a validation split")
    p.add_argument("--grid", action="append",
                   help="key=v1,v2,... (repeatable)")
    p.add_argument("--metric", choices=("recall", "ndcg"), default="recall")
    p.add_argument("--folds", type=int, default=1)

    p = add("fetch-dataset", cmd_fetch_dataset,
            "download train/test splits listed in a manifest")
    p.add_argument("--manifest", required=True,
                   help="flat file with <name>.train/<name>.test URLs")
    p.add_argument("--name", help="dataset name (alternative to --dataset)")
    p.add_argument("--out-dir", default="data", help="destination directory")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else (
        logging.WARNING if args.quiet else logging.INFO
    )
    logging.basicConfig(
        stream=sys.stderr, level=level,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PartsimError as exc:
        stage = getattr(exc, "stage", None)
        _log.error("%s%s", f"[{stage}] " if stage else "", exc)
        return 1
    except OSError as exc:
        _log.error("%s", exc)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
