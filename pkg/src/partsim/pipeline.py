"""End-to-end training pipeline and hyperparameter grid search.

Training runs the full recipe: truncated SVD for the global factors,
recursive bisection of the item set, one constrained sparse solve per
partition (optionally in a worker pool), block assembly and persistence.
"""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

import numpy as np
import scipy.sparse as sp

from . import admm, evaluation, model as model_mod, partitioning, spectral
from .config import RunConfig
from .errors import PartsimError
from .interactions import InteractionMatrix, ingest, normalize

_log = logging.getLogger(__name__)


@contextmanager
def _stage(name: str):
    """Tag errors escaping a pipeline stage with the stage name."""
    try:
        yield
    except PartsimError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


def train_matrix(m: InteractionMatrix, cfg: RunConfig):
    """Train a similarity model on an ingested matrix.

    Returns (model, stage_report) where the report maps stage names to
    wall-clock seconds plus a few size statistics.
    """
    cfg.validate()
    report: dict = {}
    t0 = time.perf_counter()
    with _stage("normalize"):
        view = normalize(m)

    t = time.perf_counter()
    with _stage("svd"):
        basis = spectral.truncated_svd(
            view, items=None, k=cfg.k, tol=cfg.svd_tol,
            max_iter=cfg.svd_iters, seed=cfg.seed,
        )
    report["svd_seconds"] = time.perf_counter() - t

    t = time.perf_counter()
    with _stage("partition"):
        parts = partitioning.partition(
            view, tau=cfg.tau, seed=cfg.seed,
            tol=cfg.svd_tol, max_iter=cfg.svd_iters,
        )
    report["partition_seconds"] = time.perf_counter() - t
    report["n_partitions"] = parts.n_partitions

    t = time.perf_counter()
    admm_cfg = cfg.admm()
    with _stage("admm"):
        blocks = solve_all_partitions(
            m, basis, parts, admm_cfg,
            tol=cfg.admm_tol, threads=cfg.threads,
            memory_budget_bytes=cfg.memory_budget_bytes,
        )
    report["admm_seconds"] = time.perf_counter() - t

    t = time.perf_counter()
    header = {
        "dataset": cfg.dataset,
        "fingerprint": m.fingerprint(),
        "theta_1": cfg.theta_1,
        "theta_2": cfg.theta_2,
        "eta": cfg.eta,
        "rho": cfg.rho,
        "admm_iters": cfg.admm_iters,
        "prune_threshold": cfg.prune_threshold,
        "seed": cfg.seed,
        "svd_tol": cfg.svd_tol,
    }
    with _stage("assemble"):
        trained = model_mod.assemble(
            blocks, basis, cfg.lam, parts,
            header=header, user_ids=m.user_ids, item_ids=m.item_ids,
        )
    report["assemble_seconds"] = time.perf_counter() - t
    report["total_seconds"] = time.perf_counter() - t0
    report["nnz"] = int(trained.s.nnz)
    report["n_parameters"] = trained.parameter_count()
    return trained, report


def solve_all_partitions(
    m: InteractionMatrix,
    basis: spectral.SpectralBasis,
    parts: partitioning.PartitionAssignment,
    admm_cfg: admm.AdmmConfig,
    tol: float,
    threads: int = 1,
    memory_budget_bytes: int | None = None,
):
    """Solve every partition block, largest first, optionally in parallel."""
    budget = memory_budget_bytes or (4 << 30)

    def solve_one(items):
        w_n = basis.dense_block(items)
        block = admm.solve_items(
            m, items, w_n, admm_cfg, tol=tol, memory_budget_bytes=budget
        )
        return block

    order = sorted(
        range(parts.n_partitions),
        key=lambda pid: len(parts.partitions[pid]),
        reverse=True,
    )
    blocks: list = [None] * parts.n_partitions
    if threads <= 1:
        for pid in order:
            blocks[pid] = solve_one(parts.partitions[pid])
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                pid: pool.submit(solve_one, parts.partitions[pid]) for pid in order
            }
            for pid, fut in futures.items():
                blocks[pid] = fut.result()
    return [(parts.partitions[pid], blocks[pid]) for pid in range(parts.n_partitions)]


def train_file(train_path, cfg: RunConfig):
    """Ingest a training file, train, and save if cfg.model is set."""
    from .interactions import read_interaction_file

    t = time.perf_counter()
    m = ingest(read_interaction_file(train_path))
    ingest_seconds = time.perf_counter() - t
    trained, report = train_matrix(m, cfg)
    report["ingest_seconds"] = ingest_seconds
    report["n_users"] = m.n_users
    report["n_items"] = m.n_items
    report["n_interactions"] = m.nnz
    if cfg.model:
        t = time.perf_counter()
        model_mod.save(trained, cfg.model)
        report["save_seconds"] = time.perf_counter() - t
    return trained, report, m


def validation_split(m: InteractionMatrix, fraction: float = 0.1, seed: int = 0,
                     fold: int = 0):
    """Carve a per-user holdout from an interaction matrix.

    For every user with at least 2 interactions, about ``fraction`` of them
    (at least one) move to the holdout.  Returns (train_matrix, holdout_pairs)
    with holdout pairs in external ids.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(fold), 0xA11D)))
    keep_rows, keep_cols = [], []
    held: list[tuple[int, int]] = []
    csr = m.matrix
    for u in range(m.n_users):
        items = csr.indices[csr.indptr[u]:csr.indptr[u + 1]]
        if len(items) < 2:
            keep_rows.extend([u] * len(items))
            keep_cols.extend(int(i) for i in items)
            continue
        n_hold = max(1, int(round(fraction * len(items))))
        n_hold = min(n_hold, len(items) - 1)
        chosen = rng.choice(len(items), size=n_hold, replace=False)
        mask = np.zeros(len(items), dtype=bool)
        mask[chosen] = True
        held.extend((u, int(i)) for i in items[mask])
        kept = items[~mask]
        keep_rows.extend([u] * len(kept))
        keep_cols.extend(int(i) for i in kept)
    # items that lost every interaction get one pair moved back to training
    kept_count = np.zeros(m.n_items, dtype=np.int64)
    np.add.at(kept_count, keep_cols, 1)
    holdout_internal = []
    for u, i in held:
        if kept_count[i] == 0:
            keep_rows.append(u)
            keep_cols.append(i)
            kept_count[i] += 1
        else:
            holdout_internal.append((u, i))
    holdout = [(m.user_ids[u], m.item_ids[i]) for u, i in holdout_internal]
    matrix = sp.csr_matrix(
        (np.ones(len(keep_rows)), (keep_rows, keep_cols)),
        shape=(m.n_users, m.n_items), dtype=np.float64,
    )
    matrix.sort_indices()
    train = InteractionMatrix(
        matrix=matrix, user_ids=list(m.user_ids), item_ids=list(m.item_ids)
    )
    return train, holdout


def grid_search(
    m: InteractionMatrix,
    cfg: RunConfig,
    grids: dict,
    metric: str = "recall",
    folds: int = 1,
    fraction: float = 0.1,
):
    """Pick the best configuration on seeded validation splits of the training data.

    ``grids`` maps RunConfig field names to candidate value lists.  Each
    candidate is scored by the mean validation metric over ``folds`` splits.
    Returns (best_config, rows) with one result row per candidate.
    """
    if metric not in ("recall", "ndcg"):
        raise ValueError("metric must be 'recall' or 'ndcg'")
    names = sorted(grids)
    rows = []
    best_row = None
    for combo in itertools.product(*(grids[name] for name in names)):
        candidate = RunConfig(**cfg.to_dict())
        candidate.model = ""
        for name, value in zip(names, combo):
            setattr(candidate, name, value)
        candidate.validate()
        scores = []
        for fold in range(folds):
            train, holdout = validation_split(
                m, fraction=fraction, seed=cfg.seed, fold=fold
            )
            trained, _ = train_matrix(train, candidate)
            rep = evaluation.evaluate(trained, train.matrix, holdout, k=cfg.top_k)
            scores.append(getattr(rep, metric))
        row = {name: value for name, value in zip(names, combo)}
        row[metric] = float(np.mean(scores))
        rows.append(row)
        if best_row is None or row[metric] > best_row[metric]:
            best_row = row
            best = candidate
        _log.info("grid point %s -> %s=%.6f", row, metric, row[metric])
    best.model = cfg.model
    return best, rows
