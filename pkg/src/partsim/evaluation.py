"""Top-K ranking metrics and the evaluation harness.

Recall@K is the hit fraction of each user's held-out items; NDCG@K uses
binary gains with a 1/log2(rank+1) discount normalized by the ideal ordering.
Users with empty test sets are excluded from the aggregate means.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EvalEmpty
from .model import SimilarityModel, score_block, top_k_indices

_EVAL_CHUNK = 256


def recall_at_k(ranked, relevant, k: int) -> float:
    """|top-k of ranked ∩ relevant| / |relevant|."""
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set is empty; skip this user upstream")
    hits = sum(1 for item in list(ranked)[:k] if item in relevant)
    return hits / len(relevant)


def ndcg_at_k(ranked, relevant, k: int, n_relevant: int | None = None) -> float:
    """Binary-gain NDCG with ideal truncation at min(k, number relevant).

    ``n_relevant`` overrides the ideal-DCG size when some relevant items are
    not rankable (unknown to the model) but still count toward the ideal.
    """
    relevant = set(relevant)
    total = n_relevant if n_relevant is not None else len(relevant)
    if total <= 0:
        raise ValueError("relevant set is empty; skip this user upstream")
    dcg = 0.0
    for rank, item in enumerate(list(ranked)[:k], start=1):
        if item in relevant:
            dcg += 1.0 / np.log2(rank + 1)
    ideal = sum(1.0 / np.log2(r + 1) for r in range(1, min(k, total) + 1))
    return dcg / ideal


@dataclass
class EvalReport:
    """Aggregate metrics of one evaluation run."""

    recall: float
    ndcg: float
    k: int
    n_users_evaluated: int
    n_users_skipped: int
    n_unknown_items: int
    n_parameters: int
    wall_clock: dict = field(default_factory=dict)
    per_user: dict = field(default_factory=dict)

    def to_dict(self, with_per_user: bool = False) -> dict:
        out = {
            "recall_at_k": self.recall,
            "ndcg_at_k": self.ndcg,
            "k": self.k,
            "n_users_evaluated": self.n_users_evaluated,
            "n_users_skipped": self.n_users_skipped,
            "n_unknown_items": self.n_unknown_items,
            "n_parameters": self.n_parameters,
            "wall_clock": dict(self.wall_clock),
        }
        if with_per_user:
            out["per_user"] = {
                key: np.asarray(val).tolist() for key, val in self.per_user.items()
            }
        return out

    def table(self) -> str:
        rows = [
            (f"Recall@{self.k}", f"{self.recall:.6f}"),
            (f"NDCG@{self.k}", f"{self.ndcg:.6f}"),
            ("users evaluated", str(self.n_users_evaluated)),
            ("users skipped", str(self.n_users_skipped)),
            ("unknown test items", str(self.n_unknown_items)),
            ("parameters", str(self.n_parameters)),
        ]
        for stage, seconds in self.wall_clock.items():
            rows.append((f"{stage} seconds", f"{seconds:.2f}"))
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)


def evaluate(
    model: SimilarityModel,
    history: sp.csr_matrix,
    test_pairs,
    k: int = 20,
    train_seconds: float | None = None,
    keep_per_user: bool = False,
) -> EvalReport:
    """Rank-all evaluation of held-out (user, item) pairs.

    ``history`` holds each user's training row in the model's internal ids and
    is used both for scoring and for masking seen items.  Test users missing
    from the model id map are skipped and counted; test items missing from it
    count as misses (they stay in the recall denominator and the ideal DCG).
    """
    t0 = time.perf_counter()
    user_index = {ext: idx for idx, ext in enumerate(model.user_ids)}
    item_index = {ext: idx for idx, ext in enumerate(model.item_ids)}
    relevant: dict[int, set[int]] = {}
    unknown_items: dict[int, int] = {}
    n_pairs = 0
    n_users_skipped = 0
    n_unknown_items = 0
    skipped_users = set()
    for user, item in test_pairs:
        n_pairs += 1
        u = user_index.get(user)
        if u is None:
            if user not in skipped_users:
                skipped_users.add(user)
                n_users_skipped += 1
            continue
        i = item_index.get(item)
        if i is None:
            n_unknown_items += 1
            unknown_items[u] = unknown_items.get(u, 0) + 1
            relevant.setdefault(u, set())
        else:
            relevant.setdefault(u, set()).add(i)
    if n_pairs == 0:
        raise EvalEmpty("no test interactions")
    users = sorted(
        u for u in relevant
        if len(relevant[u]) + unknown_items.get(u, 0) > 0
    )
    if not users:
        raise EvalEmpty("no test user is known to the model")

    recalls = np.zeros(len(users))
    ndcgs = np.zeros(len(users))
    for start in range(0, len(users), _EVAL_CHUNK):
        chunk = users[start:start + _EVAL_CHUNK]
        rows = history[chunk]
        scores = score_block(model, rows)
        for offset, u in enumerate(chunk):
            seen = rows[offset].indices
            ranked = top_k_indices(scores[offset], k, exclude=seen)
            rel = relevant[u]
            total_rel = len(rel) + unknown_items.get(u, 0)
            hits = sum(1 for item in ranked if item in rel)
            recalls[start + offset] = hits / total_rel
            ndcgs[start + offset] = ndcg_at_k(ranked, rel, k, n_relevant=total_rel)
    wall = {"eval": time.perf_counter() - t0}
    if train_seconds is not None:
        wall["train"] = train_seconds
    report = EvalReport(
        recall=float(recalls.mean()),
        ndcg=float(ndcgs.mean()),
        k=k,
        n_users_evaluated=len(users),
        n_users_skipped=n_users_skipped,
        n_unknown_items=n_unknown_items,
        n_parameters=model.parameter_count(),
        wall_clock=wall,
    )
    if keep_per_user:
        report.per_user = {
            "users": np.asarray(users),
            "recall": recalls,
            "ndcg": ndcgs,
        }
    return report


def history_matrix(model: SimilarityModel, train_pairs) -> sp.csr_matrix:
    """Training rows re-indexed into a model's internal id space.

    Pairs whose user or item is unknown to the model are dropped; the caller
    normally feeds the same file the model was trained on, where nothing is
    dropped.
    """
    user_index = {ext: idx for idx, ext in enumerate(model.user_ids)}
    item_index = {ext: idx for idx, ext in enumerate(model.item_ids)}
    rows, cols = [], []
    for user, item in train_pairs:
        u = user_index.get(user)
        i = item_index.get(item)
        if u is None or i is None:
            continue
        rows.append(u)
        cols.append(i)
    matrix = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)),
        shape=(len(model.user_ids), len(model.item_ids)),
        dtype=np.float64,
    )
    matrix.sum_duplicates()
    matrix.data[:] = 1.0
    matrix.sort_indices()
    return matrix
