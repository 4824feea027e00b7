"""Interaction-matrix construction, normalization and the shared sparse kernels.

The binary user-item matrix and its degree-normalized view are immutable
after construction and safe to share across worker threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DegreeZero, IngestEmpty, IngestParse, PartitionTooLarge

_log = logging.getLogger(__name__)

# Dense p x p buffers are refused above this budget unless overridden.
DEFAULT_MEMORY_BUDGET_BYTES = 4 << 30


def read_interaction_file(path) -> Iterator[tuple[str, str]]:
    """Yield (user, item) pairs from a delimited text file.

    One interaction per line, ``user<TAB or comma>item`` with optional extra
    fields (ratings, timestamps) that are ignored.  Lines starting with ``#``
    and blank lines are skipped.
    """
    warned_extra = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t") if "\t" in line else line.split(",")
            fields = [f.strip() for f in fields if f.strip() != ""]
            if len(fields) < 2:
                raise IngestParse(lineno, raw.rstrip("\n"))
            if len(fields) > 2 and not warned_extra:
                _log.warning(
                    "%s:%d: extra fields (ratings?) are ignored; feedback is binary",
                    path, lineno,
                )
                warned_extra = True
            yield fields[0], fields[1]


@dataclass
class InteractionMatrix:
    """Binary user-item interactions in CSR form with cached degrees.

    All stored values are 1.0 and (user, item) pairs are unique.  ``user_ids``
    and ``item_ids`` map internal 0..n-1 indices back to the external ids seen
    at ingestion.
    """

    matrix: sp.csr_matrix
    user_ids: list
    item_ids: list
    user_degrees: np.ndarray = field(init=False)
    item_degrees: np.ndarray = field(init=False)

    def __post_init__(self):
        m = self.matrix
        self.user_degrees = np.diff(m.indptr).astype(np.int64)
        self.item_degrees = np.asarray(
            m.sum(axis=0), dtype=np.int64
        ).ravel()
        self._csc = None

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_items(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def csc(self) -> sp.csc_matrix:
        if self._csc is None:
            self._csc = self.matrix.tocsc()
        return self._csc

    def fingerprint(self) -> str:
        """Hex digest identifying the interaction pattern (shape + structure)."""
        import hashlib

        h = hashlib.sha256()
        h.update(np.asarray(self.matrix.shape, dtype="<i8").tobytes())
        h.update(self.matrix.indptr.astype("<i8").tobytes())
        h.update(self.matrix.indices.astype("<i8").tobytes())
        return h.hexdigest()


def ingest(records: Iterable[tuple]) -> InteractionMatrix:
    """Build an InteractionMatrix from (user_id, item_id) pairs.

    Internal ids are assigned by first appearance, duplicates are dropped and
    feedback is binary.  Users and items only ever appear attached to an
    interaction, so every degree is >= 1 by construction.
    """
    user_index: dict = {}
    item_index: dict = {}
    rows: list[int] = []
    cols: list[int] = []
    seen: set[tuple[int, int]] = set()
    for user, item in records:
        u = user_index.setdefault(user, len(user_index))
        i = item_index.setdefault(item, len(item_index))
        key = (u, i)
        if key in seen:
            continue
        seen.add(key)
        rows.append(u)
        cols.append(i)
    if not rows:
        raise IngestEmpty("no interactions to ingest")
    n_users = len(user_index)
    n_items = len(item_index)
    matrix = sp.csr_matrix(
        (np.ones(len(rows)), (np.asarray(rows), np.asarray(cols))),
        shape=(n_users, n_items),
        dtype=np.float64,
    )
    matrix.sum_duplicates()
    matrix.sort_indices()
    return InteractionMatrix(
        matrix=matrix,
        user_ids=list(user_index),
        item_ids=list(item_index),
    )


def from_dense(dense, user_ids=None, item_ids=None) -> InteractionMatrix:
    """Wrap a dense 0/1 array without ingestion filtering (mainly for tests)."""
    arr = np.asarray(dense, dtype=np.float64)
    matrix = sp.csr_matrix(arr)
    matrix.sort_indices()
    return InteractionMatrix(
        matrix=matrix,
        user_ids=user_ids or list(range(arr.shape[0])),
        item_ids=item_ids or list(range(arr.shape[1])),
    )


@dataclass
class NormalizedView:
    """Degree-normalized view 1/sqrt(d_u * d_i) of an InteractionMatrix.

    Entry (u, i) equals ``1/sqrt(user_degrees[u] * item_degrees[i])`` where an
    interaction exists, 0 elsewhere.  Nothing is densified.
    """

    source: InteractionMatrix
    user_scale: np.ndarray
    item_scale: np.ndarray

    def __post_init__(self):
        self._full = None

    @property
    def n_users(self) -> int:
        return self.source.n_users

    @property
    def n_items(self) -> int:
        return self.source.n_items

    def matrix(self) -> sp.csr_matrix:
        """The full normalized matrix in CSR form (cached)."""
        if self._full is None:
            self._full = self._scaled(None)
        return self._full

    def restricted(self, items: Sequence[int] | None) -> sp.csr_matrix:
        """Normalized matrix over a column subset, degrees recomputed.

        Restriction keeps every user row; item degrees are unchanged by a
        column selection while user degrees shrink, so user scaling is
        recomputed on the restricted matrix.  Users left with no interactions
        get a zero row (their scale is set to 0, not inf).
        """
        if items is None:
            return self.matrix()
        return self._scaled(items)

    def _scaled(self, items: Sequence[int] | None) -> sp.csr_matrix:
        if items is None:
            sub = self.source.matrix.copy()
            item_scale = self.item_scale
            user_scale = self.user_scale
        else:
            items = np.asarray(items, dtype=np.int64)
            sub = self.source.csc[:, items].tocsr()
            item_scale = self.item_scale[items]
            sub_deg = np.diff(sub.indptr)
            user_scale = np.zeros(sub.shape[0])
            nz = sub_deg > 0
            user_scale[nz] = 1.0 / np.sqrt(sub_deg[nz])
        out = sub.astype(np.float64)
        out.data *= np.repeat(user_scale, np.diff(out.indptr))
        out.data *= item_scale[out.indices]
        return out


def normalize(m: InteractionMatrix) -> NormalizedView:
    """Build the 1/sqrt(d_u * d_i) view; all degrees must be >= 1."""
    if np.any(m.user_degrees == 0) or np.any(m.item_degrees == 0):
        raise DegreeZero("zero-degree user or item; ingest() removes these")
    return NormalizedView(
        source=m,
        user_scale=1.0 / np.sqrt(m.user_degrees.astype(np.float64)),
        item_scale=1.0 / np.sqrt(m.item_degrees.astype(np.float64)),
    )


def gram(
    m: InteractionMatrix,
    items: Sequence[int],
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET_BYTES,
) -> np.ndarray:
    """Dense co-occurrence matrix over an item subset.

    result[a, b] counts the users who interacted with both items[a] and
    items[b]; the diagonal is the item degree.  Computed blockwise so the
    only dense allocation is the p x p output.
    """
    items = np.asarray(items, dtype=np.int64)
    p = len(items)
    if p * p * 8 > memory_budget_bytes:
        raise PartitionTooLarge(
            f"{p}x{p} dense gram needs {p * p * 8} bytes, budget {memory_budget_bytes}"
        )
    sub = m.csc[:, items]
    sub_t = sub.T.tocsr()
    out = np.empty((p, p), dtype=np.float64)
    block = max(1, min(p, 2048))
    for start in range(0, p, block):
        stop = min(start + block, p)
        out[:, start:stop] = (sub_t @ sub[:, start:stop]).toarray()
    return out
