"""Similarity model assembly, scoring, top-K ranking and persistence.

The scoring matrix is ``lam * W + S`` where W is applied implicitly through
the spectral factors and S is a block-diagonal sparse matrix aligned with the
partition assignment.  Models are immutable after assembly or load and safe
for concurrent readers.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyMismatch, ModelCorrupt, ModelVersionError, ShapeError
from .partitioning import PartitionAssignment
from .spectral import SpectralBasis, score_global

MAGIC = b"PTSIMMDL"
FORMAT_VERSION = 1


@dataclass
class SimilarityModel:
    """Scoring model: mix weight, spectral factors, sparse block-diagonal S."""

    lam: float
    basis: SpectralBasis
    s: sp.csr_matrix
    assignment: PartitionAssignment
    user_ids: list
    item_ids: list
    header: dict = field(default_factory=dict)

    @property
    def n_items(self) -> int:
        return self.s.shape[0]

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    def parameter_count(self) -> int:
        """CSR-convention size of the learned sparse part.

        Each stored value contributes its value and column index (2x NNZ)
        plus the row-pointer overhead and the singular-value vector.
        """
        return 2 * self.s.nnz + (self.n_items + 1) + len(self.basis.sigma)


def assemble(
    parts: list[tuple[np.ndarray, sp.spmatrix]],
    basis: SpectralBasis,
    lam: float,
    assignment: PartitionAssignment,
    header: dict | None = None,
    user_ids=None,
    item_ids=None,
) -> SimilarityModel:
    """Place per-partition blocks into the global sparse matrix.

    ``parts`` must cover the partition list exactly once; each block is
    re-indexed through its partition's item list, so the result is zero
    outside the diagonal blocks by construction.
    """
    n_items = len(assignment.assignment)
    expected = {tuple(p.tolist()) for p in assignment.partitions}
    provided = [tuple(np.asarray(items).tolist()) for items, _ in parts]
    if len(provided) != len(set(provided)) or set(provided) != expected:
        raise AssemblyMismatch(
            f"blocks cover {len(set(provided))} of {len(expected)} partitions"
        )
    rows, cols, vals = [], [], []
    for items, block in parts:
        items = np.asarray(items, dtype=np.int64)
        coo = sp.coo_matrix(block)
        if coo.shape != (len(items), len(items)):
            raise AssemblyMismatch(
                f"block shape {coo.shape} does not match partition size {len(items)}"
            )
        rows.append(items[coo.row])
        cols.append(items[coo.col])
        vals.append(coo.data.astype(np.float64))
    if rows:
        row = np.concatenate(rows)
        col = np.concatenate(cols)
        val = np.concatenate(vals)
    else:
        row = col = np.empty(0, dtype=np.int64)
        val = np.empty(0, dtype=np.float64)
    s = sp.coo_matrix((val, (row, col)), shape=(n_items, n_items)).tocsr()
    s.sort_indices()
    s = sp.csr_matrix(
        (s.data.astype(np.float64), s.indices.astype(np.int64), s.indptr.astype(np.int64)),
        shape=s.shape,
    )
    return SimilarityModel(
        lam=float(lam),
        basis=basis,
        s=s,
        assignment=assignment,
        user_ids=list(user_ids) if user_ids is not None else list(range(n_items)),
        item_ids=list(item_ids) if item_ids is not None else list(range(n_items)),
        header=dict(header or {}),
    )


def _as_dense_row(user_row, n_items: int) -> np.ndarray:
    if sp.issparse(user_row):
        row = np.asarray(user_row.todense()).ravel()
    else:
        row = np.asarray(user_row, dtype=np.float64).ravel()
    if row.shape[0] != n_items:
        raise ShapeError(f"user row length {row.shape[0]} != n_items {n_items}")
    return row


def score(model: SimilarityModel, user_row) -> np.ndarray:
    """Dense scores ``r_u (lam W + S)`` for one user row."""
    row = _as_dense_row(user_row, model.n_items)
    out = np.asarray(model.s.T @ row).ravel()
    if model.lam != 0.0:
        out = out + model.lam * score_global(model.basis, row)
    return out


def score_block(model: SimilarityModel, rows: sp.csr_matrix) -> np.ndarray:
    """Dense scores for a block of user rows (CSR, one user per row)."""
    if rows.shape[1] != model.n_items:
        raise ShapeError(f"rows have {rows.shape[1]} items, model has {model.n_items}")
    out = np.asarray((rows @ model.s).todense(), dtype=np.float64)
    if model.lam != 0.0:
        scaled = rows.multiply(model.basis.d_inv_sqrt[None, :]).tocsr()
        proj = scaled @ model.basis.vectors
        out += model.lam * (proj @ model.basis.vectors.T) * model.basis.d_sqrt[None, :]
    return out


def top_k_indices(scores: np.ndarray, k: int, exclude=None) -> np.ndarray:
    """Indices of the k best scores, ties broken by ascending index.

    Exact and deterministic: the boundary score is found with a partition,
    then tied candidates are admitted in index order.
    """
    n = scores.shape[0]
    if exclude is not None and len(exclude):
        candidates = np.setdiff1d(np.arange(n), np.asarray(exclude), assume_unique=False)
    else:
        candidates = np.arange(n)
    vals = scores[candidates]
    if k >= len(candidates):
        chosen = candidates
    else:
        kth = np.partition(-vals, k - 1)[k - 1]
        threshold = -kth
        above = candidates[vals > threshold]
        ties = candidates[vals == threshold]
        chosen = np.concatenate([above, ties[: k - len(above)]])
    order = np.lexsort((chosen, -scores[chosen]))
    return chosen[order]


def recommend(model: SimilarityModel, user_row, k: int = 20, mask_seen: bool = True):
    """Top-k (indices, scores), highest score first, id-ascending on ties.

    With ``mask_seen`` the items present in the user row are excluded before
    ranking.  If fewer than k candidates remain, all of them are returned.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    row = _as_dense_row(user_row, model.n_items)
    scores = score(model, row)
    exclude = np.flatnonzero(row) if mask_seen else None
    idx = top_k_indices(scores, k, exclude=exclude)
    return idx, scores[idx]


# --- persistence ----------------------------------------------------------
#
# Layout: MAGIC, uint32 version, length-prefixed JSON header, a fixed
# sequence of length-prefixed little-endian arrays, two JSON id-map blobs,
# and a CRC32 trailer over everything before it.

_ARRAY_ORDER = (
    "vectors", "sigma", "d_inv_sqrt", "d_sqrt",
    "s_data", "s_indices", "s_indptr", "assignment",
)


def _pack_array(arr: np.ndarray) -> bytes:
    dtype = arr.dtype.newbyteorder("<")
    data = np.ascontiguousarray(arr, dtype=dtype)
    tag = dtype.str.encode()
    dims = data.shape
    head = struct.pack("<B", len(tag)) + tag + struct.pack("<B", len(dims))
    head += struct.pack(f"<{len(dims)}q", *dims)
    payload = data.tobytes()
    return struct.pack("<Q", len(payload)) + head + payload


class _Reader:
    def __init__(self, blob: bytes, offset: int):
        self.blob = blob
        self.offset = offset

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            raise ModelCorrupt("model file truncated")
        out = self.blob[self.offset:self.offset + n]
        self.offset += n
        return out

    def array(self) -> np.ndarray:
        (paylen,) = struct.unpack("<Q", self.take(8))
        (speclen,) = struct.unpack("<B", self.take(1))
        dtype = np.dtype(self.take(speclen).decode())
        (ndim,) = struct.unpack("<B", self.take(1))
        dims = struct.unpack(f"<{ndim}q", self.take(8 * ndim))
        payload = self.take(paylen)
        return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()

    def blob_utf8(self):
        (n,) = struct.unpack("<Q", self.take(8))
        return json.loads(self.take(n).decode("utf-8"))


def save(model: SimilarityModel, path) -> None:
    """Write the model container; the byte stream is a pure function of the model."""
    header = dict(model.header)
    header.update({
        "format_version": FORMAT_VERSION,
        "lam": model.lam,
        "tau": model.assignment.tau,
        "n_users": model.n_users,
        "n_items": model.n_items,
        "k": model.basis.k,
        "nnz": int(model.s.nnz),
        "n_partitions": model.assignment.n_partitions,
    })
    arrays = {
        "vectors": model.basis.vectors,
        "sigma": model.basis.sigma,
        "d_inv_sqrt": model.basis.d_inv_sqrt,
        "d_sqrt": model.basis.d_sqrt,
        "s_data": model.s.data.astype(np.float64),
        "s_indices": model.s.indices.astype(np.int64),
        "s_indptr": model.s.indptr.astype(np.int64),
        "assignment": model.assignment.assignment.astype(np.int64),
    }
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<Q", len(head)) + head)
    for name in _ARRAY_ORDER:
        parts.append(_pack_array(arrays[name]))
    for ids in (model.user_ids, model.item_ids):
        blob = json.dumps(ids).encode("utf-8")
        parts.append(struct.pack("<Q", len(blob)) + blob)
    body = b"".join(parts)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", crc))


def load(path) -> SimilarityModel:
    """Read a model container, verifying magic, version and checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 or blob[: len(MAGIC)] != MAGIC:
        raise ModelCorrupt("not a model file (bad magic)")
    body, trailer = blob[:-4], blob[-4:]
    (crc_stored,) = struct.unpack("<I", trailer)
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise ModelCorrupt("checksum mismatch")
    (version,) = struct.unpack("<I", body[len(MAGIC):len(MAGIC) + 4])
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"format version {version}, expected {FORMAT_VERSION}")
    reader = _Reader(body, len(MAGIC) + 4)
    header = reader.blob_utf8()
    arrays = {name: reader.array() for name in _ARRAY_ORDER}
    user_ids = reader.blob_utf8()
    item_ids = reader.blob_utf8()
    basis = SpectralBasis(
        vectors=arrays["vectors"],
        sigma=arrays["sigma"],
        d_inv_sqrt=arrays["d_inv_sqrt"],
        d_sqrt=arrays["d_sqrt"],
    )
    n_items = len(arrays["assignment"])
    s = sp.csr_matrix(
        (arrays["s_data"], arrays["s_indices"], arrays["s_indptr"]),
        shape=(n_items, n_items),
    )
    assignment_vec = arrays["assignment"]
    n_parts = int(assignment_vec.max()) + 1 if n_items else 0
    partitions = [
        np.flatnonzero(assignment_vec == pid).astype(np.int64)
        for pid in range(n_parts)
    ]
    assignment = PartitionAssignment(
        assignment=assignment_vec,
        partitions=partitions,
        tau=float(header.get("tau", 1.0)),
        trace=[],
    )
    return SimilarityModel(
        lam=float(header["lam"]),
        basis=basis,
        s=s,
        assignment=assignment,
        user_ids=user_ids,
        item_ids=item_ids,
        header=header,
    )
