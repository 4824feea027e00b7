"""Item-graph diagnostics: sampling weights, algebraic connectivity, modularity.

The sampled item graph keeps, per item, the k co-occurrence neighbors with
the largest informativeness weight; its normalized-Laplacian connectivity
shows when sampling fragments the catalog into disconnected groups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .errors import ModularityUndefined, OmegaUndefined
from .interactions import InteractionMatrix

_DENSE_CONNECTIVITY_LIMIT = 400
_OMEGA_BLOCK = 1024


def _cooccurrence_row_sums(m: InteractionMatrix) -> np.ndarray:
    # p_i = sum_k (R^T R)_ik, computed without materializing R^T R
    return np.asarray(
        m.matrix.T @ m.user_degrees.astype(np.float64)
    ).ravel()


def omega(m: InteractionMatrix, i: int, j: int) -> float:
    """Informativeness weight of the ordered item pair (i, j).

    ``(Q_ij / sqrt(p_j)) * (sqrt(p_i) / (p_i - Q_ii))`` with Q the raw
    co-occurrence matrix and p its row sums.  Undefined when item i never
    co-occurs with any other item.
    """
    if i == j:
        raise ValueError("omega is defined for distinct items only")
    p = _cooccurrence_row_sums(m)
    deg_i = float(m.item_degrees[i])
    if p[i] - deg_i <= 0:
        raise OmegaUndefined(f"item {i} co-occurs with no other item")
    col_i = m.csc[:, i]
    col_j = m.csc[:, j]
    q_ij = float((col_i.T @ col_j).toarray()[0, 0])
    return (q_ij / np.sqrt(p[j])) * (np.sqrt(p[i]) / (p[i] - deg_i))


@dataclass
class SampledItemGraph:
    """Top-k weighted item graph, kept both directed and symmetrized."""

    k_neighbors: int
    directed: sp.csr_matrix
    edges: sp.csr_matrix

    @property
    def n_items(self) -> int:
        return self.edges.shape[0]


def _symmetrize(directed: sp.csr_matrix, sym_weight: str) -> sp.csr_matrix:
    """Union of both edge directions; tied pairs keep the max or mean weight."""
    transposed = directed.T.tocsr()
    if sym_weight == "max":
        edges = directed.maximum(transposed)
    else:
        total = (directed + transposed).tocsr()
        total.sort_indices()
        count = ((directed != 0).astype(np.float64)
                 + (transposed != 0).astype(np.float64)).tocsr()
        count.sort_indices()
        edges = total
        edges.data = total.data / count.data
    edges.sort_indices()
    return edges


def _top_neighbors(values: np.ndarray, columns: np.ndarray, k: int):
    """Indices of the k largest values, ties broken by ascending column id."""
    if len(values) <= k:
        picked = np.arange(len(values))
    else:
        kth = np.partition(-values, k - 1)[k - 1]
        threshold = -kth
        above = np.flatnonzero(values > threshold)
        ties = np.flatnonzero(values == threshold)
        picked = np.concatenate([above, ties[: k - len(above)]])
    order = np.lexsort((columns[picked], -values[picked]))
    return picked[order]


def _ranked_neighbors(m: InteractionMatrix, k: int):
    """Per-item top-k neighbors as (indptr, columns, weights) in rank order.

    Rows are processed in blocks so the dense co-occurrence matrix is never
    held in full.  Items that co-occur with nothing get an empty row.
    """
    n = m.n_items
    p = _cooccurrence_row_sums(m)
    degrees = m.item_degrees.astype(np.float64)
    denom = p - degrees
    inv_sqrt_p = np.zeros(n)
    np.divide(1.0, np.sqrt(p), out=inv_sqrt_p, where=p > 0)
    row_scale = np.zeros(n)
    np.divide(np.sqrt(p), denom, out=row_scale, where=denom > 0)

    csc = m.csc
    counts = np.zeros(n, dtype=np.int64)
    cols_out, vals_out = [], []
    for start in range(0, n, _OMEGA_BLOCK):
        stop = min(start + _OMEGA_BLOCK, n)
        q_block = (csc[:, start:stop].T @ m.matrix).tocsr()
        q_block.sort_indices()  # matmul output order is unspecified
        for local in range(stop - start):
            i = start + local
            if denom[i] <= 0:
                continue
            lo, hi = q_block.indptr[local], q_block.indptr[local + 1]
            cols = q_block.indices[lo:hi]
            qvals = q_block.data[lo:hi]
            keep = cols != i
            cols = cols[keep]
            if cols.size == 0:
                continue
            weights = qvals[keep] * inv_sqrt_p[cols] * row_scale[i]
            picked = _top_neighbors(weights, cols, k)
            counts[i] = len(picked)
            cols_out.append(cols[picked].astype(np.int64))
            vals_out.append(weights[picked])
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    if cols_out:
        columns = np.concatenate(cols_out)
        weights = np.concatenate(vals_out)
    else:
        columns = np.empty(0, dtype=np.int64)
        weights = np.empty(0, dtype=np.float64)
    return indptr, columns, weights


def _prefix_graph(indptr, columns, weights, k: int, n: int) -> sp.csr_matrix:
    """Directed graph from the first min(k, row length) ranked neighbors."""
    lengths = np.minimum(np.diff(indptr), k)
    out_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lengths, out=out_indptr[1:])
    take = np.concatenate([
        np.arange(indptr[i], indptr[i] + lengths[i]) for i in range(n)
    ]) if n else np.empty(0, dtype=np.int64)
    directed = sp.csr_matrix(
        (weights[take], columns[take], out_indptr), shape=(n, n)
    )
    directed.sort_indices()
    return directed


def sample_graph(
    m: InteractionMatrix,
    k_neighbors: int,
    sym_weight: str = "max",
) -> SampledItemGraph:
    """Keep the k most informative neighbors per item, then symmetrize by union.

    ``sym_weight`` picks the surviving weight when both directions were
    selected with different values ("max" or "mean").
    """
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    if sym_weight not in ("max", "mean"):
        raise ValueError("sym_weight must be 'max' or 'mean'")
    indptr, columns, weights = _ranked_neighbors(m, k_neighbors)
    directed = _prefix_graph(indptr, columns, weights, k_neighbors, m.n_items)
    edges = _symmetrize(directed, sym_weight)
    return SampledItemGraph(k_neighbors=k_neighbors, directed=directed, edges=edges)


def connectivity(g: SampledItemGraph | sp.spmatrix, seed=0) -> float:
    """Second-smallest normalized-Laplacian eigenvalue of a symmetric graph.

    Exactly 0 when the graph (isolated nodes included) is disconnected;
    otherwise computed densely below a size cutoff and with ARPACK above it.
    """
    adj = g.edges if isinstance(g, SampledItemGraph) else sp.csr_matrix(g)
    n = adj.shape[0]
    if n < 2:
        raise ValueError("connectivity needs at least 2 nodes")
    n_comp, _ = csgraph.connected_components(adj, directed=False)
    if n_comp > 1:
        return 0.0
    degrees = np.asarray(adj.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(degrees)
    norm_adj = adj.multiply(inv_sqrt[:, None]).multiply(inv_sqrt[None, :]).tocsr()
    if n <= _DENSE_CONNECTIVITY_LIMIT:
        eigvals = np.linalg.eigvalsh(norm_adj.toarray())
        second = eigvals[-2]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        vals = spla.eigsh(norm_adj, k=2, which="LA", v0=v0, return_eigenvectors=False)
        second = np.sort(vals)[0]
    return float(1.0 - second)


def connectivity_sweep(
    m: InteractionMatrix,
    k_values,
    sym_weight: str = "max",
    seed=0,
):
    """(k_neighbors, connectivity) pairs, computing neighbor lists only once.

    Top-k selections nest, so the sorted neighbor lists at the largest k are
    reused as prefixes for every smaller k.
    """
    k_values = sorted(set(int(k) for k in k_values))
    if not k_values or k_values[0] < 1:
        raise ValueError("k values must be positive")
    n = m.n_items
    indptr, columns, weights = _ranked_neighbors(m, k_values[-1])
    results = []
    for k in k_values:
        directed = _prefix_graph(indptr, columns, weights, k, n)
        graph = SampledItemGraph(
            k_neighbors=k, directed=directed, edges=_symmetrize(directed, sym_weight)
        )
        results.append((k, connectivity(graph, seed=seed)))
    return results


def modularity(g, communities) -> float:
    """Newman modularity of a weighted undirected graph.

    ``(1/2W) * sum_ij [A_ij - d_i d_j / 2W] * [c_i == c_j]`` over ordered
    pairs including the diagonal; undefined when the total edge weight is 0.
    """
    if isinstance(g, SampledItemGraph):
        adj = g.edges
    elif sp.issparse(g):
        adj = g.tocsr()
    else:
        adj = sp.csr_matrix(np.asarray(g, dtype=np.float64))
    communities = np.asarray(communities)
    if communities.shape[0] != adj.shape[0]:
        raise ValueError("community assignment must cover all nodes")
    total = adj.sum()
    if total == 0:
        raise ModularityUndefined("graph has no edge weight")
    two_w = float(total)
    degrees = np.asarray(adj.sum(axis=1)).ravel()
    score = 0.0
    for label in np.unique(communities):
        members = np.flatnonzero(communities == label)
        block = adj[members][:, members]
        score += float(block.sum()) - float(degrees[members].sum()) ** 2 / two_w
    return score / two_w
