"""Shared fixtures: synthetic data generators and independent oracles.

Every oracle here recomputes its quantity from first principles with dense
numpy so library code paths are never checked against themselves.
"""

from __future__ import annotations

import numpy as np

from partsim.interactions import InteractionMatrix, from_dense


def random_interactions(seed, n_users=30, n_items=20, density=0.25) -> InteractionMatrix:
    """Seeded random binary matrix with no empty rows or columns."""
    rng = np.random.default_rng(seed)
    dense = (rng.random((n_users, n_items)) < density).astype(float)
    for u in np.flatnonzero(dense.sum(axis=1) == 0):
        dense[u, int(rng.integers(0, n_items))] = 1.0
    for i in np.flatnonzero(dense.sum(axis=0) == 0):
        dense[int(rng.integers(0, n_users)), i] = 1.0
    return from_dense(dense)


def pairs_from_matrix(m: InteractionMatrix):
    """External-id pairs of every stored interaction."""
    coo = m.matrix.tocoo()
    return [(m.user_ids[u], m.item_ids[i]) for u, i in zip(coo.row, coo.col)]


def dense_normalized(m: InteractionMatrix) -> np.ndarray:
    """Entrywise 1/sqrt(d_u * d_i) where an interaction exists."""
    dense = m.matrix.toarray()
    out = np.zeros_like(dense)
    for u in range(m.n_users):
        for i in range(m.n_items):
            if dense[u, i]:
                out[u, i] = 1.0 / np.sqrt(m.user_degrees[u] * m.item_degrees[i])
    return out


def dense_cooccurrence(m: InteractionMatrix, items) -> np.ndarray:
    """Brute-force count of users shared by each item pair."""
    dense = m.matrix.toarray()
    items = list(items)
    p = len(items)
    out = np.zeros((p, p))
    for a in range(p):
        for b in range(p):
            out[a, b] = np.sum((dense[:, items[a]] > 0) & (dense[:, items[b]] > 0))
    return out


def laplacian_eigensystem(m: InteractionMatrix, items=None):
    """Dense eigendecomposition of I - Q~ over an item subset.

    Matches the solver's restriction convention: user degrees recomputed on
    the restricted columns.  Returns (eigvals ascending, eigvecs columns).
    """
    dense = m.matrix.toarray()
    if items is not None:
        dense = dense[:, list(items)]
    u_deg = dense.sum(axis=1)
    i_deg = dense.sum(axis=0)
    u_scale = np.where(u_deg > 0, 1.0 / np.sqrt(np.maximum(u_deg, 1e-300)), 0.0)
    normalized = dense * u_scale[:, None] / np.sqrt(i_deg)[None, :]
    q_norm = normalized.T @ normalized
    lap = np.eye(q_norm.shape[0]) - q_norm
    vals, vecs = np.linalg.eigh(lap)
    return vals, vecs


def dense_svd(m: InteractionMatrix, items=None):
    """Full dense SVD of the normalized (restricted) matrix."""
    dense = m.matrix.toarray()
    if items is not None:
        dense = dense[:, list(items)]
    u_deg = dense.sum(axis=1)
    i_deg = dense.sum(axis=0)
    u_scale = np.where(u_deg > 0, 1.0 / np.sqrt(np.maximum(u_deg, 1e-300)), 0.0)
    normalized = dense * u_scale[:, None] / np.sqrt(i_deg)[None, :]
    u, sigma, vt = np.linalg.svd(normalized, full_matrices=False)
    return sigma, vt.T


def materialize_w(vectors: np.ndarray, item_degrees) -> np.ndarray:
    """Dense global similarity D^-1/2 V V^T D^1/2 from explicit factors."""
    deg = np.asarray(item_degrees, dtype=float)
    return (vectors @ vectors.T) / np.sqrt(deg)[:, None] * np.sqrt(deg)[None, :]


def materialize_c(model) -> np.ndarray:
    """Dense scoring matrix lam * W + S from a trained model."""
    w = materialize_w(model.basis.vectors, model.basis.d_sqrt ** 2)
    return model.lam * w + model.s.toarray()


def projected_gradient(qhat, w_n, theta_1, lam, n_steps=30000):
    """Small-step projected gradient descent on the partition encoding QP.

    Minimizes 0.5 tr(S'QS) - <Q(I - lam W), S> + theta_1 * sum(S) over
    S >= 0 with a zero diagonal, using a fixed 1/L step.
    """
    qhat = np.asarray(qhat, dtype=float)
    p = qhat.shape[0]
    target = qhat @ (np.eye(p) - lam * np.asarray(w_n, dtype=float))
    lipschitz = float(np.linalg.eigvalsh(qhat)[-1])
    step = 1.0 / max(lipschitz, 1e-12)
    s = np.zeros((p, p))
    for _ in range(n_steps):
        grad = qhat @ s - target + theta_1
        s = np.maximum(s - step * grad, 0.0)
        np.fill_diagonal(s, 0.0)
    return s


def full_objective(r_n, w_n, item_degrees, theta_1, theta_2, eta, lam, s) -> float:
    """Direct evaluation of the complete fitting objective for one partition."""
    r_n = np.asarray(r_n, dtype=float)
    s = np.asarray(s, dtype=float)
    c = lam * np.asarray(w_n, dtype=float) + s
    p = c.shape[0]
    fit = 0.5 * np.linalg.norm(r_n - r_n @ c) ** 2
    weighted = np.sqrt(np.asarray(item_degrees, dtype=float))[:, None] * c
    reg2 = 0.5 * theta_2 * np.linalg.norm(weighted) ** 2
    reg1 = theta_1 * np.abs(s).sum()
    ones = np.ones((1, p))
    aug = 0.5 * eta * np.linalg.norm(ones - ones @ c) ** 2
    return fit + reg2 + reg1 + aug


def modularity_oracle(adj, communities) -> float:
    """Direct double sum over ordered node pairs, diagonal included."""
    adj = np.asarray(adj, dtype=float)
    n = adj.shape[0]
    two_w = adj.sum()
    degrees = adj.sum(axis=1)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if communities[i] == communities[j]:
                total += adj[i, j] - degrees[i] * degrees[j] / two_w
    return total / two_w


def omega_oracle(m: InteractionMatrix, i: int, j: int) -> float:
    """Weight formula evaluated on the dense co-occurrence matrix."""
    q = dense_cooccurrence(m, range(m.n_items))
    p = q.sum(axis=1)
    return (q[i, j] / np.sqrt(p[j])) * (np.sqrt(p[i]) / (p[i] - q[i, i]))
