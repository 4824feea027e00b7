"""Truncated SVD of the normalized interaction matrix and Fiedler information.

Interaction spectra have very flat tails, so the workhorse is ARPACK's
implicitly restarted Lanczos on the sparse matrix with a seeded start vector;
every returned triplet is then verified against the residual contract
``||A^T A v - sigma^2 v|| <= tol * sigma_1^2``.  A seeded block subspace
iteration with Rayleigh-Ritz extraction covers the full-rank case ARPACK
cannot do and polishes or replaces ARPACK output that misses the contract.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ShapeError, SvdNoConverge
from .interactions import NormalizedView

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 1000


@dataclass
class SpectralBasis:
    """Top-k right singular vectors of the normalized matrix plus item scalings.

    Columns of ``vectors`` are orthonormal, ``sigma`` is descending and each
    column's largest-magnitude entry is positive so the decomposition is
    reproducible.  ``d_inv_sqrt``/``d_sqrt`` are the item-degree scalings that
    turn the projector ``V V^T`` into the global similarity operator without
    ever materializing it.
    """

    vectors: np.ndarray
    sigma: np.ndarray
    d_inv_sqrt: np.ndarray
    d_sqrt: np.ndarray

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    @property
    def n_items(self) -> int:
        return self.vectors.shape[0]

    def dense_block(self, items: Sequence[int]) -> np.ndarray:
        """Dense slice of the global similarity operator over an item subset."""
        items = np.asarray(items, dtype=np.int64)
        v = self.vectors[items]
        return (self.d_inv_sqrt[items, None] * (v @ v.T)) * self.d_sqrt[None, items]


@dataclass
class FiedlerResult:
    """Algebraic-connectivity estimate from the second singular triplet.

    ``value`` is 1 - sigma_2^2, the second-smallest eigenvalue of the
    normalized item-graph Laplacian; ``vector`` is the unit-norm second right
    singular vector over the item subset.
    """

    value: float
    vector: np.ndarray


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    lead = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _residuals(a: sp.csr_matrix, theta: np.ndarray, vectors: np.ndarray):
    """Per-column ||A^T A v - theta v||_2."""
    gv = a.T @ (a @ vectors)
    return np.linalg.norm(gv - vectors * theta, axis=0)


def _arpack_attempt(a: sp.csr_matrix, k: int, seed):
    """Seeded Lanczos pass; returns (theta desc, vectors) or None."""
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(min(a.shape))
    try:
        _, sigma, vt = spla.svds(a, k=k, tol=0, v0=v0,
                                 return_singular_vectors="vh")
    except (spla.ArpackNoConvergence, spla.ArpackError):
        return None
    order = np.argsort(sigma)[::-1]
    return sigma[order] ** 2, np.ascontiguousarray(vt[order].T)


def _subspace_iteration(a: sp.csr_matrix, k: int, tol: float, max_iter: int,
                        seed, oversample: int, warm: np.ndarray | None = None):
    """Top-k Ritz pairs of A^T A via seeded block subspace iteration.

    Returns (theta, vectors) with theta descending; raises SvdNoConverge when
    the first k residuals ||A^T A v - theta v|| stay above tol * theta_1.
    """
    p = a.shape[1]
    b = min(p, k + oversample)
    rng = np.random.default_rng(seed)
    block = rng.standard_normal((p, b))
    if warm is not None:
        block[:, : warm.shape[1]] = warm
    q, _ = np.linalg.qr(block)
    best = np.inf
    for _ in range(max_iter):
        z = a.T @ (a @ q)
        h = q.T @ z
        h = 0.5 * (h + h.T)
        theta, u = np.linalg.eigh(h)
        order = np.argsort(theta)[::-1]
        theta = theta[order]
        u = u[:, order]
        ritz = q @ u
        gv = z @ u
        resid = np.linalg.norm(gv[:, :k] - ritz[:, :k] * theta[:k], axis=0)
        scale = max(theta[0], np.finfo(float).tiny)
        worst = float(resid.max())
        best = min(best, worst)
        if worst <= tol * scale:
            return theta[:k], ritz[:, :k]
        q, _ = np.linalg.qr(z)
    raise SvdNoConverge(best_residual=best, max_iter=max_iter)


def _top_right_vectors(a: sp.csr_matrix, k: int, tol: float, max_iter: int,
                       seed, oversample: int):
    """Verified top-k right singular pairs of A as (theta = sigma^2, vectors)."""
    warm = None
    if 1 <= k < min(a.shape):
        got = _arpack_attempt(a, k, seed)
        if got is not None:
            theta, vectors = got
            scale = max(theta[0], np.finfo(float).tiny)
            if float(_residuals(a, theta, vectors).max()) <= tol * scale:
                return theta, vectors
            warm = vectors
    return _subspace_iteration(a, k, tol, max_iter, seed, oversample, warm=warm)


def truncated_svd(
    view: NormalizedView,
    items: Sequence[int] | None = None,
    k: int = 256,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed=0,
    oversample: int = 10,
) -> SpectralBasis:
    """Top-k right singular triplets of the normalized matrix over ``items``.

    ``k`` must not exceed min(n_users, n_items of the restriction); ``tol`` is
    relative to the squared leading singular value.
    """
    a = view.restricted(items)
    n_rows, p = a.shape
    if not 1 <= k <= min(n_rows, p):
        raise ShapeError(f"rank k={k} outside 1..min({n_rows}, {p})")
    if tol <= 0:
        raise ShapeError("tol must be positive")
    theta, vecs = _top_right_vectors(a, k, tol, max_iter, seed, oversample)
    sigma = np.sqrt(np.maximum(theta, 0.0))
    if items is None:
        degrees = view.source.item_degrees.astype(np.float64)
    else:
        degrees = view.source.item_degrees[np.asarray(items, dtype=np.int64)].astype(np.float64)
    return SpectralBasis(
        vectors=_canonical_signs(vecs),
        sigma=sigma,
        d_inv_sqrt=1.0 / np.sqrt(degrees),
        d_sqrt=np.sqrt(degrees),
    )


def fiedler(
    view: NormalizedView,
    items: Sequence[int] | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed=0,
    oversample: int = 30,
) -> FiedlerResult:
    """Second right singular vector of the restricted normalized matrix.

    The associated Laplacian eigenvalue 1 - sigma_2^2 is 0 exactly when the
    restricted item graph is disconnected.  Works for any rank: beyond the
    matrix rank the singular value is 0 and the value saturates at 1.
    """
    a = view.restricted(items)
    if a.shape[1] < 2:
        raise ShapeError("need at least 2 items for a Fiedler vector")
    theta, vecs = _top_right_vectors(a, 2, tol, max_iter, seed, oversample)
    vec = _canonical_signs(vecs[:, 1:2])[:, 0]
    return FiedlerResult(value=float(1.0 - theta[1]), vector=vec)


def score_global(basis: SpectralBasis, user_row) -> np.ndarray:
    """Scores of one user against the global low-rank similarity.

    Computes ``((r * d^-1/2) V) V^T * d^1/2`` with two thin products; the
    dense similarity operator is never formed.
    """
    if sp.issparse(user_row):
        row = np.asarray(user_row.todense()).ravel()
    else:
        row = np.asarray(user_row, dtype=np.float64).ravel()
    if row.shape[0] != basis.n_items:
        raise ShapeError(
            f"user row has {row.shape[0]} items, basis covers {basis.n_items}"
        )
    projected = (row * basis.d_inv_sqrt) @ basis.vectors
    return (projected @ basis.vectors.T) * basis.d_sqrt
