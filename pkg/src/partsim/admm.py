"""Per-partition constrained sparse encoding solved with ADMM.

Each partition solves a quadratic encoding problem with an l1 penalty, a
non-negativity constraint and a zero diagonal.  The ridge-shifted system
matrix is factored once per partition; every iteration is then a single
dense multiply plus elementwise updates, and the diagonal constraint is
enforced exactly through a per-column multiplier correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import AdmmDiverged, ShapeError
from .interactions import DEFAULT_MEMORY_BUDGET_BYTES, InteractionMatrix, gram

DEFAULT_TOL = 1e-4


@dataclass
class AdmmConfig:
    """Weights and solver controls for the partition encoding problem.

    theta_1 scales the l1 penalty, theta_2 the degree-weighted l2 penalty,
    eta the partition-membership augmentation, lam the global low-rank mix,
    rho the ADMM penalty.  theta_2 and eta may be 0 (ablation variants);
    entries below prune_threshold are dropped from the solution.
    """

    theta_1: float = 0.5
    theta_2: float = 1.0
    eta: float = 0.1
    lam: float = 0.5
    rho: float = 5000.0
    max_iter: int = 50
    prune_threshold: float = 2e-3

    def __post_init__(self):
        if self.theta_1 <= 0:
            raise ValueError("theta_1 must be > 0")
        if self.theta_2 < 0 or self.eta < 0:
            raise ValueError("theta_2 and eta must be >= 0")
        if not 0 <= self.lam < 1:
            raise ValueError("lam must be in [0, 1)")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.prune_threshold < 0:
            raise ValueError("prune_threshold must be >= 0")


@dataclass
class AdmmState:
    """Dense iterates of one partition solve.

    ``residual`` combines the primal gap max|z - s| with the scaled dual gap
    rho * max|s - s_prev|; both must vanish at a true fixed point (the primal
    gap alone can touch zero while the iterates are still moving).
    """

    z: np.ndarray
    s: np.ndarray
    phi: np.ndarray
    rho: float
    iteration: int = 0
    residual: float = field(default=np.inf)
    primal_residual: float = field(default=np.inf)
    dual_residual: float = field(default=np.inf)


def build_qhat(
    m: InteractionMatrix,
    items,
    cfg: AdmmConfig,
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET_BYTES,
) -> np.ndarray:
    """System matrix of one partition: co-occurrence + theta_2 * degrees + eta.

    The eta term adds a rank-one all-ones block, the Gram contribution of one
    synthetic user interacting with every item of the partition.
    """
    items = np.asarray(items, dtype=np.int64)
    qhat = gram(m, items, memory_budget_bytes=memory_budget_bytes)
    degrees = qhat.diagonal().copy()
    if cfg.theta_2 != 0.0:
        qhat[np.diag_indices_from(qhat)] += cfg.theta_2 * degrees
    if cfg.eta != 0.0:
        qhat += cfg.eta
    return qhat


@dataclass
class _Precomputed:
    ridge_inv: np.ndarray        # (qhat + rho I)^-1
    ridge_inv_diag: np.ndarray
    target: np.ndarray           # ridge_inv @ qhat @ (I - lam * w_n)
    theta_1: float
    rho: float


def _prepare(qhat: np.ndarray, w_n: np.ndarray, cfg: AdmmConfig) -> _Precomputed:
    p = qhat.shape[0]
    ridge = qhat + cfg.rho * np.eye(p)
    factor = scipy.linalg.cho_factor(ridge, lower=True)
    ridge_inv = scipy.linalg.cho_solve(factor, np.eye(p))
    ridge_inv = 0.5 * (ridge_inv + ridge_inv.T)
    fit_target = qhat @ (np.eye(p) - cfg.lam * w_n)
    return _Precomputed(
        ridge_inv=ridge_inv,
        ridge_inv_diag=ridge_inv.diagonal().copy(),
        target=ridge_inv @ fit_target,
        theta_1=cfg.theta_1,
        rho=cfg.rho,
    )


def _step(pre: _Precomputed, state: AdmmState) -> None:
    """One ADMM iteration, in place.

    The multiplier mu rescales columns of the inverse so the updated z has an
    exactly zero diagonal; s is the soft-thresholded non-negative projection.
    """
    b = pre.target + pre.rho * (pre.ridge_inv @ (state.s - state.phi))
    mu = b.diagonal() / pre.ridge_inv_diag
    z = b - pre.ridge_inv * mu[None, :]
    s = np.maximum(z + state.phi - pre.theta_1 / pre.rho, 0.0)
    np.fill_diagonal(s, 0.0)
    state.phi += z - s
    state.z = z
    state.primal_residual = float(np.abs(z - s).max()) if z.size else 0.0
    state.dual_residual = float(pre.rho * np.abs(s - state.s).max()) if s.size else 0.0
    state.s = s
    state.iteration += 1
    state.residual = max(state.primal_residual, state.dual_residual)


def solve_partition(
    qhat: np.ndarray,
    w_n: np.ndarray,
    cfg: AdmmConfig,
    tol: float = DEFAULT_TOL,
    callback=None,
) -> sp.csr_matrix:
    """Sparse non-negative similarity block for one partition.

    Iterates until both the primal residual max|z - s| and the scaled dual
    residual fall below ``tol`` or ``cfg.max_iter`` is reached; a combined
    residual growing 10x above its running minimum raises AdmmDiverged with
    the residual log.  Entries below ``cfg.prune_threshold`` are dropped from
    the returned CSR block.
    """
    qhat = np.asarray(qhat, dtype=np.float64)
    w_n = np.asarray(w_n, dtype=np.float64)
    if qhat.shape != w_n.shape or qhat.shape[0] != qhat.shape[1]:
        raise ShapeError(f"qhat {qhat.shape} and w_n {w_n.shape} must be square and equal")
    p = qhat.shape[0]
    if p <= 1:
        # the zero-diagonal constraint forces an empty block
        return sp.csr_matrix((p, p), dtype=np.float64)
    pre = _prepare(qhat, w_n, cfg)
    state = AdmmState(
        z=np.zeros((p, p)), s=np.zeros((p, p)), phi=np.zeros((p, p)), rho=cfg.rho
    )
    log: list[float] = []
    min_residual = np.inf
    for _ in range(cfg.max_iter):
        _step(pre, state)
        log.append(state.residual)
        if callback is not None:
            callback(state)
        if state.residual <= tol:
            break
        if state.residual > 10.0 * min_residual:
            raise AdmmDiverged(log)
        min_residual = min(min_residual, state.residual)
    s = state.s
    if cfg.prune_threshold > 0.0:
        s = np.where(s >= cfg.prune_threshold, s, 0.0)
    out = sp.csr_matrix(s)
    out.eliminate_zeros()
    out.sort_indices()
    return out


def solve_items(
    m: InteractionMatrix,
    items,
    w_n: np.ndarray,
    cfg: AdmmConfig,
    tol: float = DEFAULT_TOL,
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET_BYTES,
) -> sp.csr_matrix:
    """Convenience wrapper: build the system matrix for ``items`` and solve."""
    qhat = build_qhat(m, items, cfg, memory_budget_bytes=memory_budget_bytes)
    return solve_partition(qhat, w_n, cfg, tol=tol)


def quadratic_objective(qhat: np.ndarray, w_n: np.ndarray, cfg: AdmmConfig,
                        s: np.ndarray) -> float:
    """Encoding objective 0.5 tr(S'QS) - <Q(I - lam W), S> + theta_1 |S|_1.

    Equal to the full fitting objective up to a constant on the feasible set
    (diagonal-free, non-negative S); used for convergence logs and tests.
    """
    s = np.asarray(s, dtype=np.float64)
    p = qhat.shape[0]
    fit_target = qhat @ (np.eye(p) - cfg.lam * w_n)
    quad = 0.5 * float(np.sum(s * (qhat @ s)))
    lin = float(np.sum(fit_target * s))
    return quad - lin + cfg.theta_1 * float(np.abs(s).sum())
