"""Recursive spectral bisection of the item set with a size-ratio cap.

A subset is split by the sign of its Fiedler vector; any side whose size is
still at least ``tau`` times the FULL item count is split again.  Per-node
seeds are derived from the node's position in the recursion tree, so shrinking
tau only refines an existing partition tree and never reshuffles it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .interactions import NormalizedView

RETRY_ATTEMPTS = 3


@dataclass
class TraceNode:
    """One visited subset in the recursion tree."""

    node_id: int
    depth: int
    size: int
    fiedler_value: float | None = None
    left_size: int | None = None
    right_size: int | None = None
    unsplittable: bool = False


@dataclass
class PartitionAssignment:
    """Disjoint covering item partitions with their recursion trace.

    Partition ids are contiguous 0..P-1 ordered by each partition's first
    item index; ``assignment[i]`` is the partition id of item i.
    """

    assignment: np.ndarray
    partitions: list[np.ndarray]
    tau: float
    trace: list[TraceNode] = field(default_factory=list)

    @property
    def n_partitions(self) -> int:
        return len(self.partitions)


def _node_seed(seed, path_id: int, attempt: int) -> int:
    # Path-keyed seeds keep sibling subtrees independent of visit order.
    return int(np.random.SeedSequence((seed, path_id, attempt)).generate_state(1)[0])


def bisect(view: NormalizedView, items, seed=0, tol=spectral.DEFAULT_TOL,
           max_iter=spectral.DEFAULT_MAX_ITER):
    """Split an item list by Fiedler-vector sign; zeros go to the left side."""
    items = np.asarray(items, dtype=np.int64)
    result = spectral.fiedler(view, items, tol=tol, max_iter=max_iter, seed=seed)
    nonneg = result.vector >= 0
    return items[nonneg], items[~nonneg]


def partition(
    view: NormalizedView,
    tau: float,
    seed=0,
    tol=spectral.DEFAULT_TOL,
    max_iter=spectral.DEFAULT_MAX_ITER,
) -> PartitionAssignment:
    """Recursively bisect all items until every partition is below tau * n_items.

    The root is split unconditionally.  A subset whose bisection leaves one
    side empty is retried with fresh seeds and, failing that, kept as a leaf
    flagged ``unsplittable`` in the trace.
    """
    if not 0 < tau <= 1:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    n_items = view.n_items
    threshold = tau * n_items
    trace: list[TraceNode] = []
    leaves: list[np.ndarray] = []

    def visit(items: np.ndarray, path_id: int, depth: int, force_split: bool):
        node = TraceNode(node_id=len(trace), depth=depth, size=len(items))
        trace.append(node)
        if not force_split and len(items) < threshold:
            leaves.append(items)
            return
        if len(items) < 2:
            node.unsplittable = True
            leaves.append(items)
            return
        left = right = None
        for attempt in range(RETRY_ATTEMPTS):
            result = spectral.fiedler(
                view, items, tol=tol, max_iter=max_iter,
                seed=_node_seed(seed, path_id, attempt),
            )
            node.fiedler_value = result.value
            nonneg = result.vector >= 0
            left, right = items[nonneg], items[~nonneg]
            if len(left) > 0 and len(right) > 0:
                break
        node.left_size = len(left)
        node.right_size = len(right)
        if len(left) == 0 or len(right) == 0:
            node.unsplittable = True
            leaves.append(items)
            return
        visit(left, 2 * path_id, depth + 1, force_split=False)
        visit(right, 2 * path_id + 1, depth + 1, force_split=False)

    all_items = np.arange(n_items, dtype=np.int64)
    visit(all_items, path_id=1, depth=0, force_split=n_items >= 2)

    leaves.sort(key=lambda part: int(part[0]))
    assignment = np.empty(n_items, dtype=np.int64)
    for pid, part in enumerate(leaves):
        assignment[part] = pid
    return PartitionAssignment(
        assignment=assignment, partitions=leaves, tau=tau, trace=trace
    )


def trace_rows(assignment: PartitionAssignment):
    """Trace as CSV-ready rows: node id, depth, size, Fiedler value, child sizes."""
    rows = []
    for node in assignment.trace:
        rows.append({
            "node_id": node.node_id,
            "depth": node.depth,
            "size": node.size,
            "fiedler_value": "" if node.fiedler_value is None else repr(node.fiedler_value),
            "left_size": "" if node.left_size is None else node.left_size,
            "right_size": "" if node.right_size is None else node.right_size,
            "unsplittable": int(node.unsplittable),
        })
    return rows
