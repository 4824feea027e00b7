"""Partition-aware sparse item-similarity recommender.

Train with :func:`partsim.pipeline.train_matrix` or the ``partsim`` CLI;
score and rank with :mod:`partsim.model`; inspect the item graph with
:mod:`partsim.diagnostics`.
"""

from .admm import AdmmConfig, build_qhat, solve_partition
from .config import RunConfig
from .evaluation import EvalReport, evaluate, ndcg_at_k, recall_at_k
from .interactions import InteractionMatrix, NormalizedView, gram, ingest, normalize
from .model import SimilarityModel, assemble, load, recommend, save, score
from .partitioning import PartitionAssignment, bisect, partition
from .pipeline import grid_search, train_matrix
from .spectral import FiedlerResult, SpectralBasis, fiedler, score_global, truncated_svd

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "EvalReport",
    "FiedlerResult",
    "InteractionMatrix",
    "NormalizedView",
    "PartitionAssignment",
    "RunConfig",
    "SimilarityModel",
    "SpectralBasis",
    "assemble",
    "bisect",
    "build_qhat",
    "evaluate",
    "fiedler",
    "gram",
    "grid_search",
    "ingest",
    "load",
    "ndcg_at_k",
    "normalize",
    "partition",
    "recall_at_k",
    "recommend",
    "save",
    "score",
    "score_global",
    "solve_partition",
    "train_matrix",
    "truncated_svd",
]
