"""Multi-relational knowledge-graph embeddings in the Poincare ball (MuRP)
and in Euclidean space (MuRE)."""

__version__ = "0.1.0"

from ._backend import get_backend, kernels
from .dataset import KnowledgeGraph, classify_relations, khs, load_dataset_dir, load_graph, path_stats
from .evaluator import RankingReport, TruthIndex, evaluate
from .model import Geometry, ModelParams, load_checkpoint, save_checkpoint, score
from .trainer import TrainConfig, train

__all__ = [
    "Geometry", "KnowledgeGraph", "ModelParams", "RankingReport", "TrainConfig", "TruthIndex",
    "classify_relations", "evaluate", "get_backend", "kernels", "khs", "load_checkpoint",
    "load_dataset_dir", "load_graph", "path_stats", "save_checkpoint", "score", "train",
]
