"""Evaluation protocol: splits, metrics, grid search, experiments and timing."""
from sempca.eval.metrics import EvaluationReport, f1_score, metrics
from sempca.eval.search import ClusterFamily, PcaFamily, SearchResult, grid_search
from sempca.eval.split import SplitSpec, split_chronological

__all__ = [
    "ClusterFamily",
    "EvaluationReport",
    "PcaFamily",
    "SearchResult",
    "SplitSpec",
    "f1_score",
    "grid_search",
    "metrics",
    "split_chronological",
]
