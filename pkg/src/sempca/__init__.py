"""Semantic log-event embeddings with PCA subspace anomaly detection, plus
the count-vector PCA and LogCluster baselines and their evaluation protocol."""

__version__ = "0.1.0"
