"""Seeded synthetic learning-to-rank data.

Relevance is a quantized linear function of the features plus Gaussian
noise, with grades 0-4 skewed toward 0 like web-search judgments.
"""
from __future__ import annotations

import numpy as np

from .data import QueryDataset, from_arrays

# cumulative share of documents below grade 1, 2, 3, 4
GRADE_QUANTILES = (0.45, 0.75, 0.9, 0.97)


def make_synthetic(
    n_queries: int,
    docs_per_query: int = 20,
    n_features: int = 10,
    noise: float = 0.0,
    seed: int = 0,
) -> QueryDataset:
    if n_queries < 1 or docs_per_query < 1 or n_features < 1:
        raise ValueError("n_queries, docs_per_query and n_features must all be >= 1")
    rng = np.random.default_rng(seed)
    weights = rng.normal(size=n_features)
    n = n_queries * docs_per_query
    X = rng.normal(size=(n, n_features))
    # a per-query shift in features makes queries differ in difficulty
    X += np.repeat(rng.normal(scale=0.5, size=(n_queries, n_features)), docs_per_query, axis=0)
    score = X @ weights + noise * rng.normal(size=n)
    cuts = np.quantile(score, GRADE_QUANTILES)
    labels = np.searchsorted(cuts, score, side="right").astype(np.float64)
    return from_arrays(np.round(X, 6), labels, [docs_per_query] * n_queries)


def make_synthetic_splits(
    n_train: int,
    n_valid: int,
    docs_per_query: int = 20,
    n_features: int = 10,
    noise: float = 0.0,
    seed: int = 0,
) -> tuple[QueryDataset, QueryDataset]:
    """Train/validation sets drawn from one scoring function."""
    full = make_synthetic(n_train + n_valid, docs_per_query, n_features, noise, seed)
    return full.subset(range(n_train)), full.subset(range(n_train, n_train + n_valid))
