"""NDCG@k and MAP@k, per query and averaged over queries."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .data import QueryDataset

METRICS = ("ndcg", "map")


def _check(labels, scores, k):
    labels = np.asarray(labels, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ValueError(f"labels {labels.shape} and scores {scores.shape} must be equal-length vectors")
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    return labels, scores, int(k)


def _discounts(m: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, m + 2))


def ndcg_at_k(labels, scores, k: int) -> float:
    """Exponential-gain NDCG truncated at ``k``.

    Ties in ``scores`` keep document order. Returns 0 when every label is 0.
    """
    labels, scores, k = _check(labels, scores, k)
    m = min(k, len(labels))
    order = np.argsort(-scores, kind="stable")[:m]
    ideal = np.sort(labels)[::-1][:m]
    disc = _discounts(m)
    idcg = float(np.sum((2.0 ** ideal - 1.0) * disc))
    if idcg == 0.0:
        return 0.0
    dcg = float(np.sum((2.0 ** labels[order] - 1.0) * disc))
    return dcg / idcg


def map_at_k(labels, scores, k: int) -> float:
    """Average precision at ``k`` on relevance binarized as ``label >= 1``.

    Normalized by ``min(R, k)``, ``R`` the number of relevant documents;
    returns 0 when ``R == 0``.
    """
    labels, scores, k = _check(labels, scores, k)
    rel = labels >= 1
    total_relevant = int(rel.sum())
    if total_relevant == 0:
        return 0.0
    m = min(k, len(labels))
    hits = rel[np.argsort(-scores, kind="stable")[:m]].astype(np.float64)
    precision = np.cumsum(hits) / np.arange(1, m + 1)
    return float(np.sum(precision * hits) / min(total_relevant, k))


_METRIC_FUNCS = {"ndcg": ndcg_at_k, "map": map_at_k}


def is_degenerate(metric: str, labels) -> bool:
    labels = np.asarray(labels)
    if metric == "ndcg":
        return not np.any(labels > 0)
    return not np.any(labels >= 1)


@dataclass
class EvalReport:
    ks: tuple[int, ...]
    per_query: dict[tuple[str, int], np.ndarray]
    degenerate: dict[str, int]
    query_ids: tuple[str, ...] = field(default=())

    @property
    def means(self) -> dict[tuple[str, int], float]:
        return {key: float(np.mean(vals)) for key, vals in self.per_query.items()}

    def mean(self, metric: str, k: int) -> float:
        return float(np.mean(self.per_query[(metric, k)]))

    def rows(self):
        for metric in METRICS:
            for k in self.ks:
                yield metric, k, self.mean(metric, k), self.degenerate[metric]

    def write_table(self, fh: IO[str]) -> None:
        fh.write("metric\tk\tmean\tdegenerate_queries\n")
        for metric, k, value, degen in self.rows():
            fh.write(f"{metric}\t{k}\t{value:.6f}\t{degen}\n")

    def write_per_query(self, fh: IO[str]) -> None:
        keys = [(m, k) for m in METRICS for k in self.ks]
        fh.write("qid\t" + "\t".join(f"{m}@{k}" for m, k in keys) + "\n")
        for i, qid in enumerate(self.query_ids):
            vals = "\t".join(f"{self.per_query[key][i]:.6f}" for key in keys)
            fh.write(f"{qid}\t{vals}\n")

    def format(self) -> str:
        return "  ".join(f"{m}@{k}={v:.4f}" for m, k, v, _ in self.rows())


def evaluate(dataset: QueryDataset, scores, ks: Sequence[int] = (1, 10)) -> EvalReport:
    """Score every query at every truncation level.

    Degenerate queries (no relevant document) count as 0 and stay in the mean.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (dataset.num_docs,):
        raise ValueError(f"expected {dataset.num_docs} scores, got {scores.shape[0] if scores.ndim else 0}")
    ks = tuple(int(k) for k in ks)
    if not ks or any(k < 1 for k in ks):
        raise ValueError(f"truncation levels must be positive, got {ks}")
    per_query = {(m, k): np.empty(dataset.num_queries) for m in METRICS for k in ks}
    degenerate = dict.fromkeys(METRICS, 0)
    for qi, sl in enumerate(dataset.query_slices()):
        y, s = dataset.labels[sl], scores[sl]
        for m in METRICS:
            degenerate[m] += is_degenerate(m, y)
            for k in ks:
                per_query[(m, k)][qi] = _METRIC_FUNCS[m](y, s, k)
    return EvalReport(ks=ks, per_query=per_query, degenerate=degenerate, query_ids=dataset.query_ids)
