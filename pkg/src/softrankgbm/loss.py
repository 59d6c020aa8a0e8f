"""SoftRankMSE and the squared-error ablation losses, with their residuals.

Residuals are negative functional gradients of a scalar objective with
respect to the current document scores, stacked in dataset order. The
objective is left unnormalized over queries (no ``1/K``) so residual
magnitudes do not shrink as the number of queries grows;
:func:`training_loss` reports the normalized value.
"""
from __future__ import annotations

import enum
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import QueryDataset
from .softrank import SoftRankResult, soft_rank, soft_rank_vjp


class LossVariant(str, enum.Enum):
    POINTWISE_MSE = "mse"
    LISTWISE_MSE = "listwise-mse"
    POINTWISE_SOFTRANK_MSE = "softrank-mse-pointwise"
    LISTWISE_SOFTRANK_MSE = "softrank-mse"

    @property
    def uses_soft_rank(self) -> bool:
        return self in (LossVariant.POINTWISE_SOFTRANK_MSE, LossVariant.LISTWISE_SOFTRANK_MSE)


@dataclass(frozen=True)
class LossSpec:
    variant: LossVariant = LossVariant.LISTWISE_SOFTRANK_MSE
    epsilon: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "variant", LossVariant(self.variant))
        if self.variant.uses_soft_rank and not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive for {self.variant.value}, got {self.epsilon!r}")


@dataclass(frozen=True)
class TargetRanks:
    """Soft ranks of the labels, one vector per list.

    ``offsets`` records how documents were grouped into lists: per query for
    the listwise loss, a single list over the whole dataset for the
    pointwise soft-rank ablation.
    """

    ranks: tuple[np.ndarray, ...]
    offsets: np.ndarray
    epsilon: float

    def __len__(self) -> int:
        return len(self.ranks)

    def groups(self) -> list[slice]:
        o = self.offsets
        return [slice(int(o[i]), int(o[i + 1])) for i in range(len(o) - 1)]


def _targets_for_offsets(labels: np.ndarray, offsets: np.ndarray, epsilon: float) -> TargetRanks:
    ranks = tuple(
        soft_rank(labels[int(a):int(b)], epsilon).soft_ranks
        for a, b in zip(offsets[:-1], offsets[1:])
    )
    return TargetRanks(ranks=ranks, offsets=np.asarray(offsets), epsilon=float(epsilon))


def precompute_target_ranks(dataset: QueryDataset, epsilon: float) -> TargetRanks:
    if dataset.num_queries == 0:
        raise ValueError("dataset has no queries")
    return _targets_for_offsets(dataset.labels, dataset.query_offsets, epsilon)


def prepare_targets(dataset: QueryDataset, spec: LossSpec) -> TargetRanks | None:
    """Label soft ranks needed by ``spec``; ``None`` for the plain MSE variants."""
    if spec.variant is LossVariant.LISTWISE_SOFTRANK_MSE:
        return precompute_target_ranks(dataset, spec.epsilon)
    if spec.variant is LossVariant.POINTWISE_SOFTRANK_MSE:
        return _targets_for_offsets(dataset.labels, np.array([0, dataset.num_docs]), spec.epsilon)
    return None


def softrank_mse_loss(targets: TargetRanks | Sequence[np.ndarray], predicted: Sequence[SoftRankResult]) -> float:
    """Mean over lists of ``||R - R_hat||^2 / (2 n)``."""
    target_list = targets.ranks if isinstance(targets, TargetRanks) else targets
    if len(target_list) != len(predicted):
        raise ValueError(f"{len(target_list)} target lists but {len(predicted)} predictions")
    if not target_list:
        raise ValueError("no lists to score")
    total = 0.0
    for r, pred in zip(target_list, predicted):
        r = np.asarray(r, dtype=np.float64)
        if r.shape != pred.soft_ranks.shape:
            raise ValueError(f"target length {r.shape[0]} != predicted length {len(pred)}")
        diff = r - pred.soft_ranks
        total += float(diff @ diff) / (2 * len(r))
    return total / len(target_list)


def per_query_gradient(target, predicted: SoftRankResult, epsilon: float | None = None) -> np.ndarray:
    """Negative gradient of ``||R - R_hat||^2 / (2 n)`` w.r.t. the list's scores."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != predicted.soft_ranks.shape:
        raise ValueError(f"target length {target.shape} != predicted length {predicted.soft_ranks.shape}")
    g_rank = (predicted.soft_ranks - target) / len(target)
    return -soft_rank_vjp(predicted, g_rank, epsilon)


def _soft_rank_group(args):
    target, scores, epsilon = args
    pred = soft_rank(scores, epsilon)
    diff = target - pred.soft_ranks
    return float(diff @ diff) / (2 * len(target)), per_query_gradient(target, pred, epsilon)


def loss_and_residuals(
    dataset: QueryDataset,
    targets: TargetRanks | None,
    scores,
    spec: LossSpec,
    executor: Executor | None = None,
) -> tuple[float, np.ndarray]:
    """Unnormalized objective at ``scores`` and its negative gradient.

    Lists are processed independently (optionally on ``executor``); results
    are always concatenated in dataset order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (dataset.num_docs,):
        raise ValueError(f"expected {dataset.num_docs} scores, got shape {scores.shape}")
    y = dataset.labels
    variant = spec.variant

    if variant is LossVariant.POINTWISE_MSE:
        resid = y - scores
        return 0.5 * float(resid @ resid), resid

    if variant is LossVariant.LISTWISE_MSE:
        sizes = dataset.query_sizes()
        per_doc_n = np.repeat(sizes, sizes).astype(np.float64)
        diff = y - scores
        return 0.5 * float(np.sum(diff * diff / per_doc_n)), diff / per_doc_n

    if targets is None:
        targets = prepare_targets(dataset, spec)
    jobs = [(r, scores[g], spec.epsilon) for r, g in zip(targets.ranks, targets.groups())]
    if executor is None or len(jobs) < 2:
        results = [_soft_rank_group(job) for job in jobs]
    else:
        results = list(executor.map(_soft_rank_group, jobs))
    loss = 0.0
    for part, _ in results:
        loss += part
    return loss, np.concatenate([grad for _, grad in results])


def compute_residuals(dataset, targets, scores, spec: LossSpec, executor: Executor | None = None) -> np.ndarray:
    return loss_and_residuals(dataset, targets, scores, spec, executor)[1]


def objective(dataset, targets, scores, spec: LossSpec) -> float:
    """Scalar whose negative gradient is :func:`compute_residuals`."""
    return loss_and_residuals(dataset, targets, scores, spec)[0]


def loss_normalizer(dataset: QueryDataset, spec: LossSpec) -> float:
    if spec.variant is LossVariant.POINTWISE_MSE:
        return float(dataset.num_docs)
    if spec.variant is LossVariant.POINTWISE_SOFTRANK_MSE:
        return 1.0
    return float(dataset.num_queries)


def training_loss(dataset, targets, scores, spec: LossSpec) -> float:
    """Objective normalized to a per-document (pointwise) or per-query mean.

    For the listwise soft-rank variant this is exactly the SoftRankMSE value.
    """
    return objective(dataset, targets, scores, spec) / loss_normalizer(dataset, spec)
