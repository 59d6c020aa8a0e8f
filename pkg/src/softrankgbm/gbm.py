"""Gradient boosting over regression trees for the ranking losses.

Every iteration soft-ranks the current scores of each list, turns the loss
gradient into per-document residuals, fits one tree to all documents pooled
across queries and adds ``learning_rate * tree`` to the scores.
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import IO

import numpy as np

from .data import QueryDataset
from .loss import LossSpec, LossVariant, loss_and_residuals, loss_normalizer, prepare_targets
from .metrics import METRICS, evaluate
from .tree import RegressionTree, build_feature_bins, grow_tree

logger = logging.getLogger(__name__)

MODEL_MAGIC = "softrankgbm-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 1000
    learning_rate: float = 0.1
    num_leaves: int = 255
    epsilon: float = 0.01
    max_bins: int = 255
    min_samples_per_leaf: int = 1
    loss: str = LossVariant.LISTWISE_SOFTRANK_MSE.value
    eval_at: tuple[int, ...] = (1, 10)
    eval_every: int = 1
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "loss", LossVariant(self.loss).value)
        object.__setattr__(self, "eval_at", tuple(int(k) for k in self.eval_at))
        problems = []
        if self.iterations < 1:
            problems.append(f"iterations must be >= 1 (got {self.iterations})")
        if not (self.learning_rate > 0 and np.isfinite(self.learning_rate)):
            problems.append(f"learning_rate must be > 0 (got {self.learning_rate})")
        if self.num_leaves < 2:
            problems.append(f"num_leaves must be >= 2 (got {self.num_leaves})")
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            problems.append(f"epsilon must be > 0 (got {self.epsilon})")
        if not 2 <= self.max_bins <= 65535:
            problems.append(f"max_bins must be in [2, 65535] (got {self.max_bins})")
        if self.min_samples_per_leaf < 1:
            problems.append(f"min_samples_per_leaf must be >= 1 (got {self.min_samples_per_leaf})")
        if not self.eval_at or any(k < 1 for k in self.eval_at):
            problems.append(f"eval_at levels must be >= 1 (got {self.eval_at})")
        if self.eval_every < 1:
            problems.append(f"eval_every must be >= 1 (got {self.eval_every})")
        if self.threads < 1:
            problems.append(f"threads must be >= 1 (got {self.threads})")
        if problems:
            raise ValueError("invalid training config: " + "; ".join(problems))

    @property
    def loss_spec(self) -> LossSpec:
        return LossSpec(LossVariant(self.loss), self.epsilon)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eval_at"] = list(self.eval_at)
        return d


@dataclass
class TreeEnsemble:
    """``predict(x) = base_score + sum_t learning_rate * tree_t(x)``."""

    num_features: int
    learning_rate: float = 0.1
    base_score: float = 0.0
    trees: list[RegressionTree] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def predict(self, features) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.num_features:
            got = X.shape[1] if X.ndim == 2 else X.shape
            raise ValueError(f"feature dimension mismatch: model expects {self.num_features}, data has {got}")
        scores = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            scores += self.learning_rate * tree.predict(X)
        return scores


def predict(ensemble: TreeEnsemble, features) -> np.ndarray:
    return ensemble.predict(features)


@dataclass
class LearningCurve:
    metric_keys: tuple[tuple[str, int], ...]
    iterations: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    valid: list[dict] = field(default_factory=list)

    def append(self, iteration: int, train_loss: float, valid_metrics: dict | None) -> None:
        self.iterations.append(iteration)
        self.train_loss.append(train_loss)
        self.valid.append(valid_metrics or {})

    def __len__(self) -> int:
        return len(self.iterations)

    def header(self) -> list[str]:
        return ["iteration", "train_loss"] + [f"valid_{m}@{k}" for m, k in self.metric_keys]

    def write(self, fh: IO[str]) -> None:
        fh.write("\t".join(self.header()) + "\n")
        for it, loss, vals in zip(self.iterations, self.train_loss, self.valid):
            cells = [str(it), repr(loss)]
            cells += [repr(vals[key]) if key in vals else "" for key in self.metric_keys]
            fh.write("\t".join(cells) + "\n")


def train(
    dataset: QueryDataset,
    config: TrainConfig | None = None,
    valid: QueryDataset | None = None,
    callback=None,
) -> tuple[TreeEnsemble, LearningCurve]:
    """Boost ``config.iterations`` trees on ``dataset`` starting from f = 0.

    Training scores are updated in place from each tree's leaf assignment, so
    the full ensemble is never re-evaluated on the training set. ``callback``
    (if given) is called as ``callback(iteration, train_scores, ensemble)``.
    """
    config = config or TrainConfig()
    if dataset.num_docs == 0:
        raise ValueError("training dataset is empty")
    d = dataset.num_features
    if valid is not None and valid.num_features != d:
        raise ValueError(f"validation set has {valid.num_features} features, training set {d}")

    spec = config.loss_spec
    targets = prepare_targets(dataset, spec)
    norm = loss_normalizer(dataset, spec)
    bins = build_feature_bins(dataset.features, config.max_bins)
    binned = bins.transform(dataset.features)

    ensemble = TreeEnsemble(num_features=d, learning_rate=config.learning_rate, config=config.to_dict())
    metric_keys = tuple((m, k) for m in METRICS for k in config.eval_at) if valid is not None else ()
    curve = LearningCurve(metric_keys=metric_keys)
    scores = np.zeros(dataset.num_docs)
    valid_scores = np.zeros(valid.num_docs) if valid is not None else None

    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        _, residuals = loss_and_residuals(dataset, targets, scores, spec, executor)
        for t in range(1, config.iterations + 1):
            tree, row_output = grow_tree(
                binned, residuals, bins, config.num_leaves, config.min_samples_per_leaf
            )
            ensemble.trees.append(tree)
            scores += config.learning_rate * row_output
            loss, residuals = loss_and_residuals(dataset, targets, scores, spec, executor)
            if valid is not None:
                valid_scores += config.learning_rate * tree.predict(valid.features)
            if t % config.eval_every == 0 or t == config.iterations:
                metrics = None
                if valid is not None:
                    report = evaluate(valid, valid_scores, config.eval_at)
                    metrics = report.means
                curve.append(t, loss / norm, metrics)
                logger.debug("iteration %d train_loss %.6g %s", t, loss / norm, metrics or "")
            if callback is not None:
                callback(t, scores, ensemble)
    finally:
        if executor is not None:
            executor.shutdown()
    return ensemble, curve


def _dump_tree(tree: RegressionTree, fh: IO[str], index: int) -> None:
    fh.write(f"tree {index} nodes {tree.num_nodes}\n")
    for i in range(tree.num_nodes):
        fh.write(
            f"{i} {int(tree.feature[i])} {float(tree.threshold[i])!r} "
            f"{int(tree.left[i])} {int(tree.right[i])} {float(tree.value[i])!r}\n"
        )


def save_model(ensemble: TreeEnsemble, dest: str | os.PathLike | IO[str]) -> None:
    """Write the versioned text model format.

    Floats are written with ``repr``, so loading reproduces them exactly.
    """
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            save_model(ensemble, fh)
        return
    dest.write(f"{MODEL_MAGIC} {MODEL_VERSION}\n")
    dest.write(f"config {json.dumps(ensemble.config, sort_keys=True)}\n")
    dest.write(f"num_features {ensemble.num_features}\n")
    dest.write(f"learning_rate {float(ensemble.learning_rate)!r}\n")
    dest.write(f"base_score {float(ensemble.base_score)!r}\n")
    dest.write(f"num_trees {len(ensemble.trees)}\n")
    for i, tree in enumerate(ensemble.trees):
        _dump_tree(tree, dest, i)
    dest.write("end\n")


class ModelFormatError(ValueError):
    pass


def load_model(source: str | os.PathLike | IO[str]) -> TreeEnsemble:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return load_model(fh)
    lines = iter(source.read().splitlines())

    def expect(key: str) -> str:
        line = next(lines, None)
        if line is None or not line.startswith(key + " "):
            raise ModelFormatError(f"expected '{key} ...', got {line!r}")
        return line[len(key) + 1:]

    version = expect(MODEL_MAGIC)
    if int(version) != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    config = json.loads(expect("config"))
    num_features = int(expect("num_features"))
    learning_rate = float(expect("learning_rate"))
    base_score = float(expect("base_score"))
    num_trees = int(expect("num_trees"))
    trees = []
    for t in range(num_trees):
        idx, _, count = expect("tree").partition(" nodes ")
        if int(idx) != t:
            raise ModelFormatError(f"tree {idx} out of order, expected {t}")
        rows = [next(lines, "").split() for _ in range(int(count))]
        if any(len(r) != 6 for r in rows):
            raise ModelFormatError(f"truncated or malformed node list in tree {t}")
        trees.append(
            RegressionTree(
                feature=np.array([int(r[1]) for r in rows], dtype=np.int64),
                threshold=np.array([float(r[2]) for r in rows]),
                left=np.array([int(r[3]) for r in rows], dtype=np.int64),
                right=np.array([int(r[4]) for r in rows], dtype=np.int64),
                value=np.array([float(r[5]) for r in rows]),
            )
        )
    if next(lines, None) != "end":
        raise ModelFormatError("missing 'end' marker")
    return TreeEnsemble(
        num_features=num_features,
        learning_rate=learning_rate,
        base_score=base_score,
        trees=trees,
        config=config,
    )
