"""Histogram regression trees grown leaf-wise on squared error.

Features are discretized once into per-feature bins. A split "after bin b"
of feature f sends rows with ``bin <= b`` (equivalently ``x <= edges[f][b]``)
to the left child, so trees can be evaluated on raw features.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# A split must improve squared error by more than this fraction of the node's
# residual sum of squares; below it the "gain" is rounding noise.
GAIN_RTOL = 1e-10


@dataclass(frozen=True)
class BinMapping:
    edges: tuple[np.ndarray, ...]

    @property
    def num_features(self) -> int:
        return len(self.edges)

    @property
    def num_bins(self) -> np.ndarray:
        return np.array([len(e) + 1 for e in self.edges], dtype=np.int64)

    def transform(self, features) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.num_features:
            raise ValueError(f"expected {self.num_features} feature columns, got shape {X.shape}")
        out = np.empty(X.shape, dtype=np.int32)
        for j, e in enumerate(self.edges):
            out[:, j] = np.searchsorted(e, X[:, j], side="left")
        return out


def _midpoints(values: np.ndarray) -> np.ndarray:
    return (values[:-1] + values[1:]) / 2.0


def _feature_edges(col: np.ndarray, max_bins: int | None) -> np.ndarray:
    uniq = np.unique(col)
    if max_bins is None or len(uniq) <= max_bins:
        return _midpoints(uniq)
    cuts = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
    # snap each quantile to the gap between the observed values around it
    upper = np.unique(np.searchsorted(uniq, cuts, side="right"))
    upper = upper[(upper > 0) & (upper < len(uniq))]
    return np.unique((uniq[upper - 1] + uniq[upper]) / 2.0)


def build_feature_bins(features, max_bins: int | None = 255) -> BinMapping:
    """Quantile bin edges per feature.

    Features with at most ``max_bins`` distinct values get one bin per value.
    ``max_bins=None`` always does that (exact greedy splitting).
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"need a non-empty 2-d feature matrix, got shape {X.shape}")
    if max_bins is not None and not 2 <= max_bins <= 65535:
        raise ValueError(f"max_bins must be in [2, 65535], got {max_bins}")
    return BinMapping(tuple(_feature_edges(X[:, j], max_bins) for j in range(X.shape[1])))


@dataclass(frozen=True)
class RegressionTree:
    """Flat binary tree; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.feature)

    @property
    def num_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def predict(self, features) -> np.ndarray:
        X = np.asarray(features, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while np.any(active):
            r, n = rows[active], node[active]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.value[node]

    @classmethod
    def leaf(cls, value: float = 0.0) -> "RegressionTree":
        return cls(
            feature=np.array([-1]),
            threshold=np.array([0.0]),
            left=np.array([-1]),
            right=np.array([-1]),
            value=np.array([float(value)]),
        )


@dataclass
class _Split:
    gain: float
    feature: int
    bin: int


class _HistogramSplitter:
    def __init__(self, binned: np.ndarray, residuals: np.ndarray, num_bins: np.ndarray, min_samples: int):
        self.binned = binned
        self.residuals = residuals
        self.num_bins = num_bins
        self.min_samples = min_samples
        self.width = int(num_bins.max())
        d = binned.shape[1]
        self.offsets = (np.arange(d) * self.width)[None, :]
        # a split after the last bin of a feature is not a split
        self.can_split = np.arange(self.width)[None, :] < (num_bins - 1)[:, None]

    def best_split(self, rows: np.ndarray) -> _Split | None:
        n = len(rows)
        if n < 2 * self.min_samples:
            return None
        r = self.residuals[rows]
        total = float(np.sum(r))
        sumsq = float(r @ r)
        if sumsq == 0.0:
            return None
        d = self.binned.shape[1]
        flat = (self.binned[rows] + self.offsets).ravel()
        size = d * self.width
        grad = np.bincount(flat, weights=np.repeat(r, d), minlength=size).reshape(d, self.width)
        count = np.bincount(flat, minlength=size).reshape(d, self.width)
        g_left = np.cumsum(grad, axis=1)
        n_left = np.cumsum(count, axis=1)
        n_right = n - n_left
        valid = self.can_split & (n_left >= self.min_samples) & (n_right >= self.min_samples)
        if not np.any(valid):
            return None
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = g_left**2 / n_left + (total - g_left) ** 2 / n_right - total**2 / n
        gain = np.where(valid, gain, -np.inf)
        best = int(np.argmax(gain))  # first max: lowest feature, then lowest bin
        f, b = divmod(best, self.width)
        g = float(gain[f, b])
        if not g > GAIN_RTOL * sumsq:
            return None
        return _Split(gain=g, feature=f, bin=b)


def grow_tree(
    binned: np.ndarray,
    residuals,
    bins: BinMapping,
    num_leaves: int = 255,
    min_samples_per_leaf: int = 1,
) -> tuple[RegressionTree, np.ndarray]:
    """Fit a tree to ``residuals`` and return it with its training-row outputs.

    Growth is best-first: the leaf whose best split has the largest gain is
    split next (ties go to the earliest created leaf) until ``num_leaves``
    leaves exist or no split improves the fit. Leaf values are mean residuals.
    """
    residuals = np.asarray(residuals, dtype=np.float64)
    if residuals.shape != (binned.shape[0],):
        raise ValueError(f"expected {binned.shape[0]} residuals, got shape {residuals.shape}")
    if num_leaves < 2:
        raise ValueError(f"num_leaves must be >= 2, got {num_leaves}")
    if min_samples_per_leaf < 1:
        raise ValueError(f"min_samples_per_leaf must be >= 1, got {min_samples_per_leaf}")

    splitter = _HistogramSplitter(binned, residuals, bins.num_bins, min_samples_per_leaf)
    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [0.0]
    leaf_rows = {0: np.arange(len(residuals))}
    candidates = {0: splitter.best_split(leaf_rows[0])}

    while len(leaf_rows) < num_leaves:
        ready = [(s.gain, -node) for node, s in candidates.items() if s is not None]
        if not ready:
            break
        node = -max(ready)[1]
        split = candidates.pop(node)
        rows = leaf_rows.pop(node)
        goes_left = binned[rows, split.feature] <= split.bin
        feature[node] = split.feature
        threshold[node] = float(bins.edges[split.feature][split.bin])
        for child_rows, links in ((rows[goes_left], left), (rows[~goes_left], right)):
            child = len(feature)
            links[node] = child
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            leaf_rows[child] = child_rows
            candidates[child] = splitter.best_split(child_rows)

    row_output = np.empty(len(residuals))
    for node, rows in leaf_rows.items():
        value[node] = float(np.sum(residuals[rows])) / len(rows) if len(rows) else 0.0
        row_output[rows] = value[node]

    tree = RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value),
    )
    return tree, row_output


def fit_tree(binned, residuals, bins: BinMapping, num_leaves: int = 255, min_samples_per_leaf: int = 1) -> RegressionTree:
    return grow_tree(binned, residuals, bins, num_leaves, min_samples_per_leaf)[0]
