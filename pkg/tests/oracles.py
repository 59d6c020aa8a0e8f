"""Independent reference implementations used as test oracles.

None of these call into the code under test beyond plain data containers.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np


# -- permutahedron projection by face enumeration ----------------------------

def _ordered_set_partitions(items):
    if not items:
        yield []
        return
    items = list(items)
    for size in range(1, len(items) + 1):
        for first in itertools.combinations(items, size):
            rest = [i for i in items if i not in first]
            for tail in _ordered_set_partitions(rest):
                yield [list(first)] + tail


@lru_cache(maxsize=None)
def _face_operators(n: int, rho: tuple):
    """Affine projector onto the affine hull of every face of P(rho).

    Faces correspond to ordered set partitions (S_1, ..., S_m): coordinates in
    S_1 share the largest |S_1| entries of rho, and so on.
    """
    rho_desc = np.sort(np.array(rho, dtype=np.float64))[::-1]
    mats, shifts = [], []
    for parts in _ordered_set_partitions(range(n)):
        M = np.zeros((n, n))
        c = np.zeros(n)
        off = 0
        for block in parts:
            k = len(block)
            for i in block:
                M[i, block] = 1.0 / k
                c[i] = rho_desc[off:off + k].mean()
            off += k
        mats.append(M)
        shifts.append(c)
    subsets = [s for r in range(1, n + 1) for s in itertools.combinations(range(n), r)]
    A = np.zeros((len(subsets), n))
    b = np.zeros(len(subsets))
    for row, s in enumerate(subsets):
        A[row, list(s)] = 1.0
        b[row] = rho_desc[: len(s)].sum()
    return np.array(mats), np.array(shifts), A, b


def brute_force_projection(z, rho=None) -> np.ndarray:
    """Euclidean projection of ``z`` onto the permutahedron of ``rho`` (n <= 7).

    Projects onto the affine hull of each face, keeps the candidates that lie
    in the polytope (subset-sum inequalities), returns the closest one.
    """
    z = np.asarray(z, dtype=np.float64)
    n = len(z)
    if rho is None:
        rho = np.arange(n, 0, -1, dtype=np.float64)
    mats, shifts, A, b = _face_operators(n, tuple(np.asarray(rho, dtype=np.float64).tolist()))
    cand = z[None, :] - mats @ z + shifts
    scale = max(1.0, float(np.max(np.abs(b))))
    feasible = np.all(cand @ A.T <= b + 1e-9 * scale, axis=1)
    feasible &= np.abs(cand.sum(axis=1) - b[-1]) <= 1e-9 * scale
    dist = np.where(feasible, np.sum((cand - z) ** 2, axis=1), np.inf)
    return cand[int(np.argmin(dist))]


def brute_force_isotonic(u):
    """Nonincreasing isotonic regression by enumerating contiguous pools.

    Returns (v, block_sizes) of the best feasible pooling.
    """
    u = np.asarray(u, dtype=np.float64)
    n = len(u)
    best = None
    for cuts in itertools.product([False, True], repeat=n - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        means = [u[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])]
        if any(m1 < m2 for m1, m2 in zip(means[:-1], means[1:])):
            continue
        v = np.concatenate([[m] * (b - a) for m, a, b in zip(means, bounds[:-1], bounds[1:])])
        cost = float(np.sum((v - u) ** 2))
        if best is None or cost < best[0]:
            best = (cost, v, [b - a for a, b in zip(bounds[:-1], bounds[1:])])
    return best[1], best[2]


def hard_descending_ranks(theta) -> np.ndarray:
    theta = list(theta)
    order = sorted(range(len(theta)), key=lambda i: (-theta[i], i))
    ranks = np.empty(len(theta))
    for pos, i in enumerate(order, start=1):
        ranks[i] = pos
    return ranks


# -- finite differences ------------------------------------------------------

def central_diff_jacobian(f, x, h=1e-4) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def central_diff_grad(f, x, h=1e-4) -> np.ndarray:
    return central_diff_jacobian(lambda v: np.array(f(v)), x, h)


# -- ranking metrics from first principles -----------------------------------

def _ranked(labels, scores):
    order = sorted(range(len(labels)), key=lambda i: (-scores[i], i))
    return [labels[i] for i in order]


def reference_ndcg(labels, scores, k):
    labels = [float(x) for x in labels]
    scores = [float(x) for x in scores]
    ranked = _ranked(labels, scores)
    ideal = sorted(labels, reverse=True)

    def dcg(ls):
        total = 0.0
        for pos, lab in enumerate(ls[:k], start=1):
            total += (2.0 ** lab - 1.0) / math.log2(pos + 1)
        return total

    idcg = dcg(ideal)
    return 0.0 if idcg == 0 else dcg(ranked) / idcg


def reference_map(labels, scores, k):
    rel = [1 if float(x) >= 1 else 0 for x in labels]
    total_rel = sum(rel)
    if total_rel == 0:
        return 0.0
    ranked = _ranked(rel, [float(s) for s in scores])
    hits, acc = 0, 0.0
    for pos, r in enumerate(ranked[:k], start=1):
        if r:
            hits += 1
            acc += hits / pos
    return acc / min(total_rel, k)


# -- exact-greedy regression trees -------------------------------------------

class RefNode:
    def __init__(self, rows):
        self.rows = rows
        self.feature = None
        self.threshold = None
        self.left = None
        self.right = None
        self.value = None
        self.split = None


def _ref_best_split(X, r, rows, candidates, min_leaf):
    n = len(rows)
    rr = r[rows]
    total = rr.sum()
    sumsq = float(rr @ rr)
    best = None
    for f in range(X.shape[1]):
        xs = X[rows, f]
        for thr in candidates[f]:
            mask = xs <= thr
            nl = int(mask.sum())
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            gl = rr[mask].sum()
            gain = gl * gl / nl + (total - gl) ** 2 / nr - total * total / n
            if best is None or gain > best[0]:
                best = (gain, f, thr)
    if best is None or not best[0] > 1e-10 * sumsq:
        return None
    return best


def reference_tree(X, r, num_leaves, min_leaf=1):
    """Best-first exact greedy tree over midpoints of each column's values."""
    X = np.asarray(X, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    candidates = []
    for f in range(X.shape[1]):
        u = np.unique(X[:, f])
        candidates.append((u[:-1] + u[1:]) / 2.0)
    root = RefNode(np.arange(len(r)))
    order = [root]  # creation order, for tie-breaking
    root.split = _ref_best_split(X, r, root.rows, candidates, min_leaf)
    leaves = [root]
    while len(leaves) < num_leaves:
        splittable = [nd for nd in leaves if nd.split is not None]
        if not splittable:
            break
        node = max(splittable, key=lambda nd: (nd.split[0], -order.index(nd)))
        _, f, thr = node.split
        node.feature, node.threshold = f, thr
        mask = X[node.rows, f] <= thr
        node.left, node.right = RefNode(node.rows[mask]), RefNode(node.rows[~mask])
        leaves.remove(node)
        for child in (node.left, node.right):
            order.append(child)
            child.split = _ref_best_split(X, r, child.rows, candidates, min_leaf)
            leaves.append(child)
    for leaf in leaves:
        leaf.value = float(np.mean(r[leaf.rows]))
    return root


def reference_tree_predict(node, X):
    out = np.empty(len(X))
    for i, x in enumerate(np.asarray(X, dtype=np.float64)):
        nd = node
        while nd.feature is not None:
            nd = nd.left if x[nd.feature] <= nd.threshold else nd.right
        out[i] = nd.value
    return out


def reference_gbrt(X, y, iterations, learning_rate, num_leaves):
    f = np.zeros(len(y))
    trees = []
    for _ in range(iterations):
        tree = reference_tree(X, y - f, num_leaves)
        trees.append(tree)
        f = f + learning_rate * reference_tree_predict(tree, X)
    return trees


def same_tree(ref: RefNode, tree, node: int = 0, value_tol: float = 1e-9) -> bool:
    """Structural comparison of a reference tree with a flat RegressionTree."""
    if ref.feature is None:
        return bool(tree.feature[node] < 0) and abs(ref.value - tree.value[node]) <= value_tol * max(1.0, abs(ref.value))
    if tree.feature[node] != ref.feature or tree.threshold[node] != ref.threshold:
        return False
    return same_tree(ref.left, tree, int(tree.left[node]), value_tol) and same_tree(
        ref.right, tree, int(tree.right[node]), value_tol
    )
