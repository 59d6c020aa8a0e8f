"""Soft ranks as a Euclidean projection onto the permutahedron.

The soft rank of a score vector ``theta`` is the projection of ``-theta / eps``
onto the convex hull of all permutations of ``(n, n-1, ..., 1)``. The
projection reduces to a sort followed by isotonic regression (pool adjacent
violators), so both the forward value and the Jacobian-vector product cost
O(n log n) and O(n) respectively.

Convention: the largest score receives the soft rank closest to 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PavBlocks:
    """Block partition of an isotonic solution, in sorted coordinates.

    Block ``b`` covers ``[boundaries[b], boundaries[b + 1])``.
    """

    boundaries: np.ndarray
    means: np.ndarray

    def __len__(self) -> int:
        return len(self.means)

    def ranges(self):
        for start, stop in zip(self.boundaries[:-1], self.boundaries[1:]):
            yield int(start), int(stop)

    def sizes(self) -> np.ndarray:
        return np.diff(self.boundaries)


@dataclass(frozen=True)
class SoftRankResult:
    soft_ranks: np.ndarray
    sort_perm: np.ndarray
    blocks: PavBlocks
    epsilon: float

    def __len__(self) -> int:
        return len(self.soft_ranks)


def _as_finite_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def isotonic_pav(u) -> tuple[np.ndarray, PavBlocks]:
    """Nonincreasing isotonic regression of ``u`` under squared loss.

    Adjacent blocks are pooled only on a strict violation
    (``mean_prev < mean_next``), so equal neighbouring means stay separate.
    """
    u = _as_finite_vector(u, "u")
    n = len(u)
    # stack of blocks: start index, sum, count
    starts: list[int] = []
    sums: list[float] = []
    counts: list[int] = []
    for i, value in enumerate(u.tolist()):
        starts.append(i)
        sums.append(value)
        counts.append(1)
        while len(sums) > 1 and sums[-2] / counts[-2] < sums[-1] / counts[-1]:
            s, c = sums.pop(), counts.pop()
            starts.pop()
            sums[-1] += s
            counts[-1] += c
    means = np.array([s / c for s, c in zip(sums, counts)])
    boundaries = np.array(starts + [n], dtype=np.intp)
    v = np.repeat(means, counts)
    return v, PavBlocks(boundaries=boundaries, means=means)


def permutahedron_project(z, rho=None) -> tuple[np.ndarray, np.ndarray, PavBlocks]:
    """Project ``z`` onto the permutahedron generated by ``rho``.

    ``rho`` must be strictly decreasing; it defaults to ``(n, ..., 1)``.
    Returns the projection, the descending sort permutation of ``z`` and the
    PAV blocks over the sorted coordinates.
    """
    z = _as_finite_vector(z, "z")
    n = len(z)
    if rho is None:
        rho = np.arange(n, 0, -1, dtype=np.float64)
    else:
        rho = _as_finite_vector(rho, "rho")
        if len(rho) != n:
            raise ValueError(f"rho has length {len(rho)}, expected {n}")
        if n > 1 and not np.all(np.diff(rho) < 0):
            raise ValueError("rho must be strictly decreasing")

    perm = np.argsort(-z, kind="stable")
    s = z[perm]
    u = s - rho
    v, blocks = isotonic_pav(u)

    # Singleton blocks sit on a vertex coordinate: take rho there exactly
    # instead of s - (s - rho), which can be off by an ulp.
    y_sorted = s - v
    singleton = np.repeat(blocks.sizes() == 1, blocks.sizes())
    y_sorted[singleton] = rho[singleton]

    y = np.empty(n)
    y[perm] = y_sorted
    return y, perm, blocks


def soft_rank(theta, epsilon: float) -> SoftRankResult:
    """Soft descending ranks of ``theta`` with regularization strength ``epsilon``.

    Small ``epsilon`` approaches hard ranks; large ``epsilon`` pulls every
    rank toward the centroid ``(n + 1) / 2``.
    """
    if not (epsilon > 0 and np.isfinite(epsilon)):
        raise ValueError(f"epsilon must be a positive finite number, got {epsilon!r}")
    theta = _as_finite_vector(theta, "theta")
    ranks, perm, blocks = permutahedron_project(-theta / epsilon)
    return SoftRankResult(soft_ranks=ranks, sort_perm=perm, blocks=blocks, epsilon=float(epsilon))


def _block_average(values: np.ndarray, blocks: PavBlocks) -> np.ndarray:
    sizes = blocks.sizes()
    sums = np.add.reduceat(values, blocks.boundaries[:-1])
    return np.repeat(sums / sizes, sizes)


def soft_rank_vjp(result: SoftRankResult, g, epsilon: float | None = None) -> np.ndarray:
    """Apply the transposed Jacobian of ``soft_rank`` (w.r.t. ``theta``) to ``g``.

    The Jacobian is ``-(I - P^T B P) / eps`` with ``P`` the sort permutation
    and ``B`` the PAV block-averaging matrix. It is symmetric, so this is
    also the JVP.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != result.soft_ranks.shape:
        raise ValueError(f"g has shape {g.shape}, expected {result.soft_ranks.shape}")
    eps = result.epsilon if epsilon is None else float(epsilon)
    if not eps > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    perm = result.sort_perm
    averaged = np.empty_like(g)
    averaged[perm] = _block_average(g[perm], result.blocks)
    return -(g - averaged) / eps
