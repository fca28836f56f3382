"""Optimal one-to-one assignment (Hungarian algorithm).

Augmenting-path formulation with row/column potentials, O(n^2 m). Rows
and columns are scanned in ascending order, so equal-total optima resolve
deterministically (lowest row, then lowest column, wins the scan).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import QueryscopeError


def solve_assignment(similarity: np.ndarray) -> list[tuple[int, int]]:
    """Maximum-total-similarity matching of size min(m, n).

    Accepts any finite m x n matrix and returns (row, col) pairs sorted by
    row. An empty matrix yields an empty matching.
    """
    matrix = np.asarray(similarity, dtype=np.float64)
    if matrix.size == 0:
        return []
    if matrix.ndim != 2:
        raise QueryscopeError(f"similarity matrix must be 2-D, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise QueryscopeError("similarity matrix contains non-finite entries")

    transposed = matrix.shape[0] > matrix.shape[1]
    cost = -(matrix.T if transposed else matrix)  # maximize -> minimize
    pairs = _min_cost_assignment(cost)
    if transposed:
        pairs = [(c, r) for r, c in pairs]
    return sorted(pairs)


def _min_cost_assignment(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost matching for an n x m cost matrix with n <= m."""
    n, m = cost.shape
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    match = [0] * (m + 1)  # column j (1-based) -> assigned row (1-based), 0 = free
    way = [0] * (m + 1)

    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = [math.inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = math.inf
            j1 = -1
            row = cost[i0 - 1]
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1

    return [(match[j] - 1, j - 1) for j in range(1, m + 1) if match[j] != 0]
