"""Empirical optimal-transport ranks.

The rank of observation ``a`` is the grid point it is matched to by the
assignment minimizing total squared Euclidean distance between the sample and
the reference grid. Permutations are 0-based: ``perm[a]`` is the grid index
assigned to observation ``a``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .grids import ReferenceGrid

__all__ = [
    "DimensionMismatch",
    "SizeMismatch",
    "RankAssignment",
    "solve_rank_map",
    "rank_points",
    "assignment_cost",
]


class DimensionMismatch(ValueError):
    """Observation dimension differs from the grid dimension."""


class SizeMismatch(ValueError):
    """Number of observations differs from the number of grid points."""


@dataclass(frozen=True)
class RankAssignment:
    perm: np.ndarray
    cost: float

    @property
    def n(self) -> int:
        return self.perm.shape[0]


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("observations must be a 1-d or 2-d array")
    return x


def assignment_cost(observations, grid: ReferenceGrid, perm) -> float:
    """Total squared distance ``sum_a |X_a - h_perm(a)|^2``."""
    x = _as_2d(observations)
    diff = x - grid.points[np.asarray(perm)]
    return float(np.sum(diff * diff))


def solve_rank_map(observations, grid: ReferenceGrid) -> RankAssignment:
    """Exact optimal assignment of observations to grid points.

    For ``d == 1`` the optimal coupling is monotone, so the solver sorts both
    sides and matches in order. Otherwise the full ``n x n`` squared-distance
    cost matrix is handed to an exact linear assignment solver. Duplicate
    observations are accepted, but the distribution-free property of the
    resulting ranks no longer holds for them.
    """
    x = _as_2d(observations)
    if x.shape[1] != grid.dim:
        raise DimensionMismatch(
            f"observations have dimension {x.shape[1]}, grid has {grid.dim}"
        )
    if x.shape[0] != grid.n:
        raise SizeMismatch(f"{x.shape[0]} observations for a grid of {grid.n} points")

    n = x.shape[0]
    if grid.dim == 1:
        obs_order = np.argsort(x[:, 0], kind="stable")
        grid_order = np.argsort(grid.points[:, 0], kind="stable")
        perm = np.empty(n, dtype=np.intp)
        perm[obs_order] = grid_order
    else:
        cost = cdist(x, grid.points, metric="sqeuclidean")
        rows, cols = linear_sum_assignment(cost)
        perm = np.empty(n, dtype=np.intp)
        perm[rows] = cols
    perm.setflags(write=False)
    return RankAssignment(perm, assignment_cost(x, grid, perm))


def rank_points(assignment: RankAssignment, grid: ReferenceGrid) -> np.ndarray:
    """Rank-transformed sample ``(h_perm(a))_a`` in observation order."""
    if assignment.n != grid.n:
        raise SizeMismatch("assignment and grid sizes differ")
    return grid.points[assignment.perm]
