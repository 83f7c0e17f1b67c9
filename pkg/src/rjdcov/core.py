"""Rank distance covariances of blocked samples.

Every block is mapped to its optimal-transport ranks on a reference grid.
Because the ranks of block ``i`` are a permutation ``pi_i`` of the grid, the
double-centered rank distance matrix of the block is the grid's own centered
matrix with rows and columns permuted. All statistics are computed from these
permuted grid matrices, so the observed statistic and the resampled null
draws go through the same arithmetic.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, TextIO

import numpy as np
from scipy.spatial.distance import pdist, squareform

from ._kernels import esym_weighted_sum
from .grids import ReferenceGrid, default_grids
from .ranks import SizeMismatch, solve_rank_map

__all__ = [
    "BlockedSample",
    "WeightScheme",
    "SubsetStatistic",
    "RJdCovResult",
    "centered_matrix",
    "grid_matrix",
    "rdcov_subset",
    "subsets",
    "sample_ranks",
    "tied_rank_points",
    "observed_matrices",
    "observed_statistic",
    "rjdcov",
    "rjdcov_compact",
    "theta_on_grids",
    "decomposition_to_csv",
    "DEFAULT_MAX_BLOCKS",
]

DEFAULT_MAX_BLOCKS = 12


@dataclass(frozen=True)
class BlockedSample:
    """``n`` observations of ``r >= 2`` vector-valued blocks.

    ``blocks[i]`` has shape ``(n, d_i)``; 1-d inputs are treated as a single
    column.
    """

    blocks: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        blocks = []
        for b in self.blocks:
            b = np.asarray(b, dtype=float)
            if b.ndim == 1:
                b = b[:, None]
            if b.ndim != 2 or b.shape[1] < 1:
                raise ValueError("each block must be an (n, d_i) array with d_i >= 1")
            blocks.append(b)
        if len(blocks) < 2:
            raise ValueError("a blocked sample needs at least two blocks")
        n = blocks[0].shape[0]
        if any(b.shape[0] != n for b in blocks):
            raise ValueError("all blocks must have the same number of rows")
        labels = tuple(self.labels) or tuple(f"X{i + 1}" for i in range(len(blocks)))
        if len(labels) != len(blocks):
            raise ValueError("one label per block is required")
        object.__setattr__(self, "blocks", tuple(blocks))
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_array(cls, data, block_dims: Sequence[int], labels=()) -> "BlockedSample":
        """Split the columns of ``data`` into consecutive blocks."""
        data = np.asarray(data, dtype=float)
        if sum(block_dims) != data.shape[1]:
            raise ValueError("block dimensions must add up to the number of columns")
        edges = np.cumsum([0, *block_dims])
        return cls(
            tuple(data[:, lo:hi] for lo, hi in zip(edges[:-1], edges[1:])), labels
        )

    @property
    def n(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def r(self) -> int:
        return len(self.blocks)

    @property
    def block_dims(self) -> tuple:
        return tuple(b.shape[1] for b in self.blocks)

    def select(self, subset: Sequence[int]) -> "BlockedSample":
        """The sample restricted to the given block indices (0-based)."""
        subset = tuple(subset)
        if any(i < 0 or i >= self.r for i in subset):
            raise IndexError(f"subset {subset} out of range for {self.r} blocks")
        return BlockedSample(
            tuple(self.blocks[i] for i in subset), tuple(self.labels[i] for i in subset)
        )

    def reorder(self, order) -> "BlockedSample":
        """Apply one common row permutation to every block."""
        order = np.asarray(order)
        return BlockedSample(tuple(b[order] for b in self.blocks), self.labels)

    def to_array(self) -> np.ndarray:
        return np.hstack(self.blocks)


@dataclass(frozen=True)
class WeightScheme:
    """Nonnegative weights ``C_s`` on subsets of size ``s = 2..r``.

    Use :meth:`geometric` for ``C_s = c**(r - s)`` or :meth:`explicit` for a
    fixed vector. ``geometric(0)`` keeps only the full set ``{1..r}``.
    """

    c: float | None = None
    weights: tuple | None = None

    def __post_init__(self):
        if (self.c is None) == (self.weights is None):
            raise ValueError("give exactly one of c or weights")
        if self.c is not None and self.c < 0:
            raise ValueError("c must be nonnegative")
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if any(v < 0 for v in w):
                raise ValueError("weights must be nonnegative")
            object.__setattr__(self, "weights", w)

    @classmethod
    def geometric(cls, c: float = 1.0) -> "WeightScheme":
        return cls(c=float(c))

    @classmethod
    def explicit(cls, weights: Sequence[float]) -> "WeightScheme":
        return cls(weights=tuple(weights))

    @classmethod
    def pairwise(cls, r: int) -> "WeightScheme":
        """Weight 1 on pairs, 0 on larger subsets."""
        return cls(weights=(1.0,) + (0.0,) * (r - 2))

    def coefficients(self, r: int) -> np.ndarray:
        """Array ``coef`` of length ``r + 1`` with ``coef[s] = C_s``."""
        coef = np.zeros(r + 1)
        if self.c is not None:
            for s in range(2, r + 1):
                coef[s] = 1.0 if s == r else self.c ** (r - s)
        else:
            if len(self.weights) != r - 1:
                raise ValueError(
                    f"explicit weights must cover s = 2..{r} ({r - 1} values), "
                    f"got {len(self.weights)}"
                )
            coef[2:] = self.weights
        return coef

    def describe(self) -> dict:
        if self.c is not None:
            return {"geometric": self.c}
        return {"explicit": list(self.weights)}


@dataclass(frozen=True)
class SubsetStatistic:
    subset: tuple
    value: float

    @property
    def size(self) -> int:
        return len(self.subset)


class RJdCovResult(NamedTuple):
    total: float
    decomposition: list


def centered_matrix(rank_points) -> np.ndarray:
    """Double-centered Euclidean distance matrix of the rank points.

    ``E[a, b] = rowmean_a + colmean_b - |x_a - x_b| - grandmean``; every row
    and column of the result sums to zero.
    """
    x = np.asarray(rank_points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two points")
    dist = squareform(pdist(x))
    m = dist.mean(axis=1)
    g = m.mean()
    return m[:, None] + m[None, :] - dist - g


def grid_matrix(grid: ReferenceGrid) -> np.ndarray:
    """Centered distance matrix of the grid, computed once per grid object."""
    mat = grid.__dict__.get("_centered")
    if mat is None:
        mat = centered_matrix(grid.points)
        mat.setflags(write=False)
        object.__setattr__(grid, "_centered", mat)
    return mat


def subsets(r: int, max_blocks: int = DEFAULT_MAX_BLOCKS) -> list:
    """All ``S`` with ``|S| >= 2``, by size then lexicographically (0-based)."""
    if r > max_blocks:
        raise ValueError(
            f"r={r} blocks gives {2 ** r - r - 1} subsets; raise max_blocks to allow it"
        )
    return [s for k in range(2, r + 1) for s in itertools.combinations(range(r), k)]


def rdcov_subset(matrices: Sequence[np.ndarray], subset: Sequence[int]) -> SubsetStatistic:
    """``(1/n^2) sum_{a,b} prod_{i in S} E_i(a, b)``. No clamping at zero."""
    subset = tuple(subset)
    if len(subset) < 2:
        raise ValueError("subsets must contain at least two blocks")
    n = matrices[subset[0]].shape[0]
    if any(matrices[i].shape != (n, n) for i in subset):
        raise SizeMismatch("centered matrices must share n")
    prod = np.array(matrices[subset[0]], dtype=float)
    for i in subset[1:]:
        prod = prod * matrices[i]
    return SubsetStatistic(subset, float(np.sum(prod)) / (n * n))


def _resolve_grids(n: int, dims: Sequence[int], grids) -> tuple:
    if grids is None:
        return default_grids(n, dims)
    grids = tuple(grids)
    if len(grids) != len(dims):
        raise ValueError("one grid per block is required")
    for g, d in zip(grids, dims):
        if g.n != n:
            raise SizeMismatch(f"grid has {g.n} points, sample has {n} rows")
        if g.dim != d:
            raise ValueError(f"grid dimension {g.dim} does not match block dimension {d}")
    return grids


def sample_ranks(sample: BlockedSample, grids=None) -> tuple:
    """Rank permutation of each block (``perm[a]`` = grid index of row ``a``)."""
    grids = _resolve_grids(sample.n, sample.block_dims, grids)
    return tuple(solve_rank_map(b, g).perm for b, g in zip(sample.blocks, grids))


def tied_rank_points(block: np.ndarray, grid: ReferenceGrid, perm) -> np.ndarray:
    """Rank points with every group of identical rows given its mean rank.

    Without duplicates this is ``grid.points[perm]``. A constant block maps to
    a single point, so its centered matrix vanishes.
    """
    pts = grid.points[np.asarray(perm)]
    _, inverse, counts = np.unique(block, axis=0, return_inverse=True, return_counts=True)
    if counts.size == block.shape[0]:
        return pts
    inverse = inverse.ravel()
    sums = np.zeros((counts.size, pts.shape[1]))
    np.add.at(sums, inverse, pts)
    return (sums / counts[:, None])[inverse]


def _has_ties(block: np.ndarray) -> bool:
    return np.unique(block, axis=0).shape[0] < block.shape[0]


def observed_matrices(sample: BlockedSample, grids, perms) -> list:
    """Per-block centered rank matrices of the sample."""
    out = []
    for b, g, p in zip(sample.blocks, grids, perms):
        if _has_ties(b):
            out.append(centered_matrix(tied_rank_points(b, g, p)))
        else:
            out.append(grid_matrix(g)[np.ix_(p, p)])
    return out


def observed_statistic(sample: BlockedSample, grids, perms, weights: WeightScheme) -> float:
    """Weighted statistic of the sample.

    Tie-free samples go through :func:`theta_on_grids`, the same arithmetic
    as the null draws. Samples with duplicated rows use the mid-rank matrices.
    """
    coef = weights.coefficients(sample.r)
    if not any(_has_ties(b) for b in sample.blocks):
        return theta_on_grids(perms, grids, weights)
    mats = np.ascontiguousarray(np.stack(observed_matrices(sample, grids, perms)))
    ident = np.tile(np.arange(sample.n, dtype=np.int64), (sample.r, 1))
    return esym_weighted_sum(mats, ident, coef) / (sample.n * sample.n)


def _canonical_rhos(perms) -> np.ndarray:
    # Relabel rows by the inverse of the first permutation; the double sum is
    # unchanged and becomes exactly invariant to a shared relabeling.
    perms = [np.asarray(p, dtype=np.int64) for p in perms]
    inv0 = np.argsort(perms[0])
    return np.ascontiguousarray(np.stack([p[inv0] for p in perms]))


def _stacked(grids) -> np.ndarray:
    key = tuple(id(g) for g in grids)
    cached = _STACK_CACHE.get(key)
    if cached is not None and cached[0] == tuple(grids):
        return cached[1]
    mats = np.ascontiguousarray(np.stack([grid_matrix(g) for g in grids]))
    if len(_STACK_CACHE) > 32:
        _STACK_CACHE.clear()
    _STACK_CACHE[key] = (tuple(grids), mats)
    return mats


_STACK_CACHE: dict = {}


def _weighted_sum(mats: np.ndarray, perms, coef: np.ndarray) -> float:
    n = mats.shape[1]
    return esym_weighted_sum(mats, _canonical_rhos(perms), coef) / (n * n)


def theta_on_grids(perms, grids: Sequence[ReferenceGrid], weights: WeightScheme) -> float:
    """Weighted statistic with rank points replaced by permuted grid points.

    Block ``i`` takes the points ``h_{perms[i][a]}``; equivalently its centered
    matrix is ``E_i[perms[i]][:, perms[i]]``.
    """
    grids = tuple(grids)
    if len(perms) != len(grids):
        raise ValueError("one permutation per grid is required")
    n = grids[0].n
    for p, g in zip(perms, grids):
        if len(p) != n or g.n != n:
            raise SizeMismatch("permutations and grids must share n")
    return _weighted_sum(_stacked(grids), perms, weights.coefficients(len(grids)))


def rjdcov(
    sample: BlockedSample,
    grids=None,
    weights: WeightScheme | None = None,
    max_blocks: int = DEFAULT_MAX_BLOCKS,
) -> RJdCovResult:
    """Rank joint distance covariance with its per-subset decomposition.

    Returns ``(total, decomposition)`` where ``total = sum_s C_s sum_{|S|=s}
    RdCov_n^2(X_S)`` and ``decomposition`` lists every ``S`` with ``|S| >= 2``.
    """
    weights = WeightScheme.geometric(1.0) if weights is None else weights
    grids = _resolve_grids(sample.n, sample.block_dims, grids)
    perms = sample_ranks(sample, grids)
    mats = observed_matrices(sample, grids, perms)
    decomposition = [rdcov_subset(mats, s) for s in subsets(sample.r, max_blocks)]
    total = observed_statistic(sample, grids, perms, weights)
    return RJdCovResult(total, decomposition)


def rjdcov_compact(sample: BlockedSample, grids=None, c: float = 1.0) -> float:
    """Product form ``(1/n^2) sum_{a,b} prod_i (E_i(a,b) + c) - c^r``.

    Equals :func:`rjdcov` with ``WeightScheme.geometric(c)``: expanding the
    product, terms with fewer than two factors vanish because every row of
    ``E_i`` sums to zero.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    grids = _resolve_grids(sample.n, sample.block_dims, grids)
    perms = sample_ranks(sample, grids)
    prod = np.ones((sample.n, sample.n))
    for b, g, p in zip(sample.blocks, grids, perms):
        prod *= centered_matrix(tied_rank_points(b, g, p)) + c
    return float(np.mean(prod)) - c ** sample.r


def decomposition_to_csv(
    decomposition: Sequence[SubsetStatistic],
    weights: WeightScheme,
    r: int,
    labels: Sequence[str] | None = None,
    fh: TextIO | None = None,
):
    """Write ``subset,size,rdcov2,weight,contribution`` rows.

    Subsets are written as block labels joined by ``+``.
    """
    labels = labels or [f"X{i + 1}" for i in range(r)]
    coef = weights.coefficients(r)
    out = io.StringIO() if fh is None else fh
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["subset", "size", "rdcov2", "weight", "contribution"])
    for st in decomposition:
        w = coef[st.size]
        writer.writerow(
            [
                "+".join(labels[i] for i in st.subset),
                st.size,
                repr(st.value),
                repr(float(w)),
                repr(float(w * st.value)),
            ]
        )
    if fh is None:
        return out.getvalue()
    return None
