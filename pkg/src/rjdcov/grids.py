"""Reference discretizations of Unif([0, 1]^d) used as rank targets."""
from __future__ import annotations

import csv
import functools
import io
import warnings
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np
from scipy.stats import qmc

__all__ = [
    "ReferenceGrid",
    "halton_grid",
    "iid_uniform_grid",
    "default_grids",
]

# Above this dimension unscrambled Halton points show visible coordinate
# correlations; we warn but do not scramble.
HALTON_MAX_CLEAN_DIM = 8


@dataclass(frozen=True, eq=False)
class ReferenceGrid:
    """A fixed set of ``n`` distinct points in ``[0, 1]^dim``.

    Attributes
    ----------
    points : ndarray of shape (n, dim)
        Read-only array of grid points, in grid order.
    kind : {"halton", "iid"}
        How the points were generated.
    seed : int or None
        Seed for ``kind == "iid"``; ``None`` for Halton grids.
    """

    points: np.ndarray
    kind: str
    seed: int | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("grid points must be a non-empty (n, dim) array")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise ValueError("grid points must lie in [0, 1]^dim")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def token(self) -> str:
        """Short identifier of the grid family, used in cache keys."""
        if self.kind == "iid":
            return f"iid:{self.seed}"
        return self.kind

    @property
    def key(self) -> tuple:
        return (self.token, self.n, self.dim)

    def __eq__(self, other):
        if not isinstance(other, ReferenceGrid):
            return NotImplemented
        return self.key == other.key and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.key)

    def to_csv(self, fh: TextIO | None = None) -> str | None:
        """Write ``index,x1,...,xd`` rows (1-based index).

        Returns the CSV text when ``fh`` is None.
        """
        out = io.StringIO() if fh is None else fh
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["index"] + [f"x{j + 1}" for j in range(self.dim)])
        for a, row in enumerate(self.points, start=1):
            writer.writerow([a] + [repr(float(v)) for v in row])
        if fh is None:
            return out.getvalue()
        return None


def halton_grid(n: int, dim: int) -> ReferenceGrid:
    """First ``n`` Halton points in ``[0, 1]^dim``.

    Point ``a`` (1-based) is the radical inverse of ``a`` in the first ``dim``
    prime bases; index 0 (the origin) is skipped. Points come from the
    unscrambled :class:`scipy.stats.qmc.Halton` sequence.

    Examples
    --------
    >>> halton_grid(4, 1).points.ravel().tolist()
    [0.5, 0.25, 0.75, 0.125]
    """
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be positive")
    if dim > HALTON_MAX_CLEAN_DIM:
        warnings.warn(
            f"unscrambled Halton points in dimension {dim} > "
            f"{HALTON_MAX_CLEAN_DIM} have correlated coordinates",
            stacklevel=2,
        )
    engine = qmc.Halton(dim, scramble=False)
    engine.fast_forward(1)
    return ReferenceGrid(engine.random(n), "halton")


def iid_uniform_grid(n: int, dim: int, seed: int) -> ReferenceGrid:
    """``n`` i.i.d. Unif([0, 1]^dim) points drawn with ``seed``."""
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be positive")
    rng = np.random.default_rng(seed)
    return ReferenceGrid(rng.random((n, dim)), "iid", seed=int(seed))


def default_grids(
    n: int, dims: Sequence[int], kind: str = "halton", seed: int = 0
) -> tuple[ReferenceGrid, ...]:
    """One grid per block dimension, all of size ``n``.

    Grids are memoized, so repeated calls hand back the same instances and
    their precomputed centered distance matrices.
    """
    if kind == "halton":
        return tuple(_cached_halton(n, d) for d in dims)
    if kind == "iid":
        # Per-dimension streams: blocks of equal dimension share one grid.
        return tuple(_cached_iid(n, d, seed + 1000 * d) for d in dims)
    raise ValueError(f"unknown grid kind {kind!r}")


@functools.lru_cache(maxsize=64)
def _cached_halton(n: int, dim: int) -> ReferenceGrid:
    return halton_grid(n, dim)


@functools.lru_cache(maxsize=64)
def _cached_iid(n: int, dim: int, seed: int) -> ReferenceGrid:
    return iid_uniform_grid(n, dim, seed)
