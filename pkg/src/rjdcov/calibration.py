"""Data-agnostic null calibration by permuting reference grids.

Under mutual independence the rank permutations of the blocks are i.i.d.
uniform, so the null law of any statistic built from them can be simulated
from the grids alone. Draw ``b`` uses its own RNG substream
``SeedSequence(seed, spawn_key=(PERM_STREAM, b))``; ties between the observed
statistic and a draw are broken with coins from
``SeedSequence(seed, spawn_key=(TIE_STREAM,))``.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import WeightScheme, _stacked, _weighted_sum
from .grids import ReferenceGrid, default_grids

__all__ = [
    "PERM_STREAM",
    "TIE_STREAM",
    "CACHE_VERSION",
    "NullKey",
    "NullDistribution",
    "CalibrationResult",
    "simulate_null",
    "p_value",
    "quantile_cutoff",
    "NullCache",
    "CacheMiss",
    "ChecksumMismatch",
    "default_cache_dir",
]

PERM_STREAM = 0
TIE_STREAM = 1
CACHE_VERSION = 1
# Draws within this relative distance of the statistic count as ties.
TIE_RTOL = 1e-12


class CacheMiss(KeyError):
    """No cached null distribution for the requested key."""


class ChecksumMismatch(ValueError):
    """A cache file exists but its contents fail verification."""


@dataclass(frozen=True)
class NullKey:
    """Everything that determines a simulated null distribution."""

    n: int
    block_dims: tuple
    coefficients: tuple
    grids: tuple
    B: int
    seed: int
    exhaustive: bool = False

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "block_dims": list(self.block_dims),
            "coefficients": [repr(float(c)) for c in self.coefficients],
            "grids": list(self.grids),
            "B": self.B,
            "seed": self.seed,
            "exhaustive": self.exhaustive,
        }

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class NullDistribution:
    draws: np.ndarray
    key: NullKey

    def __post_init__(self):
        d = np.array(self.draws, dtype=float, copy=True)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("a null distribution needs at least one draw")
        d.setflags(write=False)
        object.__setattr__(self, "draws", d)

    @property
    def B(self) -> int:
        return self.draws.size

    def quantile(self, alpha: float) -> float:
        return quantile_cutoff(self, alpha)


@dataclass(frozen=True)
class CalibrationResult:
    statistic: float
    p_value: float
    rank_R: int
    cutoff: float
    reject: bool
    alpha: float
    B: int


def _key(n, block_dims, coef, grids, B, seed, exhaustive) -> NullKey:
    return NullKey(
        int(n),
        tuple(int(d) for d in block_dims),
        tuple(float(c) for c in coef),
        tuple(g.token for g in grids),
        int(B),
        int(seed),
        bool(exhaustive),
    )


def _perm_rng(seed: int, b: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(PERM_STREAM, b)))


def simulate_null(
    n: int,
    block_dims: Sequence[int],
    weights: WeightScheme,
    grids: Sequence[ReferenceGrid] | None = None,
    B: int = 999,
    seed: int = 0,
    exhaustive: bool = False,
    workers: int = 1,
) -> NullDistribution:
    """Simulate the null law of the weighted statistic.

    Each draw evaluates the statistic on grids permuted by ``r`` fresh
    uniform permutations. With ``exhaustive=True`` every ordered tuple of
    permutations is enumerated instead (``(n!)**r`` draws; ``B`` and ``seed``
    are ignored), which is only sensible for tiny ``n``.

    Parameters
    ----------
    workers : int
        Threads used for the draws. Results do not depend on it because each
        draw has its own RNG substream.
    """
    block_dims = tuple(block_dims)
    r = len(block_dims)
    if r < 2:
        raise ValueError("need at least two blocks")
    grids = default_grids(n, block_dims) if grids is None else tuple(grids)
    if len(grids) != r or any(g.n != n or g.dim != d for g, d in zip(grids, block_dims)):
        raise ValueError("grids must match n and the block dimensions")
    coef = weights.coefficients(r)
    mats = _stacked(grids)

    if exhaustive:
        all_perms = [np.array(p) for p in itertools.permutations(range(n))]
        draws = [
            _weighted_sum(mats, combo, coef)
            for combo in itertools.product(all_perms, repeat=r)
        ]
        key = _key(n, block_dims, coef, grids, len(draws), 0, True)
        return NullDistribution(np.array(draws), key)

    if B < 1:
        raise ValueError("B must be at least 1")

    def draw(b: int) -> float:
        rng = _perm_rng(seed, b)
        perms = [rng.permutation(n) for _ in range(r)]
        return _weighted_sum(mats, perms, coef)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            draws = list(pool.map(draw, range(B)))
    else:
        draws = [draw(b) for b in range(B)]
    return NullDistribution(np.array(draws), _key(n, block_dims, coef, grids, B, seed, False))


def quantile_cutoff(null: NullDistribution, alpha: float) -> float:
    """Smallest draw ``v`` with ``#{draws > v} <= alpha * B``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    draws = np.sort(null.draws)
    B = draws.size
    for v in np.unique(draws):
        above = B - np.searchsorted(draws, v, side="right")
        if above <= alpha * B:
            return float(v)
    return float(draws[-1])  # pragma: no cover - the maximum always qualifies


def p_value(statistic: float, null: NullDistribution, alpha: float = 0.05) -> CalibrationResult:
    """Resampling p-value ``R / (B + 1)``.

    ``R = 1 + #{draws > statistic}`` plus one for each tied draw whose coin
    comes up heads.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    draws = null.draws
    B = draws.size
    statistic = float(statistic)
    scale = max(abs(statistic), float(np.max(np.abs(draws))))
    tol = TIE_RTOL * scale
    tied = np.abs(draws - statistic) <= tol
    above = int(np.count_nonzero((draws > statistic) & ~tied))
    n_ties = int(np.count_nonzero(tied))
    heads = 0
    if n_ties:
        rng = np.random.default_rng(
            np.random.SeedSequence(null.key.seed, spawn_key=(TIE_STREAM,))
        )
        heads = int(np.count_nonzero(rng.random(n_ties) < 0.5))
    R = 1 + above + heads
    p = R / (B + 1)
    return CalibrationResult(
        statistic=statistic,
        p_value=p,
        rank_R=R,
        cutoff=quantile_cutoff(null, alpha),
        reject=p <= alpha,
        alpha=alpha,
        B=B,
    )


def default_cache_dir() -> Path:
    return Path(os.environ.get("RJDCOV_CACHE_DIR", ".rjdcov-cache"))


class NullCache:
    """Content-addressed on-disk store of null draws.

    Each entry is a JSON file named by the SHA-256 of the key, holding the
    format version, the key, the draws, and a checksum of the draw bytes.
    Writes go to a temporary file in the same directory and are renamed into
    place, so readers never see a partial file.
    """

    def __init__(self, directory: str | os.PathLike | None = None, memory: bool = True):
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self._memory: dict | None = {} if memory else None

    @classmethod
    def in_memory(cls) -> "NullCache":
        """A cache that never touches the disk."""
        cache = cls(memory=True)
        cache.directory = None
        return cache

    def path_for(self, key: NullKey) -> Path:
        return self.directory / f"{key.digest()}.json"

    @staticmethod
    def _checksum(draws: np.ndarray) -> str:
        return hashlib.sha256(np.ascontiguousarray(draws, dtype="<f8").tobytes()).hexdigest()

    def store(self, null: NullDistribution) -> Path | None:
        if self.directory is None:
            self._memory[key_id(null.key)] = null
            return None
        self.directory.mkdir(parents=True, exist_ok=True)
        payload = {
            "version": CACHE_VERSION,
            "key": null.key.as_dict(),
            "checksum": self._checksum(null.draws),
            "draws": [float(v).hex() for v in null.draws],
        }
        target = self.path_for(null.key)
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(payload, fh, sort_keys=True)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        if self._memory is not None:
            self._memory[key_id(null.key)] = null
        return target

    def load(self, key: NullKey) -> NullDistribution:
        if self._memory is not None and key_id(key) in self._memory:
            return self._memory[key_id(key)]
        if self.directory is None:
            raise CacheMiss(key.digest())
        path = self.path_for(key)
        if not path.exists():
            raise CacheMiss(key.digest())
        try:
            payload = json.loads(path.read_text())
            draws = np.array([float.fromhex(v) for v in payload["draws"]])
        except (ValueError, KeyError, TypeError) as exc:
            raise ChecksumMismatch(f"unreadable cache file {path}") from exc
        if payload.get("version") != CACHE_VERSION:
            raise CacheMiss(f"cache format version {payload.get('version')} is stale")
        if payload.get("key") != key.as_dict():
            raise ChecksumMismatch(f"cache file {path} holds a different key")
        if payload.get("checksum") != self._checksum(draws):
            raise ChecksumMismatch(f"checksum mismatch in {path}")
        null = NullDistribution(draws, key)
        if self._memory is not None:
            self._memory[key_id(key)] = null
        return null

    def get_or_simulate(
        self,
        n: int,
        block_dims: Sequence[int],
        weights: WeightScheme,
        grids: Sequence[ReferenceGrid] | None = None,
        B: int = 999,
        seed: int = 0,
    ) -> NullDistribution:
        grids = default_grids(n, block_dims) if grids is None else tuple(grids)
        key = _key(n, block_dims, weights.coefficients(len(block_dims)), grids, B, seed, False)
        try:
            return self.load(key)
        except CacheMiss:
            pass
        null = simulate_null(n, block_dims, weights, grids, B, seed)
        self.store(null)
        return null


def key_id(key: NullKey) -> str:
    return key.digest()

