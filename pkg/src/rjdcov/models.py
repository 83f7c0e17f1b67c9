"""Seedable data generators for the simulation designs.

Every generator is a pure function of its parameters and ``seed`` (an int or
a ``numpy.random.SeedSequence``), drawing from ``numpy.random.default_rng``.

Notation: ``N(mu, s2)`` takes a variance as its second argument, ``Exp(k)``
has rate ``k`` (mean ``1/k``), and ``N(0,1)^k`` is the ``k``-th power of a
standard normal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import BlockedSample

__all__ = [
    "NotPositiveDefinite",
    "SingularA",
    "ar_cov",
    "banded_cov",
    "gen_gaussian_cov",
    "gen_copula_power",
    "gen_null_setting",
    "gen_cauchy_regression",
    "gen_sine_dependence",
    "KonijnSpec",
    "konijn_matrix",
    "gen_konijn",
    "MixtureSpec",
    "gen_mixture",
    "gen_sign_model",
    "ICA_SOURCES",
    "gen_ica_sources",
    "random_mixing_matrix",
]


class NotPositiveDefinite(ValueError):
    """A covariance matrix is not positive definite."""


class SingularA(ValueError):
    """The Konijn mixing matrix is not invertible."""


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _split(x: np.ndarray, block_dims: Sequence[int]) -> BlockedSample:
    return BlockedSample.from_array(x, list(block_dims))


def ar_cov(dim: int, rho: float) -> np.ndarray:
    """``sigma_ij = rho**|i - j|``."""
    idx = np.arange(dim)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :])


def banded_cov(dim: int, rho: float, bandwidth: int = 2) -> np.ndarray:
    """Unit diagonal, ``rho`` for ``1 <= |i - j| <= bandwidth``, zero elsewhere."""
    idx = np.arange(dim)
    gap = np.abs(idx[:, None] - idx[None, :])
    return np.where(gap == 0, 1.0, np.where(gap <= bandwidth, float(rho), 0.0))


def _cholesky(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
        raise NotPositiveDefinite("covariance must be a symmetric square matrix")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("covariance matrix is not positive definite") from exc


def gen_gaussian_cov(
    n: int,
    dim: int = 9,
    kind: str = "ar",
    rho: float = 0.0,
    cov=None,
    block_dims: Sequence[int] = (3, 3, 3),
    seed=0,
) -> BlockedSample:
    """Draw ``N(0, Sigma)`` rows and split consecutive coordinates into blocks.

    ``kind`` is ``"ar"`` (:func:`ar_cov`), ``"banded"`` (:func:`banded_cov`)
    or ``"custom"`` (``cov`` given explicitly).
    """
    if kind == "ar":
        sigma = ar_cov(dim, rho)
    elif kind == "banded":
        sigma = banded_cov(dim, rho)
    elif kind == "custom":
        if cov is None:
            raise ValueError("kind='custom' needs cov")
        sigma = np.asarray(cov, dtype=float)
        dim = sigma.shape[0]
    else:
        raise ValueError(f"unknown covariance kind {kind!r}")
    if sum(block_dims) != dim:
        raise ValueError("block dimensions must add up to dim")
    chol = _cholesky(sigma)
    z = _rng(seed).standard_normal((n, dim))
    return _split(z @ chol.T, block_dims)


def _check_odd_power(q) -> int:
    if int(q) != q or q < 1 or int(q) % 2 == 0:
        raise ValueError(f"q must be a positive odd integer, got {q!r}")
    return int(q)


def gen_copula_power(n: int, dim: int, q: int, cov=None, seed=0) -> np.ndarray:
    """Componentwise ``Z**q`` with ``Z ~ N(0, cov)`` (identity by default)."""
    q = _check_odd_power(q)
    sigma = np.eye(dim) if cov is None else np.asarray(cov, dtype=float)
    z = _rng(seed).standard_normal((n, dim)) @ _cholesky(sigma).T
    return z**q


NULL_SETTINGS = ("gaussian", "copula3", "cauchy")


def gen_null_setting(n: int, setting: str, seed=0, r: int = 3, d: int = 3) -> BlockedSample:
    """Mutually independent blocks with i.i.d. coordinates.

    ``setting`` is ``"gaussian"`` (``N(0, 1)``), ``"copula3"`` (``N(0, 1)^3``)
    or ``"cauchy"`` (standard Cauchy).
    """
    rng = _rng(seed)
    if setting == "gaussian":
        x = rng.standard_normal((n, r * d))
    elif setting == "copula3":
        x = rng.standard_normal((n, r * d)) ** 3
    elif setting == "cauchy":
        x = rng.standard_cauchy((n, r * d))
    else:
        raise ValueError(f"unknown null setting {setting!r}; choose from {NULL_SETTINGS}")
    return _split(x, [d] * r)


def gen_cauchy_regression(n: int, a: float, seed=0) -> BlockedSample:
    """``X_i = Z_i + a V`` with Cauchy ``Z_i`` in R^3 and ``V = (W, W, W)``, ``W`` Cauchy."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    rng = _rng(seed)
    z = rng.standard_cauchy((n, 9))
    w = rng.standard_cauchy(n)
    return _split(z + a * w[:, None], [3, 3, 3])


def gen_sine_dependence(n: int, b: float, seed=0) -> BlockedSample:
    """As :func:`gen_cauchy_regression` with ``a = 1`` and ``V = sin(b W)``."""
    if b < 0:
        raise ValueError("b must be nonnegative")
    rng = _rng(seed)
    z = rng.standard_cauchy((n, 9))
    w = rng.standard_cauchy(n)
    return _split(z + np.sin(b * w)[:, None], [3, 3, 3])


def _gaussian_base(cov):
    chol = _cholesky(cov)

    def sample(rng, n):
        return rng.standard_normal((n, chol.shape[0])) @ chol.T

    return sample


@dataclass(frozen=True)
class KonijnSpec:
    """Konijn alternative ``X = A_delta X'`` with independent base blocks.

    ``A_delta`` has ``(1 - delta) I`` diagonal blocks and ``delta M_ij``
    off-diagonal blocks. ``coupling`` maps ordered pairs ``(i, j)`` (0-based)
    to ``d_i x d_j`` matrices; missing pairs default to the identity when the
    dimensions agree. ``base`` is ``"gaussian"``, ``"copula"`` (Gaussian
    raised to the odd power ``q``) or ``"t"`` (multivariate t with ``df``).
    """

    block_dims: tuple = (2, 2, 2)
    delta: float = 0.0
    coupling: dict = field(default_factory=dict)
    base: str = "gaussian"
    base_cov: tuple | None = ((1.0, 0.5), (0.5, 1.0))
    q: int = 3
    df: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "block_dims", tuple(int(d) for d in self.block_dims))
        if len(self.block_dims) < 2:
            raise ValueError("need at least two blocks")
        if self.base not in ("gaussian", "copula", "t"):
            raise ValueError(f"unknown base law {self.base!r}")
        if self.base == "copula":
            _check_odd_power(self.q)
        a = konijn_matrix(self)
        if np.linalg.matrix_rank(a) < a.shape[0]:
            raise SingularA(f"A_delta is singular at delta={self.delta}")

    @classmethod
    def local(cls, h: float, n: int, **kwargs) -> "KonijnSpec":
        """Local alternative with ``delta = h / sqrt(n)``."""
        return cls(delta=h / math.sqrt(n), **kwargs)

    def cov_for(self, d: int) -> np.ndarray:
        if self.base_cov is None:
            return np.eye(d)
        cov = np.asarray(self.base_cov, dtype=float)
        if cov.shape != (d, d):
            raise ValueError("base_cov must match every block dimension")
        return cov


def konijn_matrix(spec: KonijnSpec) -> np.ndarray:
    dims = spec.block_dims
    edges = np.cumsum([0, *dims])
    a = np.zeros((edges[-1], edges[-1]))
    for i, di in enumerate(dims):
        for j, dj in enumerate(dims):
            rows = slice(edges[i], edges[i + 1])
            cols = slice(edges[j], edges[j + 1])
            if i == j:
                a[rows, cols] = (1.0 - spec.delta) * np.eye(di)
                continue
            m = spec.coupling.get((i, j))
            if m is None:
                if di != dj:
                    raise ValueError(f"coupling ({i}, {j}) needed for unequal dimensions")
                m = np.eye(di)
            m = np.asarray(m, dtype=float)
            if m.shape != (di, dj):
                raise ValueError(f"coupling ({i}, {j}) must have shape {(di, dj)}")
            a[rows, cols] = spec.delta * m
    return a


def _konijn_base(spec: KonijnSpec, rng, n: int, d: int) -> np.ndarray:
    cov = spec.cov_for(d)
    z = _gaussian_base(cov)(rng, n)
    if spec.base == "copula":
        return z**spec.q
    if spec.base == "t":
        chi = rng.chisquare(spec.df, size=n)
        return z / np.sqrt(chi / spec.df)[:, None]
    return z


def gen_konijn(n: int, spec: KonijnSpec, seed=0) -> BlockedSample:
    rng = _rng(seed)
    base = np.hstack([_konijn_base(spec, rng, n, d) for d in spec.block_dims])
    return _split(base @ konijn_matrix(spec).T, spec.block_dims)


Sampler = Callable[[np.random.Generator, int], np.ndarray]


def _independent_gaussian(dims):
    total = sum(dims)
    return lambda rng, n: rng.standard_normal((n, total))


def _shared_gaussian(dims):
    # Every block is a copy of one Gaussian vector: maximal coupling.
    d = dims[0]
    if any(di != d for di in dims):
        raise ValueError("the default coupled law needs equal block dimensions")
    return lambda rng, n: np.tile(rng.standard_normal((n, d)), (1, len(dims)))


@dataclass(frozen=True)
class MixtureSpec:
    """Per-row mixture ``(1 - delta) * product law + delta * g``.

    Samplers take ``(rng, n)`` and return an ``(n, sum(block_dims))`` array.
    By default the product law is standard Gaussian and ``g`` copies one
    Gaussian vector into every block.
    """

    delta: float
    block_dims: tuple = (1, 1, 1)
    product: Sampler | None = None
    dependent: Sampler | None = None

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        object.__setattr__(self, "block_dims", tuple(int(d) for d in self.block_dims))
        if self.product is None:
            object.__setattr__(self, "product", _independent_gaussian(self.block_dims))
        if self.dependent is None:
            object.__setattr__(self, "dependent", _shared_gaussian(self.block_dims))

    @classmethod
    def local(cls, h: float, n: int, **kwargs) -> "MixtureSpec":
        return cls(delta=min(1.0, h / math.sqrt(n)), **kwargs)


def gen_mixture(n: int, spec: MixtureSpec, seed=0) -> BlockedSample:
    rng = _rng(seed)
    pick = rng.random(n) < spec.delta
    x = spec.product(rng, n)
    g = spec.dependent(rng, n)
    total = sum(spec.block_dims)
    if x.shape != (n, total) or g.shape != (n, total):
        raise ValueError("samplers must return (n, sum(block_dims)) arrays")
    x = np.where(pick[:, None], g, x)
    return _split(x, spec.block_dims)


SIGN_MARGINALS = ("gaussian", "t3", "t2", "cauchy")


def _symmetric_draw(rng, marginal: str, size) -> np.ndarray:
    if marginal == "gaussian":
        return rng.standard_normal(size)
    if marginal == "t3":
        return rng.standard_t(3, size)
    if marginal == "t2":
        return rng.standard_t(2, size)
    if marginal == "cauchy":
        return rng.standard_cauchy(size)
    raise ValueError(f"unknown marginal {marginal!r}; choose from {SIGN_MARGINALS}")


def gen_sign_model(n: int, d: int = 3, marginal: str = "gaussian", seed=0) -> BlockedSample:
    """Pairwise independent but jointly dependent triple ``(X, Y, Z')``.

    ``X, Y, Z`` have ``d`` i.i.d. coordinates from a law symmetric about 0.
    ``Z'`` equals ``Z`` except that its last coordinate changes sign
    whenever ``X_d Y_d Z_d > 0``, so ``X_d Y_d Z'_d <= 0`` on every row.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    rng = _rng(seed)
    x = _symmetric_draw(rng, marginal, (n, d))
    y = _symmetric_draw(rng, marginal, (n, d))
    z = _symmetric_draw(rng, marginal, (n, d))
    flip = x[:, -1] * y[:, -1] * z[:, -1] > 0
    z[flip, -1] = -z[flip, -1]
    return BlockedSample((x, y, z), ("X", "Y", "Z"))


def _normal_mix(rng, size, w1, m1, v1, m2, v2):
    first = rng.random(size) < w1
    return np.where(
        first,
        rng.normal(m1, math.sqrt(v1), size),
        rng.normal(m2, math.sqrt(v2), size),
    )


def _exp_mix(rng, size):
    first = rng.random(size) < 0.3
    return np.where(first, rng.exponential(1.0, size), rng.exponential(1.0 / 5.0, size))


ICA_SOURCES = {
    "a": ("N(0,1)^3", lambda rng, s: rng.standard_normal(s) ** 3),
    "b": ("N(0,1)^5", lambda rng, s: rng.standard_normal(s) ** 5),
    "c": ("Gamma(5,1)", lambda rng, s: rng.gamma(5.0, 1.0, s)),
    "d": ("Gamma(10,1)", lambda rng, s: rng.gamma(10.0, 1.0, s)),
    "e": ("0.3 Exp(1) + 0.7 Exp(5)", _exp_mix),
    "f": ("0.3 N(-2,1) + 0.7 N(2,1)", lambda rng, s: _normal_mix(rng, s, 0.3, -2, 1, 2, 1)),
    "g": ("Uniform(0,1)", lambda rng, s: rng.random(s)),
    "h": ("0.7 N(-2,3) + 0.3 N(2,1)", lambda rng, s: _normal_mix(rng, s, 0.7, -2, 3, 2, 1)),
    "i": ("0.5 N(-2,2) + 0.5 N(2,2)", lambda rng, s: _normal_mix(rng, s, 0.5, -2, 2, 2, 2)),
    "j": (
        "(0.5 N(-2,2) + 0.5 N(2,2))^3",
        lambda rng, s: _normal_mix(rng, s, 0.5, -2, 2, 2, 2) ** 3,
    ),
    "k": (
        "(0.5 N(-2,2) + 0.5 N(2,2))^5",
        lambda rng, s: _normal_mix(rng, s, 0.5, -2, 2, 2, 2) ** 5,
    ),
    "l": (
        "(0.5 N(-2,2) + 0.5 N(2,2))^7",
        lambda rng, s: _normal_mix(rng, s, 0.5, -2, 2, 2, 2) ** 7,
    ),
}


def random_mixing_matrix(r: int, rng: np.random.Generator, max_cond: float = 2.0) -> np.ndarray:
    """Random ``r x r`` matrix with 2-norm condition number in ``[1, max_cond]``.

    Two Haar-like orthogonal factors from QR of Gaussian matrices sandwich a
    diagonal of singular values drawn from ``U[1, max_cond]``; draws whose
    computed condition number falls outside the range are rejected.
    """
    while True:
        q1, r1 = np.linalg.qr(rng.standard_normal((r, r)))
        q1 = q1 * np.sign(np.diag(r1))
        q2, r2 = np.linalg.qr(rng.standard_normal((r, r)))
        q2 = q2 * np.sign(np.diag(r2))
        s = rng.uniform(1.0, max_cond, r)
        m = q1 @ np.diag(s) @ q2
        if 1.0 <= np.linalg.cond(m) <= max_cond:
            return m


def gen_ica_sources(n: int, r: int, distribution: str, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """i.i.d. sources ``S`` (n x r) and a mixing matrix ``M``; data is ``S @ M.T``."""
    key = str(distribution).lower()
    if key not in ICA_SOURCES:
        raise ValueError(f"unknown source distribution {distribution!r}; use one of a-l")
    rng = _rng(seed)
    sources = ICA_SOURCES[key][1](rng, (n, r))
    return sources, random_mixing_matrix(r, rng)
