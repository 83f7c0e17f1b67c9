"""Empirical checks of the combinatorial CLT for several permutations.

For a centered order-``r`` tensor ``a`` and independent uniform permutations
``pi_1..pi_{r-1}``, ``C_n = sum_i a[i, pi_1(i), ..., pi_{r-1}(i)]`` is
approximately normal with mean 0.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats

__all__ = [
    "AssumptionViolation",
    "DegenerateVariance",
    "CenteredTensor",
    "CltReport",
    "center_tensor",
    "center_order3_explicit",
    "combinatorial_sum",
    "variance_formula",
    "sample_sums",
    "normality_diagnostic",
    "random_centered_tensor",
]

CHUNK = 1000


class AssumptionViolation(ValueError):
    """The tensor does not meet the boundedness or size conditions."""


class DegenerateVariance(AssumptionViolation):
    """``sum a^2`` is too small relative to ``n**(r - 1)``."""


@dataclass(frozen=True)
class CenteredTensor:
    """A dense order-``r`` tensor whose axis-slice sums all vanish.

    ``K1`` records ``sqrt(n) * max|a|``, so ``max|a| <= K1 / sqrt(n)``.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim < 2 or len(set(a.shape)) != 1:
            raise ValueError("tensor must be a cube of order >= 2")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def order(self) -> int:
        return self.entries.ndim

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def K1(self) -> float:
        return float(np.sqrt(self.n) * np.max(np.abs(self.entries)))

    def max_slice_sum(self) -> float:
        return max(float(np.max(np.abs(self.entries.sum(axis=k)))) for k in range(self.order))


def center_tensor(raw) -> CenteredTensor:
    """Project onto tensors with zero axis-slice sums.

    Demeaning along each axis in turn equals the inclusion-exclusion formula
    ``sum_{A subset of axes} (-1)^|A| mean_A(a)`` for any order.
    """
    a = np.asarray(raw, dtype=float)
    for k in range(a.ndim):
        a = a - a.mean(axis=k, keepdims=True)
    return CenteredTensor(a)


def center_order3_explicit(raw) -> np.ndarray:
    """Order-3 centering written out term by term (bullets are averages)."""
    a = np.asarray(raw, dtype=float)
    if a.ndim != 3:
        raise ValueError("explicit formula is for order 3")
    m0 = a.mean(axis=0, keepdims=True)
    m1 = a.mean(axis=1, keepdims=True)
    m2 = a.mean(axis=2, keepdims=True)
    m01 = a.mean(axis=(0, 1), keepdims=True)
    m02 = a.mean(axis=(0, 2), keepdims=True)
    m12 = a.mean(axis=(1, 2), keepdims=True)
    return a - m0 - m1 - m2 + m01 + m02 + m12 - a.mean()


def combinatorial_sum(tensor: CenteredTensor, perms: Sequence) -> float:
    """``sum_i a[i, perms[0][i], ..., perms[r-2][i]]``."""
    perms = [np.asarray(p) for p in perms]
    if len(perms) != tensor.order - 1:
        raise ValueError(f"need {tensor.order - 1} permutations")
    if any(p.shape != (tensor.n,) for p in perms):
        raise ValueError("permutation lengths must equal n")
    return float(np.sum(tensor.entries[(np.arange(tensor.n), *perms)]))


def variance_formula(tensor: CenteredTensor) -> float:
    """Exact ``Var[C_n] = (n - 2) / (n (n - 1)^2) * sum a^2`` for order 3."""
    if tensor.order != 3:
        raise ValueError("the closed form covers order-3 tensors only")
    n = tensor.n
    return (n - 2) / (n * (n - 1) ** 2) * float(np.sum(tensor.entries**2))


def sample_sums(tensor: CenteredTensor, draws: int, seed=0) -> np.ndarray:
    """``draws`` values of ``C_n`` under independent uniform permutations.

    Chunk ``k`` of ``CHUNK`` draws uses ``SeedSequence(seed, spawn_key=(k,))``.
    """
    n, r = tensor.n, tensor.order
    rows = np.arange(n)[None, :]
    out = np.empty(draws)
    for k, lo in enumerate(range(0, draws, CHUNK)):
        m = min(CHUNK, draws - lo)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        perms = [np.argsort(rng.random((m, n)), axis=1) for _ in range(r - 1)]
        out[lo : lo + m] = tensor.entries[(rows, *perms)].sum(axis=1)
    return out


@dataclass(frozen=True)
class CltReport:
    n: int
    order: int
    draws: int
    seed: int
    empirical_mean: float
    empirical_var: float
    analytic_var: float
    ks_statistic: float
    ks_pvalue: float

    def to_dict(self) -> dict:
        return {"schema_version": 1, "kind": "clt-check", **asdict(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def normality_diagnostic(
    tensor: CenteredTensor,
    draws: int = 10000,
    seed=0,
    K1: float = 10.0,
    K2: float = 0.01,
) -> CltReport:
    """KS test of standardized ``C_n`` draws against ``N(0, 1)``.

    Requires ``max|a| <= K1 / sqrt(n)`` and ``sum a^2 >= K2 n^(r-1)``.
    """
    if draws < 2:
        raise ValueError("need at least two draws")
    n, r = tensor.n, tensor.order
    if tensor.K1 > K1:
        raise AssumptionViolation(f"max|a| * sqrt(n) = {tensor.K1:.3g} exceeds K1 = {K1}")
    ss = float(np.sum(tensor.entries**2))
    if ss < K2 * n ** (r - 1):
        raise DegenerateVariance(f"sum a^2 = {ss:.3g} is below K2 n^(r-1) = {K2 * n ** (r - 1):.3g}")
    analytic = variance_formula(tensor)
    c = sample_sums(tensor, draws, seed)
    ks = stats.kstest(c / np.sqrt(analytic), "norm")
    return CltReport(
        n=n,
        order=r,
        draws=draws,
        seed=int(seed) if isinstance(seed, (int, np.integer)) else 0,
        empirical_mean=float(np.mean(c)),
        empirical_var=float(np.var(c, ddof=1)),
        analytic_var=analytic,
        ks_statistic=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
    )


def random_centered_tensor(n: int, order: int = 3, seed=0) -> CenteredTensor:
    """Center a tensor of i.i.d. ``U(-1, 1) / sqrt(n)`` entries."""
    rng = np.random.default_rng(seed)
    return center_tensor(rng.uniform(-1.0, 1.0, (n,) * order) / np.sqrt(n))
