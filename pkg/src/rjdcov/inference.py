"""Independence tests built on the rank statistics, and a discovery workflow."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import false_discovery_control

from .calibration import NullCache, p_value, simulate_null
from .core import (
    DEFAULT_MAX_BLOCKS,
    BlockedSample,
    SubsetStatistic,
    WeightScheme,
    _resolve_grids,
    observed_matrices,
    observed_statistic,
    rdcov_subset,
    sample_ranks,
    subsets,
)

__all__ = [
    "SCHEMA_VERSION",
    "TestReport",
    "StructureReport",
    "test_joint",
    "test_pairwise_aggregate",
    "test_subset",
    "bh_adjust",
    "dependency_structure",
]

SCHEMA_VERSION = 1

SUBSET_CAVEAT = (
    "The single-subset test is calibrated for mutual independence of the "
    "selected blocks; a rejection signals dependence of order |S| only when "
    "every smaller sub-family of S is independent."
)


@dataclass(frozen=True)
class TestReport:
    """Outcome of one resampling test.

    ``subsets`` holds ``(labels, rdcov2)`` pairs for the subsets entering the
    statistic.
    """

    __test__ = False  # keep pytest from collecting this class

    kind: str
    statistic: float
    p_value: float
    alpha: float
    reject: bool
    B: int
    seed: int
    grid: str
    subsets: tuple
    weights: dict
    rank_R: int
    cutoff: float
    labels: tuple
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "B": self.B,
            "seed": self.seed,
            "grid": self.grid,
            "subsets": [{"S": list(s), "rdcov2": v} for s, v in self.subsets],
            "weights": self.weights,
            "rank_R": self.rank_R,
            "cutoff": self.cutoff,
            "blocks": list(self.labels),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _get_null(n, dims, weights, grids, B, seed, cache):
    if cache is not None:
        return cache.get_or_simulate(n, dims, weights, grids, B, seed)
    return simulate_null(n, dims, weights, grids, B, seed)


def _decomposition(sample, perms, grids, subset_list) -> list[SubsetStatistic]:
    mats = observed_matrices(sample, grids, perms)
    return [rdcov_subset(mats, s) for s in subset_list]


def _run(
    kind, sample, weights, subset_list, alpha, B, seed, grids, cache, notes=()
) -> TestReport:
    grids = _resolve_grids(sample.n, sample.block_dims, grids)
    perms = sample_ranks(sample, grids)
    statistic = observed_statistic(sample, grids, perms, weights)
    null = _get_null(sample.n, sample.block_dims, weights, grids, B, seed, cache)
    cal = p_value(statistic, null, alpha)
    decomposition = _decomposition(sample, perms, grids, subset_list)
    return TestReport(
        kind=kind,
        statistic=statistic,
        p_value=cal.p_value,
        alpha=alpha,
        reject=cal.reject,
        B=null.B,
        seed=seed,
        grid=",".join(g.token for g in grids),
        subsets=tuple(
            (tuple(sample.labels[i] for i in st.subset), st.value) for st in decomposition
        ),
        weights=weights.describe(),
        rank_R=cal.rank_R,
        cutoff=cal.cutoff,
        labels=sample.labels,
        notes=tuple(notes),
    )


def test_joint(
    sample: BlockedSample,
    weights: WeightScheme | None = None,
    alpha: float = 0.05,
    B: int = 999,
    seed: int = 0,
    grids=None,
    cache: NullCache | None = None,
    max_blocks: int = DEFAULT_MAX_BLOCKS,
) -> TestReport:
    """Test mutual independence of all blocks with the weighted statistic."""
    weights = WeightScheme.geometric(1.0) if weights is None else weights
    return _run(
        "joint", sample, weights, subsets(sample.r, max_blocks), alpha, B, seed, grids, cache
    )


def test_pairwise_aggregate(
    sample: BlockedSample,
    alpha: float = 0.05,
    B: int = 999,
    seed: int = 0,
    grids=None,
    cache: NullCache | None = None,
) -> TestReport:
    """Test with the sum of all pairwise rank distance covariances."""
    pairs = list(itertools.combinations(range(sample.r), 2))
    return _run(
        "pairwise-aggregate",
        sample,
        WeightScheme.pairwise(sample.r),
        pairs,
        alpha,
        B,
        seed,
        grids,
        cache,
    )


def test_subset(
    sample: BlockedSample,
    subset: Sequence[int],
    alpha: float = 0.05,
    B: int = 999,
    seed: int = 0,
    grids=None,
    cache: NullCache | None = None,
) -> TestReport:
    """Test based on the single statistic ``RdCov_n^2(X_S)``.

    ``subset`` holds 0-based block indices. The null is that of the blocks in
    ``S`` being mutually independent.
    """
    subset = tuple(int(i) for i in subset)
    if len(subset) < 2:
        raise ValueError("subsets must contain at least two blocks")
    if len(set(subset)) != len(subset):
        raise ValueError("subset indices must be distinct")
    sub = sample.select(subset)
    if grids is not None:
        grids = [tuple(grids)[i] for i in subset]
    return _run(
        f"subset({'+'.join(sub.labels)})",
        sub,
        WeightScheme.geometric(0.0),
        [tuple(range(len(subset)))],
        alpha,
        B,
        seed,
        grids,
        cache,
        notes=(SUBSET_CAVEAT,) if len(subset) > 2 else (),
    )


def bh_adjust(p_values: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    ps = np.asarray(p_values, dtype=float)
    if ps.ndim != 1:
        raise ValueError("p_values must be a flat sequence")
    if ps.size == 0:
        return []
    if np.any(~np.isfinite(ps)) or np.any(ps <= 0.0) or np.any(ps > 1.0):
        raise ValueError("p-values must lie in (0, 1]")
    return [float(v) for v in false_discovery_control(ps, method="bh")]


@dataclass(frozen=True)
class StructureReport:
    labels: tuple
    alpha: float
    B: int
    seed: int
    pairs: list = field(default_factory=list)
    triples: list = field(default_factory=list)

    @property
    def edges(self) -> list:
        return [tuple(p["S"]) for p in self.pairs if p["reject"]]

    @property
    def hyperedges(self) -> list:
        return [tuple(t["S"]) for t in self.triples if t["reject"]]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "structure",
            "blocks": list(self.labels),
            "alpha": self.alpha,
            "B": self.B,
            "seed": self.seed,
            "pairs": self.pairs,
            "triples": self.triples,
            "edges": [list(e) for e in self.edges],
            "hyperedges": [list(h) for h in self.hyperedges],
            "multiplicity": "Benjamini-Hochberg at level alpha, separately for the "
            "pair family and for the screened triple family",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_dot(self) -> str:
        """Undirected graph; each detected triple is drawn as a labeled dashed clique."""
        lines = ["graph dependency {", "  node [shape=ellipse];"]
        lines += [f'  "{lab}";' for lab in self.labels]
        for a, b in self.edges:
            lines.append(f'  "{a}" -- "{b}";')
        for t in self.hyperedges:
            name = "{" + ",".join(t) + "}"
            for a, b in itertools.combinations(t, 2):
                lines.append(f'  "{a}" -- "{b}" [style=dashed, label="{name}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def dependency_structure(
    sample: BlockedSample,
    alpha: float = 0.05,
    B: int = 999,
    seed: int = 0,
    grids=None,
    cache: NullCache | None = None,
) -> StructureReport:
    """Pairwise screening followed by third-order tests.

    All pairs are tested and BH-adjusted at level ``alpha``. Every triple
    whose three pairs were all retained is then tested with its third-order
    statistic, and those p-values are BH-adjusted as their own family.
    """
    if sample.r < 3:
        raise ValueError("the structure workflow needs at least three blocks")
    cache = NullCache.in_memory() if cache is None else cache
    grids = _resolve_grids(sample.n, sample.block_dims, grids)
    labels = sample.labels

    pair_idx = list(itertools.combinations(range(sample.r), 2))
    pair_reports = [test_subset(sample, s, alpha, B, seed, grids, cache) for s in pair_idx]
    pair_adj = bh_adjust([rep.p_value for rep in pair_reports])
    pairs = []
    linked = set()
    for s, rep, adj in zip(pair_idx, pair_reports, pair_adj):
        reject = adj <= alpha
        if reject:
            linked.add(s)
        pairs.append(
            {
                "S": [labels[i] for i in s],
                "statistic": rep.statistic,
                "p_value": rep.p_value,
                "p_adjusted": adj,
                "reject": reject,
            }
        )

    triple_idx = [
        t
        for t in itertools.combinations(range(sample.r), 3)
        if not any(p in linked for p in itertools.combinations(t, 2))
    ]
    triple_reports = [test_subset(sample, t, alpha, B, seed, grids, cache) for t in triple_idx]
    triple_adj = bh_adjust([rep.p_value for rep in triple_reports])
    triples = [
        {
            "S": [labels[i] for i in t],
            "statistic": rep.statistic,
            "p_value": rep.p_value,
            "p_adjusted": adj,
            "reject": adj <= alpha,
        }
        for t, rep, adj in zip(triple_idx, triple_reports, triple_adj)
    ]
    return StructureReport(labels, alpha, B, seed, pairs, triples)
