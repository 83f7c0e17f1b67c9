"""Rank joint distance covariance: distribution-free tests of mutual independence."""
from .calibration import (
    CacheMiss,
    ChecksumMismatch,
    NullCache,
    NullDistribution,
    p_value,
    quantile_cutoff,
    simulate_null,
)
from .core import (
    BlockedSample,
    WeightScheme,
    rdcov_subset,
    rjdcov,
    rjdcov_compact,
    sample_ranks,
)
from .grids import ReferenceGrid, default_grids, halton_grid, iid_uniform_grid
from .ica import fit_ica, recovery_error
from .inference import (
    TestReport,
    bh_adjust,
    dependency_structure,
    test_joint,
    test_pairwise_aggregate,
    test_subset,
)
from .ranks import solve_rank_map

__all__ = [
    "BlockedSample",
    "CacheMiss",
    "ChecksumMismatch",
    "NullCache",
    "NullDistribution",
    "ReferenceGrid",
    "TestReport",
    "WeightScheme",
    "bh_adjust",
    "default_grids",
    "dependency_structure",
    "fit_ica",
    "halton_grid",
    "iid_uniform_grid",
    "p_value",
    "quantile_cutoff",
    "rdcov_subset",
    "recovery_error",
    "rjdcov",
    "rjdcov_compact",
    "sample_ranks",
    "simulate_null",
    "solve_rank_map",
    "test_joint",
    "test_pairwise_aggregate",
    "test_subset",
]

__version__ = "0.1.0"
