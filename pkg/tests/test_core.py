import itertools

import numpy as np
import pytest

from _oracles import textbook_dcov2, textbook_higher_order
from rjdcov._kernels import esym_weighted_sum, esym_weighted_sum_numpy
from rjdcov.core import (
    BlockedSample,
    WeightScheme,
    centered_matrix,
    decomposition_to_csv,
    observed_matrices,
    rdcov_subset,
    rjdcov,
    rjdcov_compact,
    sample_ranks,
    subsets,
    theta_on_grids,
    tied_rank_points,
)
from rjdcov.grids import default_grids, halton_grid
from rjdcov.ranks import rank_points, solve_rank_map


def random_sample(seed, n=20, dims=(2, 1, 3)):
    rng = np.random.default_rng(seed)
    return BlockedSample(tuple(rng.standard_normal((n, d)) for d in dims))


def test_centered_matrix_rows_sum_to_zero():
    E = centered_matrix(np.random.default_rng(0).random((12, 2)))
    np.testing.assert_allclose(E.sum(axis=0), 0, atol=1e-13)
    np.testing.assert_allclose(E.sum(axis=1), 0, atol=1e-13)
    np.testing.assert_allclose(E, E.T)


@pytest.mark.parametrize("seed", range(10))
def test_pair_matches_textbook_dcov(seed):
    s = random_sample(seed, n=15, dims=(2, 3))
    grids = default_grids(15, s.block_dims)
    pts = [rank_points(solve_rank_map(b, g), g) for b, g in zip(s.blocks, grids)]
    mats = observed_matrices(s, grids, sample_ranks(s, grids))
    got = rdcov_subset(mats, (0, 1)).value
    assert got == pytest.approx(textbook_dcov2(*pts), abs=1e-12)
    assert got >= 0


@pytest.mark.parametrize("seed", range(5))
def test_triple_matches_textbook(seed):
    s = random_sample(seed, n=12)
    grids = default_grids(12, s.block_dims)
    pts = [rank_points(solve_rank_map(b, g), g) for b, g in zip(s.blocks, grids)]
    mats = observed_matrices(s, grids, sample_ranks(s, grids))
    assert rdcov_subset(mats, (0, 1, 2)).value == pytest.approx(
        textbook_higher_order(pts), abs=1e-12
    )


@pytest.mark.parametrize("c", [0.0, 0.5, 1.0, 2.0])
def test_compact_form_identity(c):
    for seed in range(10):
        s = random_sample(seed)
        total, dec = rjdcov(s, weights=WeightScheme.geometric(c))
        expected = sum(c ** (3 - st.size) * st.value for st in dec)
        assert abs(rjdcov_compact(s, c=c) - expected) <= 1e-10
        assert abs(total - expected) <= 1e-10


def test_kernel_matches_numpy_reference():
    rng = np.random.default_rng(3)
    n, r = 17, 4
    mats = np.stack([centered_matrix(rng.random((n, 2))) for _ in range(r)])
    rhos = np.stack([rng.permutation(n) for _ in range(r)]).astype(np.int64)
    coef = np.array([0, 0, 1.0, 0.3, 0.7])
    assert esym_weighted_sum(mats, rhos, coef) == pytest.approx(
        esym_weighted_sum_numpy(mats, rhos, coef), rel=1e-12
    )


def test_elementary_symmetric_expansion_by_subsets():
    rng = np.random.default_rng(4)
    n, r = 10, 4
    mats = np.stack([centered_matrix(rng.random((n, 1))) for _ in range(r)])
    rhos = np.tile(np.arange(n), (r, 1)).astype(np.int64)
    coef = np.array([0, 0, 2.0, 0.5, 1.0])
    brute = 0.0
    for k in range(2, r + 1):
        for S in itertools.combinations(range(r), k):
            brute += coef[k] * rdcov_subset(list(mats), S).value
    assert esym_weighted_sum(mats, rhos, coef) / n**2 == pytest.approx(brute, rel=1e-12)


def test_shared_row_permutation_invariance_is_exact():
    s = random_sample(5, n=30)
    order = np.random.default_rng(9).permutation(30)
    assert rjdcov(s).total == rjdcov(s.reorder(order)).total


def test_monotone_marginal_invariance():
    rng = np.random.default_rng(6)
    x, y = rng.standard_normal(25), rng.standard_normal(25)
    a = rjdcov(BlockedSample((x, y + x))).total
    b = rjdcov(BlockedSample((np.exp(x), (y + x) ** 3))).total
    assert a == b


def test_theta_on_grids_equals_observed_for_tie_free_data():
    s = random_sample(7, n=18)
    grids = default_grids(18, s.block_dims)
    perms = sample_ranks(s, grids)
    w = WeightScheme.geometric(0.5)
    assert theta_on_grids(perms, grids, w) == pytest.approx(rjdcov(s, weights=w).total, rel=1e-13)


def test_constant_block_gives_zero():
    rng = np.random.default_rng(8)
    s = BlockedSample((rng.standard_normal((20, 2)), np.ones((20, 1)), rng.standard_normal(20)))
    total, dec = rjdcov(s)
    pair_02 = [st.value for st in dec if st.subset == (0, 2)][0]
    assert total == pytest.approx(pair_02, abs=1e-15)
    for st in dec:
        if 1 in st.subset:
            assert st.value == pytest.approx(0.0, abs=1e-15)


def test_tied_rows_share_mean_rank():
    grid = halton_grid(4, 1)
    block = np.array([[1.0], [1.0], [2.0], [0.0]])
    perm = solve_rank_map(block, grid).perm
    pts = tied_rank_points(block, grid, perm)
    assert pts[0, 0] == pts[1, 0]
    assert pts[0, 0] == pytest.approx(grid.points[perm[:2], 0].mean())


def test_weights():
    assert WeightScheme.geometric(2.0).coefficients(4).tolist() == [0, 0, 4.0, 2.0, 1.0]
    assert WeightScheme.pairwise(3).coefficients(3).tolist() == [0, 0, 1.0, 0.0]
    assert WeightScheme.geometric(0).coefficients(3).tolist() == [0, 0, 0.0, 1.0]
    with pytest.raises(ValueError):
        WeightScheme.explicit([1.0]).coefficients(3)
    with pytest.raises(ValueError):
        WeightScheme.geometric(-1)
    with pytest.raises(ValueError):
        WeightScheme(c=1.0, weights=(1.0,))


def test_subsets_order_and_limit():
    assert subsets(3) == [(0, 1), (0, 2), (1, 2), (0, 1, 2)]
    assert len(subsets(5)) == 2**5 - 5 - 1
    with pytest.raises(ValueError):
        subsets(13)


def test_blocked_sample_validation():
    with pytest.raises(ValueError):
        BlockedSample((np.zeros(5),))
    with pytest.raises(ValueError):
        BlockedSample((np.zeros(5), np.zeros(6)))
    s = BlockedSample.from_array(np.arange(12.0).reshape(3, 4), (1, 3), labels=("a", "b"))
    assert s.block_dims == (1, 3)
    assert s.select([1, 0]).labels == ("b", "a")
    np.testing.assert_array_equal(s.to_array(), np.arange(12.0).reshape(3, 4))


def test_decomposition_csv():
    s = random_sample(1, n=10)
    w = WeightScheme.geometric(1.0)
    total, dec = rjdcov(s, weights=w)
    text = decomposition_to_csv(dec, w, 3)
    lines = text.strip().split("\n")
    assert lines[0] == "subset,size,rdcov2,weight,contribution"
    assert lines[-1].startswith("X1+X2+X3,3,")
    contrib = sum(float(line.split(",")[-1]) for line in lines[1:])
    assert contrib == pytest.approx(total, rel=1e-12)
