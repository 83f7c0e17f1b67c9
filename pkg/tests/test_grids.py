import warnings

import numpy as np
import pytest

from rjdcov.grids import (
    ReferenceGrid,
    default_grids,
    halton_grid,
    iid_uniform_grid,
)


def van_der_corput(a, base):
    # Digit-reversal by repeated division, written independently.
    x, denom = 0.0, 1.0
    while a:
        a, digit = divmod(a, base)
        denom *= base
        x += digit / denom
    return x


def test_halton_matches_digit_reversal():
    g = halton_grid(50, 4)
    bases = [2, 3, 5, 7]
    expected = np.array([[van_der_corput(a, b) for b in bases] for a in range(1, 51)])
    np.testing.assert_allclose(g.points, expected, rtol=0, atol=1e-15)


def test_halton_known_prefix():
    assert halton_grid(4, 1).points.ravel().tolist() == [0.5, 0.25, 0.75, 0.125]
    np.testing.assert_allclose(halton_grid(3, 2).points[:, 1], [1 / 3, 2 / 3, 1 / 9])


def test_halton_points_distinct_and_inside():
    g = halton_grid(300, 3)
    assert np.unique(g.points, axis=0).shape[0] == 300
    assert np.all((g.points > 0) & (g.points < 1))


def test_high_dimension_warns():
    with pytest.warns(UserWarning):
        halton_grid(10, 9)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        halton_grid(10, 8)


def test_iid_grid_is_reproducible():
    a = iid_uniform_grid(20, 2, seed=5)
    b = iid_uniform_grid(20, 2, seed=5)
    c = iid_uniform_grid(20, 2, seed=6)
    assert a == b
    assert a != c
    assert a.token == "iid:5"


def test_default_grids_memoized():
    g1 = default_grids(30, (2, 3))
    g2 = default_grids(30, (2, 3))
    assert g1[0] is g2[0]
    assert [g.dim for g in g1] == [2, 3]
    with pytest.raises(ValueError):
        default_grids(30, (2,), kind="sobol")


def test_grid_validation():
    with pytest.raises(ValueError):
        ReferenceGrid(np.array([[0.5], [1.5]]), "halton")
    with pytest.raises(ValueError):
        halton_grid(0, 2)


def test_points_read_only():
    g = halton_grid(5, 2)
    with pytest.raises(ValueError):
        g.points[0, 0] = 0.0


def test_to_csv_round_trip():
    g = halton_grid(6, 2)
    lines = g.to_csv().strip().split("\n")
    assert lines[0] == "index,x1,x2"
    vals = np.array([[float(v) for v in line.split(",")[1:]] for line in lines[1:]])
    np.testing.assert_array_equal(vals, g.points)
