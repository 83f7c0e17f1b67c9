import json

import numpy as np
import pytest

from rjdcov.clt import (
    AssumptionViolation,
    CenteredTensor,
    DegenerateVariance,
    center_order3_explicit,
    center_tensor,
    combinatorial_sum,
    normality_diagnostic,
    random_centered_tensor,
    sample_sums,
    variance_formula,
)


def test_centering_matches_explicit_formula():
    raw = np.random.default_rng(0).standard_normal((6, 6, 6))
    np.testing.assert_allclose(center_tensor(raw).entries, center_order3_explicit(raw), atol=1e-14)


def test_centered_slices_vanish():
    t = center_tensor(np.random.default_rng(1).random((5, 5, 5, 5)))
    assert t.max_slice_sum() < 1e-13


def test_variance_formula_by_enumeration():
    # Exact variance over all (n!)^2 permutation pairs for n = 4.
    import itertools

    t = random_centered_tensor(4, seed=3)
    perms = list(itertools.permutations(range(4)))
    vals = [combinatorial_sum(t, (np.array(p), np.array(q))) for p in perms for q in perms]
    assert np.mean(vals) == pytest.approx(0.0, abs=1e-14)
    assert np.var(vals) == pytest.approx(variance_formula(t), rel=1e-12)


def test_sample_sums_deterministic():
    t = random_centered_tensor(10, seed=0)
    a = sample_sums(t, 2500, seed=4)
    b = sample_sums(t, 2500, seed=4)
    assert np.array_equal(a, b)
    assert np.array_equal(a[:1000], sample_sums(t, 1000, seed=4))


def test_combinatorial_sum_checks():
    t = random_centered_tensor(5)
    with pytest.raises(ValueError):
        combinatorial_sum(t, (np.arange(5),))
    with pytest.raises(ValueError):
        combinatorial_sum(t, (np.arange(4), np.arange(4)))
    with pytest.raises(ValueError):
        variance_formula(center_tensor(np.ones((3, 3))))
    with pytest.raises(ValueError):
        CenteredTensor(np.zeros((2, 3)))


def test_diagnostic_report():
    rep = normality_diagnostic(random_centered_tensor(40, seed=1), draws=3000, seed=2)
    d = json.loads(rep.to_json())
    assert d["kind"] == "clt-check" and d["schema_version"] == 1
    assert abs(rep.empirical_var / rep.analytic_var - 1) < 0.1


def test_assumption_checks():
    big = CenteredTensor(center_tensor(np.random.default_rng(0).random((10, 10, 10))).entries * 100)
    with pytest.raises(AssumptionViolation):
        normality_diagnostic(big, draws=10)
    tiny = CenteredTensor(random_centered_tensor(10).entries * 1e-4)
    with pytest.raises(DegenerateVariance):
        normality_diagnostic(tiny, draws=10)
