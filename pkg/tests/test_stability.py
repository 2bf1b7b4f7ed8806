import math

import numpy as np
import pytest

from prodmix.stability import (beta, beta_exceeds_zeta_power, beta_k2, inverse_perturbation_check,
                               lagrange_coeff_norm, lagrange_norm_bound, stability_suite,
                               subset_product_matrix, vandermonde_inverse_norm,
                               verify_core_stability)


def test_beta_values():
    assert beta(0.7, 1) == pytest.approx(1 / 3)
    assert beta(0.2, 3) == pytest.approx(0.01 / 81)
    assert beta(0.5, 2) == pytest.approx(0.25 / 24)
    assert beta_k2(1.0, 2) == pytest.approx(1 / 24)
    with pytest.raises(ValueError):
        beta(0.0, 2)


def test_beta_against_zeta_power():
    for k in range(1, 40):
        for zeta in np.linspace(0.05, 0.43, 9):
            assert beta_exceeds_zeta_power(zeta, k)
    assert not beta_exceeds_zeta_power(0.5, 2)
    assert not beta_exceeds_zeta_power(0.44, 3)


def test_lagrange_examples():
    assert lagrange_coeff_norm([0, 1], 1) == pytest.approx(1.0)
    assert lagrange_coeff_norm([0, 1], 0) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    for k in range(2, 6):
        v = rng.permutation(np.arange(k) * 0.2 + 0.05)
        for i in range(k):
            assert lagrange_coeff_norm(v, i) <= lagrange_norm_bound(0.2, k)


def test_subset_product_matrix():
    mat = subset_product_matrix([[0.2, 0.8], [0.5, 0.5]])
    np.testing.assert_allclose(mat, [[1, 1], [0.2, 0.8], [0.5, 0.5], [0.1, 0.4]])


def test_core_stability_small_cases():
    rep = verify_core_stability(np.zeros((0, 1)))
    assert rep.sigma_k_observed == pytest.approx(1.0) and rep.passed
    rep = verify_core_stability([[0.0, 1.0]], zeta=1.0)
    golden = (math.sqrt(5) - 1) / 2
    assert rep.sigma_k_observed == pytest.approx(golden)
    assert rep.passed
    # also clears the bound computed with the k^2 variant of beta
    assert golden >= beta_k2(1.0, 2) ** 2 / 4 / 2
    with pytest.raises(ValueError):
        verify_core_stability([[0.1, 0.15]], zeta=0.2)


def test_inverse_perturbation():
    res = inverse_perturbation_check(np.eye(3), 1.1 * np.eye(3))
    assert res.diff_norm == pytest.approx(0.1 / 1.1)
    assert res.passed
    res = inverse_perturbation_check(np.eye(2), np.eye(2))
    assert res.diff_norm == 0 and res.passed
    res = inverse_perturbation_check(np.eye(2), np.zeros((2, 2)))
    assert res.passed is None and not res.hypothesis_holds


def test_vandermonde_norm():
    check = vandermonde_inverse_norm([0.0, 1.0])
    assert check.norm == pytest.approx(math.sqrt((3 + math.sqrt(5)) / 2))
    assert check.passed and check.bound == 4
    one = vandermonde_inverse_norm([0.3])
    assert one.norm == pytest.approx(1.0) and one.bound == 2
    with pytest.raises(ValueError):
        vandermonde_inverse_norm([0.3, 0.3])


def test_suite_small_sweep_is_clean():
    out = stability_suite(n_instances=120, seed=3)
    assert out["total_violations"] == 0
    for check in out["checks"].values():
        assert check["instances"] == 120 and check["worst_margin"] >= 1.0
