import numpy as np
import pytest

from prodmix.bootstrap import (assemble_hankel, bootstrap, bootstrap_doubling, bootstrap_sequential,
                               hankel_from_moments, hankel_gate, hankel_threshold, kron_vec,
                               require_gate)
from prodmix.errors import GroundOverlap, HankelGateFailure, SingularC
from prodmix.model import MixtureModel, exact_moment, hadamard_row, random_model
from prodmix.moments import MomentOracle
from prodmix.subsets import SubsetFamily, default_threshold, fixed_layout, select_families


def expected_v(model, A, target, r):
    At = np.vstack([hadamard_row(model, a) for a in A.members]).T
    return (model.M[target] ** r * model.pi) @ At


def test_kron_vec():
    np.testing.assert_array_equal(kron_vec([1, 2], [3, 4]), [3, 4, 6, 8])
    np.testing.assert_array_equal(kron_vec([1, 2], [0, 0]), np.zeros(4))
    np.testing.assert_array_equal(kron_vec([1, 0], [1, 0]), [1, 0, 0, 0])


def test_k1_scalar_recursion():
    model = MixtureModel(pi=[1.0], M=[[0.7]])
    empty = SubsetFamily((), [set()])
    state = bootstrap_sequential(MomentOracle.exact(model), empty, empty, 0)
    for r in range(3):
        assert state.v[r][0] == pytest.approx(0.7 ** r)


def test_sequential_second_moment_from_model():
    model = MixtureModel(pi=[0.5, 0.5], M=[[0.2, 0.8], [0.4, 0.6], [0.5, 0.5], [0.1, 0.7]])
    A = SubsetFamily((3,), [set(), {3}])
    B = SubsetFamily((1,), [set(), {1}])
    state = bootstrap_sequential(MomentOracle.exact(model), A, B, 0)
    assert state.v[2][0] == pytest.approx(float(np.sum(model.pi * model.M[0] ** 2)), abs=1e-14)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_doubling_matches_model(k):
    for seed in range(5):
        model = random_model(k, 3 * k - 3, 0.3, 0.1, seed=seed)
        oracle = MomentOracle.exact(model)
        _, S, T, Tp = fixed_layout(k)
        sel = select_families(oracle, S, T, Tp, k, 0.0)
        state = bootstrap(oracle, sel)
        assert sorted(state.v) == list(range(2 * k + 1))
        for r in range(2 * k + 1):
            np.testing.assert_allclose(state.v[r], expected_v(model, sel.A, sel.target_bit, r),
                                       atol=1e-9)


def test_doubling_k2_produces_v2_from_first_round():
    model = random_model(2, 3, 0.4, 0.2, seed=1)
    oracle = MomentOracle.exact(model)
    _, S, T, Tp = fixed_layout(2)
    sel = select_families(oracle, S, T, Tp, 2, 0.0)
    state = bootstrap_doubling(oracle, sel.A, sel.B, sel.Bp, sel.target_bit)
    assert set(state.v) == {0, 1, 2, 3, 4}
    np.testing.assert_allclose(state.v[2], expected_v(model, sel.A, sel.target_bit, 2), atol=1e-12)


def test_strategies_agree():
    k = 3
    model = random_model(k, 3 * k - 3, 0.3, 0.1, seed=4)
    oracle = MomentOracle.exact(model)
    _, S, T, Tp = fixed_layout(k)
    sel = select_families(oracle, S, T, Tp, k, 0.0)
    # sequential needs the target outside ground(B); use B' as its coefficient family
    seq = bootstrap_sequential(oracle, sel.A, sel.Bp, sel.target_bit)
    dbl = bootstrap_doubling(oracle, sel.A, sel.B, sel.Bp, sel.target_bit)
    for r in range(2 * k + 1):
        np.testing.assert_allclose(seq.v[r], dbl.v[r], atol=1e-9)


def test_target_overlap_rejected():
    model = random_model(2, 4, 0.4, 0.2, seed=0)
    oracle = MomentOracle.exact(model)
    A = SubsetFamily((2,), [set(), {2}])
    B = SubsetFamily((0,), [set(), {0}])
    with pytest.raises(GroundOverlap):
        bootstrap_sequential(oracle, A, B, 2)
    with pytest.raises(GroundOverlap):
        bootstrap_doubling(oracle, A, B, SubsetFamily((1,), [set(), {1}]), 1)


def test_singular_C_is_tagged():
    M = np.array([[0.3, 0.3], [0.2, 0.8], [0.6, 0.1]])
    oracle = MomentOracle.exact(MixtureModel(pi=[0.5, 0.5], M=M))
    A = SubsetFamily((2,), [set(), {2}])
    B = SubsetFamily((0,), [set(), {0}])
    Bp = SubsetFamily((1,), [set(), {1}])
    with pytest.raises(SingularC) as info:
        bootstrap_doubling(oracle, A, B, Bp, 0)
    assert info.value.which == "C_BA"
    assert info.value.stage == "linear-solve"


def test_hankel_exact_is_psd_rank_k():
    k = 3
    model = random_model(k, 3 * k - 3, 0.3, 0.1, seed=2)
    oracle = MomentOracle.exact(model)
    _, S, T, Tp = fixed_layout(k)
    sel = select_families(oracle, S, T, Tp, k, 0.0)
    H = assemble_hankel(bootstrap(oracle, sel), k)
    assert np.array_equal(H.values, H.values.T)
    assert abs(H.eigenvalues[0]) < 1e-10
    assert H.eigenvalues[1] > 1e-6


def test_hankel_k1():
    H = hankel_from_moments([1.0, 0.4, 0.16], 1)
    np.testing.assert_allclose(H.values, [[1, 0.4], [0.4, 0.16]])


def test_gate_threshold_formula():
    assert hankel_threshold(0.3, 0.5, 1) == pytest.approx(0.15)
    assert hankel_threshold(0.3, 0.5, 2) == pytest.approx(0.15 * (0.5 / 16) ** 2)


def test_gate_passes_separated_and_fails_duplicate():
    pi = np.array([0.4, 0.6])
    good = hankel_from_moments([float(np.sum(pi * np.array([0.1, 0.7]) ** r)) for r in range(5)], 2)
    assert hankel_gate(good, 0.3, 0.5).passed
    dup = hankel_from_moments([0.5 ** r for r in range(5)], 2)
    assert not hankel_gate(dup, 0.3, 0.5).passed
    with pytest.raises(HankelGateFailure) as info:
        require_gate(dup, 0.3, 0.5)
    assert info.value.stage == "hankel"


def test_nonseparated_target_fails_gate():
    base = random_model(2, 3, 0.4, 0.2, seed=0)
    M = np.vstack([base.M, [0.45, 0.45]])
    model = MixtureModel(pi=base.pi, M=M)
    oracle = MomentOracle.exact(model)
    _, S, T, Tp = fixed_layout(2)
    sel = select_families(oracle, S, T, Tp, 2, default_threshold(0.2, 0.4, 2), target=3)
    H = assemble_hankel(bootstrap(oracle, sel), 2)
    assert not hankel_gate(H, 0.2, 0.4).passed
    assert H.values[0, 1] == pytest.approx(exact_moment(model, {3}))
