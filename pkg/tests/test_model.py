from itertools import product

import numpy as np
import pytest

from prodmix import jsonio
from prodmix.model import (MixtureModel, as_subset, exact_moment, hadamard_row, model_distance,
                           permute_components, random_model, row_gaps, separated_values,
                           separation_report)


def brute_force_moment(model, S):
    """Sum over hidden states and full bit assignments; independent of the Hadamard formula."""
    total = 0.0
    for j in range(model.k):
        for bits in product((0, 1), repeat=model.n):
            p = model.pi[j]
            for i, b in enumerate(bits):
                p *= model.M[i, j] if b else 1 - model.M[i, j]
            if all(bits[i] for i in S):
                total += p
    return total


@pytest.fixture
def small():
    return MixtureModel(pi=[0.5, 0.5], M=[[0.2, 0.8], [0.4, 0.6]])


def test_hadamard_row_examples(small):
    np.testing.assert_array_equal(hadamard_row(small, set()), [1.0, 1.0])
    np.testing.assert_allclose(hadamard_row(small, {0}), [0.2, 0.8])
    np.testing.assert_allclose(hadamard_row(small, {0, 1}), [0.08, 0.48])


def test_exact_moment_matches_enumeration(small):
    assert exact_moment(small, set()) == 1.0
    assert exact_moment(small, {0}) == pytest.approx(0.5, abs=1e-15)
    assert exact_moment(small, {0, 1}) == pytest.approx(0.28, abs=1e-15)
    for S in [{0}, {1}, {0, 1}]:
        assert exact_moment(small, S) == pytest.approx(brute_force_moment(small, S), abs=1e-14)


def test_exact_moment_random_model_against_enumeration():
    model = random_model(3, 4, 0.2, 0.1, seed=7)
    for S in [{0}, {1, 3}, {0, 2, 3}, {0, 1, 2, 3}]:
        assert exact_moment(model, S) == pytest.approx(brute_force_moment(model, S), abs=1e-13)


def test_out_of_range_bit(small):
    with pytest.raises(IndexError):
        exact_moment(small, {2})
    with pytest.raises(IndexError):
        as_subset([-1], 3)


def test_row_gaps():
    assert row_gaps(np.array([[0.2, 0.8]]))[0] == pytest.approx(0.6)
    assert row_gaps(np.array([[0.1, 0.5, 0.55]]))[0] == pytest.approx(0.05)
    rep = separation_report(MixtureModel(pi=[0.5, 0.5], M=[[0.3, 0.3]]))
    assert rep.per_row_gap[0] == 0.0
    assert rep.separated_rows(1e-9) == []


@pytest.mark.parametrize("bad", [
    dict(pi=[0.5, 0.6], M=[[0.1, 0.2]]),
    dict(pi=[1.0, 0.0], M=[[0.1, 0.2]]),
    dict(pi=[0.5, 0.5], M=[[0.1, 1.2]]),
    dict(pi=[0.5, 0.5], M=[[0.1, 0.2, 0.3]]),
])
def test_model_validation(bad):
    with pytest.raises(ValueError):
        MixtureModel(**bad)


def test_model_is_read_only(small):
    with pytest.raises(ValueError):
        small.M[0, 0] = 0.5


def test_random_model_k1():
    model = random_model(1, 2, 0.3, 0.1, seed=0)
    assert model.pi.tolist() == [1.0]
    assert model.M.shape == (2, 1)


def test_random_model_separation_and_floor():
    for seed in range(20):
        model = random_model(2, 5, 0.5, 0.2, seed=seed)
        assert np.all(np.abs(model.M[:, 0] - model.M[:, 1]) >= 0.5 - 1e-12)
        assert model.pi.min() >= 0.2 - 1e-12
    model = random_model(4, 6, 0.3, 0.05, separated_rows=2, seed=3)
    assert separation_report(model).separated_rows(0.3)[:2] == [0, 1]


def test_random_model_deterministic():
    a = random_model(3, 6, 0.2, 0.1, seed=11)
    b = random_model(3, 6, 0.2, 0.1, seed=11)
    np.testing.assert_array_equal(a.M, b.M)
    np.testing.assert_array_equal(a.pi, b.pi)


def test_random_model_rejects_infeasible_zeta():
    with pytest.raises(ValueError):
        random_model(3, 4, 0.6, 0.1, seed=0)


def test_separated_values_gap():
    rng = np.random.default_rng(0)
    for k in range(2, 7):
        v = separated_values(rng, k, 1.0 / (k - 1) * 0.9)
        assert np.min(np.diff(np.sort(v))) >= 0.9 / (k - 1) - 1e-12
        assert v.min() >= 0 and v.max() <= 1


def test_model_distance_examples():
    a = random_model(3, 4, 0.3, 0.1, seed=5)
    d = model_distance(a, a)
    assert d.max_param_error == 0 and d.permutation == (0, 1, 2)
    swapped = permute_components(a, (1, 0, 2))
    assert model_distance(swapped, a).max_param_error == 0
    assert model_distance(swapped, a).permutation == (1, 0, 2)

    wide = MixtureModel(pi=[0.4, 0.6], M=[[0.1, 0.9], [0.2, 0.8]])
    M = wide.M.copy()
    M[0, 0] += 0.01
    assert model_distance(MixtureModel(pi=wide.pi, M=M), wide).max_param_error == pytest.approx(0.01)


def test_json_round_trip(tmp_path, small):
    path = tmp_path / "m.json"
    small.save(path)
    loaded = MixtureModel.load(path)
    np.testing.assert_array_equal(loaded.M, small.M)
    np.testing.assert_array_equal(loaded.pi, small.pi)


def test_jsonio_seventeen_digits():
    assert jsonio.dumps(0.1, indent=None) == "0.10000000000000001"
    assert jsonio.dumps({"a": [1, 2.5]}, indent=None) == '{"a": [1, 2.5]}'
