import numpy as np
import pytest

from prodmix.errors import (Exhausted, GroundOverlap, IdentificationFailure, SingularFamilyMatrix,
                            STAGES)
from prodmix.model import MixtureModel, hadamard_row, model_distance, random_model
from prodmix.moments import MomentOracle, draw_samples
from prodmix.bootstrap import bootstrap
from prodmix.recover import identify, identify_from_selection, recover_A, recover_B, recover_row
from prodmix.subsets import SubsetFamily, build_C, fixed_layout, select_families


def _selection(model, k):
    oracle = MomentOracle.exact(model)
    _, S, T, Tp = fixed_layout(k)
    return oracle, select_families(oracle, S, T, Tp, k, 0.0)


def test_recover_A_k1():
    At = recover_A({0: np.array([1.0])}, np.array([0.4]), np.array([1.0]))
    np.testing.assert_allclose(At, [[1.0]])


@pytest.mark.parametrize("k", [2, 3])
def test_recover_A_and_B_against_model(k):
    model = random_model(k, 3 * k - 3, 0.3, 0.1, seed=k)
    oracle, sel = _selection(model, k)
    state = bootstrap(oracle, sel)
    m = model.M[sel.target_bit]
    At = recover_A(state.v, m, model.pi)
    MA = np.vstack([hadamard_row(model, a) for a in sel.A])
    np.testing.assert_allclose(At.T, MA, atol=1e-8)
    np.testing.assert_allclose(At[:, 0], 1.0, atol=1e-8)
    for fam in (sel.B, sel.Bp):
        MB = recover_B(build_C(oracle, fam, sel.A), At, model.pi)
        np.testing.assert_allclose(MB, np.vstack([hadamard_row(model, b) for b in fam]), atol=1e-8)


def test_recover_row_always_one():
    base = random_model(2, 3, 0.4, 0.2, seed=0)
    model = MixtureModel(pi=base.pi, M=np.vstack([base.M, [1.0, 1.0]]))
    oracle = MomentOracle.exact(model)
    A = SubsetFamily((2,), [set(), {2}])
    F = np.vstack([hadamard_row(model, a) for a in A])
    clamped, raw = recover_row(oracle, 3, A, F, model.pi)
    np.testing.assert_allclose(clamped, [1.0, 1.0], atol=1e-12)
    with pytest.raises(GroundOverlap):
        recover_row(oracle, 2, A, F, model.pi)
    with pytest.raises(SingularFamilyMatrix):
        recover_row(oracle, 3, A, np.ones((2, 2)), model.pi)


@pytest.mark.parametrize("strategy", ["doubling", "sequential"])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_identify_exact(k, strategy):
    for seed in range(5):
        n = max(3 * k - 3, 2 * k - 1, 1) + 2
        model = random_model(k, n, 0.3 if k > 1 else 0.5, 0.1, seed=seed)
        result = identify(MomentOracle.exact(model), n, k, 0.3, 0.1, strategy=strategy)
        assert model_distance(result.model, model).max_param_error <= 1e-8


def test_identify_perturbed():
    for seed in range(10):
        k = 2 + seed % 2
        model = random_model(k, 3 * k - 3, 0.3, 0.1, seed=seed)
        oracle = MomentOracle.perturbed(model, 1e-10, seed=seed)
        result = identify(oracle, model.n, k, 0.3, 0.1)
        assert model_distance(result.model, model).max_param_error <= 1e-4


def test_identify_empirical():
    model = random_model(2, 3, 0.5, 0.3, seed=0)
    oracle = MomentOracle.empirical(draw_samples(model, 10 ** 6, seed=0))
    result = identify(oracle, 3, 2, 0.5, 0.3)
    assert model_distance(result.model, model).max_param_error <= 0.05


def test_rows_split_between_families():
    k = 3
    model = random_model(k, 3 * k - 3 + 2, 0.3, 0.1, seed=9)
    result = identify(MomentOracle.exact(model), model.n, k, 0.3, 0.1)
    sel = result.selection
    assert set(sel.A.ground).isdisjoint(sel.B.ground)
    assert model_distance(result.model, model).max_param_error <= 1e-8


def test_identify_routes_around_bad_row():
    k = 2
    base = random_model(k, 3, 0.4, 0.2, seed=1)
    model = MixtureModel(pi=base.pi, M=np.vstack([[0.3, 0.3], base.M]))
    with pytest.raises(IdentificationFailure):
        identify(MomentOracle.exact(model), 4, k, 0.4, 0.2, search="all_separated")
    result = identify(MomentOracle.exact(model), 4, k, 0.4, 0.2, search="exhaustive")
    assert model_distance(result.model, model).max_param_error <= 1e-6


def test_duplicate_components_fail_in_selection():
    M = np.array([[0.2, 0.2], [0.6, 0.6], [0.9, 0.9]])
    model = MixtureModel(pi=[0.5, 0.5], M=M)
    with pytest.raises(Exhausted) as info:
        identify(MomentOracle.exact(model), 3, 2, 0.3, 0.1, search="exhaustive")
    assert info.value.stage == "selection" and info.value.stage in STAGES


def test_diagnostics_and_dump(tmp_path):
    model = random_model(2, 4, 0.4, 0.2, seed=3)
    dump = tmp_path / "boot.json"
    oracle, sel = _selection(model, 2)
    result = identify_from_selection(oracle, sel, 0.4, 0.2, dump_bootstrap=dump)
    assert dump.exists()
    diag = result.to_dict()["diagnostics"]
    for key in ("selection_score", "hankel_lambda2", "hankel_threshold", "power_residual",
                "cond_vandermonde", "pi_floor_active", "stage_times_ms", "selection"):
        assert key in diag
    assert diag["hankel_lambda2"] >= diag["hankel_threshold"]


def test_exhaustive_search_dominates_runtime():
    k = 3
    base = random_model(k, 3 * k - 3, 0.25, 0.1, seed=0)
    rng = np.random.default_rng(0)
    M = np.vstack([np.repeat(rng.random((4, 1)), k, axis=1), base.M])
    model = MixtureModel(pi=base.pi, M=M)
    result = identify(MomentOracle.exact(model), 10, k, 0.25, 0.1, search="exhaustive")
    t = result.diagnostics["stage_times_ms"]
    assert t["search_ms"] > t["bootstrap_ms"] + t["power_ms"] + t["recover_ms"]
    assert model_distance(result.model, model).max_param_error <= 1e-6
