"""From the target row's spike distribution to the full model.

Once the target row m_t and the weights pi are known, the bootstrapped
vectors give ``M[A]`` through a Vandermonde solve, the moment matrices give
``M[B]`` and ``M[B']``, and every other row follows from one linear solve
against a known family.
"""

from dataclasses import dataclass, field
import time

import numpy as np

from . import jsonio
from .bootstrap import assemble_hankel, bootstrap, require_gate
from .errors import (Exhausted, GroundOverlap, IdentificationFailure, SingularA,
                     SingularFamilyMatrix, SingularVandermonde, ZeroWeight)
from .model import MixtureModel
from .power import learn_power_distribution, moment_residual
from .subsets import build_C, default_threshold, iter_selections

VANDERMONDE_GAP = 1e-10
SOLVE_FLOOR = 1e-13


@dataclass
class RecoveredModel:
    model: MixtureModel
    diagnostics: dict = field(default_factory=dict)
    selection: object = None
    strategy: str = "doubling"
    search: str = "all_separated"

    def to_dict(self):
        out = self.model.to_dict()
        diag = dict(self.diagnostics)
        diag["strategy"] = self.strategy
        diag["search"] = self.search
        if self.selection is not None:
            diag["selection"] = self.selection.to_dict()
        out["diagnostics"] = diag
        return out

    def save(self, path):
        jsonio.dump(self.to_dict(), path)


def _check_weights(pi):
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0):
        raise ZeroWeight("nonpositive mixing weight cannot be inverted", value=float(pi.min()))
    return pi


def _sigma_min(X):
    return float(np.linalg.svd(X, compute_uv=False)[-1])


def vandermonde(m, rows=None):
    """Rows m^0, m^1, ..., m^(rows-1)."""
    m = np.asarray(m, dtype=float)
    rows = m.size if rows is None else rows
    return m[None, :] ** np.arange(rows)[:, None]


def recover_A(v, m1, pi):
    """M[A]^T (components by family members) from v_0..v_{k-1}, the target row and pi.

    Solves Vandermonde(m1) diag(pi) M[A]^T = [v_0; ...; v_{k-1}].
    """
    m1 = np.asarray(m1, dtype=float)
    pi = _check_weights(pi)
    k = m1.size
    if k > 1 and np.min(np.diff(np.sort(m1))) < VANDERMONDE_GAP:
        raise SingularVandermonde("recovered target row has (near) duplicate entries",
                                  value=float(np.min(np.diff(np.sort(m1)))))
    V = np.vstack([np.asarray(v[r], dtype=float) for r in range(k)])
    return np.linalg.solve(vandermonde(m1), V) / pi[:, None]


def recover_B(C, At, pi):
    """M[B] = C_BA (M[A]^T)^{-1} diag(pi)^{-1}; ``C`` is a MomentMatrixC or plain array."""
    values = getattr(C, "values", C)
    pi = _check_weights(pi)
    At = np.asarray(At, dtype=float)
    if _sigma_min(At) < SOLVE_FLOOR:
        raise SingularA("recovered M[A] is singular", value=_sigma_min(At))
    # X At = C  <=>  At^T X^T = C^T
    return np.linalg.solve(At.T, np.asarray(values).T).T / pi[None, :]


def recover_row(oracle, i, family, F, pi):
    """Row i from moments E[X_i X_F] against a family with known matrix F = M[family].

    Returns (clamped row, raw row).
    """
    if i in family.ground:
        raise GroundOverlap(f"bit {i} lies in the family's ground set")
    pi = _check_weights(pi)
    F = np.asarray(F, dtype=float)
    if _sigma_min(F) < SOLVE_FLOOR:
        raise SingularFamilyMatrix("family matrix is singular", value=_sigma_min(F))
    table = oracle.table([f | {i} for f in family.members])
    y = np.array([table[f | {i}] for f in family.members])
    # y = m_i diag(pi) F^T
    raw = np.linalg.solve(F, y) / pi
    return np.clip(raw, 0.0, 1.0), raw


def _time_ms(start):
    return 1000.0 * (time.perf_counter() - start)


def identify_from_selection(oracle, selection, zeta, pi_min, strategy=None,
                            check_gate=True, dump_bootstrap=None):
    """Run bootstrap, Hankel gate, spike recovery and linear solves for one selection."""
    n = oracle.n
    k = selection.k
    strategy = strategy or selection.strategy
    timings = {}

    t0 = time.perf_counter()
    state = bootstrap(oracle, selection, strategy)
    H = assemble_hankel(state, k)
    gate = require_gate(H, pi_min, zeta) if check_gate else None
    timings["bootstrap_ms"] = _time_ms(t0)
    if dump_bootstrap is not None:
        jsonio.dump(state.to_dict(), dump_bootstrap)

    t0 = time.perf_counter()
    spikes = learn_power_distribution(H, k)
    mu = H.values[0].tolist() + H.values[1:, k].tolist()
    residual = moment_residual(spikes, mu)
    timings["power_ms"] = _time_ms(t0)

    t0 = time.perf_counter()
    m_target = spikes.support
    pi_raw = spikes.weights
    pi_inv = np.maximum(pi_raw, 0.5 * pi_min)
    At = recover_A(state.v, m_target, pi_inv)
    A_mat = At.T

    rows = np.empty((n, k))
    raw_rows = np.empty((n, k))
    rows[selection.target_bit] = raw_rows[selection.target_bit] = m_target

    B_mat = recover_B(build_C(oracle, selection.B, selection.A), At, pi_inv)
    for i in range(n):
        if i == selection.target_bit:
            continue
        if i in selection.A.ground:
            rows[i], raw_rows[i] = recover_row(oracle, i, selection.B, B_mat, pi_inv)
        else:
            rows[i], raw_rows[i] = recover_row(oracle, i, selection.A, A_mat, pi_inv)
    timings["recover_ms"] = _time_ms(t0)

    pi_out = pi_inv / pi_inv.sum()
    excess = float(np.max(np.maximum(raw_rows - 1.0, 0.0) + np.maximum(-raw_rows, 0.0)))
    diagnostics = {
        "selection_score": selection.score,
        "target_bit": selection.target_bit,
        "sigma_k_C_BA": state.sigma_BA,
        "sigma_k_C_BpA": state.sigma_BpA if strategy == "doubling" else None,
        "hankel_lambda2": H.second_smallest,
        "hankel_threshold": None if gate is None else gate.threshold,
        "power_residual": residual,
        "cond_vandermonde": float(np.linalg.cond(vandermonde(m_target))),
        "cond_A": float(np.linalg.cond(A_mat)),
        "cond_B": float(np.linalg.cond(B_mat)),
        "pi_floor_active": bool(np.any(pi_raw < 0.5 * pi_min)),
        "clamp_excess": excess,
        "stage_times_ms": timings,
    }
    model = MixtureModel(pi=pi_out, M=rows)
    return RecoveredModel(model=model, diagnostics=diagnostics, selection=selection,
                          strategy=strategy)


def identify(oracle, n, k, zeta, pi_min, strategy="doubling", search="all_separated",
             threshold=None, threshold_exponent=10, dump_bootstrap=None):
    """Identify (pi, M) from moments; raises a stage-tagged IdentificationFailure.

    In exhaustive mode a selection that fails downstream (Hankel gate,
    spike recovery, linear solves) is skipped and the next triple is tried.
    If every selection fails, the first downstream failure is raised.
    """
    search = search.replace("-", "_")
    if threshold is None:
        threshold = default_threshold(pi_min, zeta, k, threshold_exponent)
    if n != oracle.n:
        raise ValueError(f"oracle has {oracle.n} bits, expected {n}")

    first_failure = None
    search_ms = 0.0
    selections = iter_selections(oracle, n, k, threshold, search, strategy)
    while True:
        t0 = time.perf_counter()
        selection = next(selections, None)
        search_ms += _time_ms(t0)
        if selection is None:
            break
        try:
            result = identify_from_selection(oracle, selection, zeta, pi_min, strategy,
                                             dump_bootstrap=dump_bootstrap)
        except IdentificationFailure as exc:
            if first_failure is None:
                first_failure = exc
            continue
        result.search = search
        result.diagnostics["stage_times_ms"]["search_ms"] = search_ms
        return result
    if first_failure is not None:
        raise first_failure
    raise Exhausted(f"no row triple passed selection (k={k}, n={n}, search={search})")
