"""Synthetic-bit bootstrapping of the higher moments of one target bit.

With A_1 the empty set, the vector ``v_r = m_t^r diag(pi) M[A]^T`` carries
the r-th moment of the target row's spike distribution in its first entry.
Coefficient vectors ``u_r`` (with ``u_r M[B] = m_t^r``) let each step
express a product of target copies through rows of B that are independent
of the target given the hidden state.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import GroundOverlap, HankelGateFailure, SingularC
from .subsets import build_C, family_sum, moment_block

SINGULAR_FLOOR = 1e-13


@dataclass
class BootstrapState:
    v: dict = field(default_factory=dict)
    u: dict = field(default_factory=dict)
    up: dict = field(default_factory=dict)
    strategy: str = "doubling"
    sigma_BA: float = float("nan")
    sigma_BpA: float = float("nan")

    def v_matrix(self, rows):
        return np.vstack([self.v[r] for r in rows])

    def to_dict(self):
        def dump(d):
            return {str(r): np.asarray(vec).tolist() for r, vec in sorted(d.items())}
        return {"strategy": self.strategy, "v": dump(self.v), "u": dump(self.u),
                "up": dump(self.up), "sigma_BA": self.sigma_BA, "sigma_BpA": self.sigma_BpA}


@dataclass(frozen=True)
class HankelMatrix:
    values: np.ndarray
    eigenvalues: np.ndarray

    @property
    def k(self):
        return self.values.shape[0] - 1

    @property
    def second_smallest(self):
        return float(self.eigenvalues[1])


@dataclass(frozen=True)
class GateResult:
    passed: bool
    second_smallest: float
    threshold: float

    def __bool__(self):
        return self.passed


def kron_vec(x, y):
    """(x (x) y)[l*k + j] = x[l] * y[j], the row-major order of ``family_sum``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    return np.kron(x, y)


class _RightSolver:
    """Computes x C^{-1} by LU solves against C^T; never forms the inverse."""

    def __init__(self, C, which):
        self.sigma = float(np.linalg.svd(C, compute_uv=False)[-1])
        if not self.sigma >= SINGULAR_FLOOR:
            raise SingularC(f"{which} is numerically singular (sigma_k={self.sigma:.3e})",
                            value=self.sigma, which=which)
        self._lu = scipy.linalg.lu_factor(C)

    def __call__(self, x):
        return scipy.linalg.lu_solve(self._lu, x, trans=1)


def _initial_vectors(oracle, A, target):
    cols = list(A.members)
    v0 = np.array([oracle(a) for a in cols])
    v1 = np.array([oracle(a | {target}) for a in cols])
    return v0, v1


def bootstrap_sequential(oracle, A, B, target):
    """One-step-at-a-time recursion: v_r = u_{r-1} C_{B+{t},A}, u_r = v_r C_BA^{-1}.

    v_0 and v_1 are read from the oracle directly. The target must lie
    outside both ground sets.
    """
    if target in A.ground or target in B.ground:
        raise GroundOverlap(f"target bit {target} must avoid the ground sets of A and B")
    k = len(A)
    C_BA = build_C(oracle, B, A)
    solve = _RightSolver(C_BA.values, "C_BA")
    C_shift = moment_block(oracle, [b | {target} for b in B.members], list(A.members))

    state = BootstrapState(strategy="sequential", sigma_BA=solve.sigma)
    state.v[0], state.v[1] = _initial_vectors(oracle, A, target)
    state.u[1] = solve(state.v[1])
    for r in range(2, 2 * k + 1):
        state.v[r] = state.u[r - 1] @ C_shift
        state.u[r] = solve(state.v[r])
    return state


def bootstrap_doubling(oracle, A, B, Bp, target):
    """Log-depth recursion using two coefficient families B and B'.

    v_{h+j} = (u_j (x) u'_h) C_{B+B',A} for h = 1, 2, 4, ... and j = 1..h,
    then u'_{2h} = v_{2h} C_B'A^{-1}; stops once v_{2k} exists. The first
    round (h = 1) produces v_2. The target may lie in ground(B) but not in
    ground(A) or ground(B').
    """
    if target in A.ground or target in Bp.ground:
        raise GroundOverlap(f"target bit {target} must avoid the ground sets of A and B'")
    k = len(A)
    C_BA = build_C(oracle, B, A)
    C_BpA = build_C(oracle, Bp, A)
    solve_B = _RightSolver(C_BA.values, "C_BA")
    solve_Bp = _RightSolver(C_BpA.values, "C_B'A")
    C_sum = moment_block(oracle, family_sum(B, Bp), list(A.members))

    state = BootstrapState(strategy="doubling", sigma_BA=solve_B.sigma, sigma_BpA=solve_Bp.sigma)
    state.v[0], state.v[1] = _initial_vectors(oracle, A, target)
    state.u[1] = solve_B(state.v[1])
    state.up[1] = solve_Bp(state.v[1])

    top = 2 * k
    half = 1
    while half < top:
        for j in range(1, half + 1):
            r = half + j
            if r > top:
                break
            state.v[r] = kron_vec(state.u[j], state.up[half]) @ C_sum
            state.u[r] = solve_B(state.v[r])
        if 2 * half < top:
            state.up[2 * half] = solve_Bp(state.v[2 * half])
        half *= 2
    return state


def bootstrap(oracle, selection, strategy=None):
    strategy = strategy or selection.strategy
    if strategy == "sequential":
        return bootstrap_sequential(oracle, selection.A, selection.B, selection.target_bit)
    if selection.Bp is None:
        raise ValueError("doubling strategy needs a B' family")
    return bootstrap_doubling(oracle, selection.A, selection.B, selection.Bp, selection.target_bit)


def assemble_hankel(state, k):
    """H[i, j] = first entry of v_{i+j}, for i, j = 0..k."""
    missing = [r for r in range(2 * k + 1) if r not in state.v]
    if missing:
        raise ValueError(f"bootstrap state lacks v_r for r in {missing}")
    mu = np.array([state.v[r][0] for r in range(2 * k + 1)])
    return hankel_from_moments(mu, k)


def hankel_from_moments(mu, k):
    mu = np.asarray(mu, dtype=float)
    values = scipy.linalg.hankel(mu[:k + 1], mu[k:2 * k + 1])
    return HankelMatrix(values=values, eigenvalues=np.linalg.eigvalsh(values))


def hankel_threshold(pi_min, zeta, k):
    return 0.5 * pi_min * (zeta / 16.0) ** (2 * k - 2)


def hankel_gate(H, pi_min, zeta):
    """Pass iff the second-smallest eigenvalue reaches (pi_min/2)(zeta/16)^(2k-2)."""
    threshold = hankel_threshold(pi_min, zeta, H.k)
    lam2 = H.second_smallest
    return GateResult(passed=bool(lam2 >= threshold), second_smallest=lam2, threshold=threshold)


def require_gate(H, pi_min, zeta):
    result = hankel_gate(H, pi_min, zeta)
    if not result.passed:
        raise HankelGateFailure(
            f"Hankel second-smallest eigenvalue {result.second_smallest:.3e} "
            f"below {result.threshold:.3e}", value=result.second_smallest)
    return result
