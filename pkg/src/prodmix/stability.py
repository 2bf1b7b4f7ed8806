"""Numerical checks of the conditioning bounds behind identification.

These are refutation tests, not proofs: each check evaluates a bound on
concrete instances and reports whether it held and by what margin.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import CheckFailed
from .model import row_gaps, separated_values
from .subsets import fos_bound, fos_column_select, power_set

INTERP_TOL = 1e-9


def _check_domain(zeta, k):
    if not (0 < zeta <= 1):
        raise ValueError(f"zeta must lie in (0, 1], got {zeta}")
    if k < 1:
        raise ValueError("k must be >= 1")


def beta(zeta, k):
    """(zeta/2)^(k-1) / (3 k^3), the separation constant behind every sigma_k lower bound."""
    _check_domain(zeta, k)
    return (zeta / 2.0) ** (k - 1) / (3.0 * k ** 3)


def beta_k2(zeta, k):
    """Variant with a k^2 denominator; larger than :func:`beta`, reported for comparison."""
    _check_domain(zeta, k)
    return (zeta / 2.0) ** (k - 1) / (3.0 * k ** 2)


def beta_exceeds_zeta_power(zeta, k):
    """Whether beta(zeta, k) >= zeta^(3k).

    Holds for every k once zeta <= 0.43 (k = 3 is the binding case);
    fails at e.g. zeta = 0.5, k = 2.
    """
    return beta(zeta, k) >= zeta ** (3 * k)


def lagrange_coeff_norm(v, i):
    """sum_j j |c_j| for the monomial coefficients c_j of the Lagrange polynomial p_{v,i}.

    p_{v,i} is 1 at v[i] and 0 at the other entries of v.
    """
    v = np.asarray(v, dtype=float)
    if len(np.unique(v)) != v.size:
        raise ValueError("interpolation nodes must be distinct")
    others = np.delete(v, i)
    coeffs = P.polyfromroots(others) / np.prod(v[i] - others) if others.size else np.ones(1)
    values = P.polyval(v, coeffs)
    expected = np.zeros(v.size)
    expected[i] = 1.0
    if np.max(np.abs(values - expected)) > INTERP_TOL:
        raise CheckFailed("Lagrange polynomial misses its interpolation conditions")
    return float(np.sum(np.arange(coeffs.size) * np.abs(coeffs)))


def lagrange_norm_bound(zeta, k):
    return (k - 1) * (2.0 / zeta) ** (k - 1)


def subset_product_matrix(rows):
    """M[2^S]: one row per subset of the given rows (empty set first), entries the Hadamard products."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    k = rows.shape[1]
    out = []
    for R in power_set(range(rows.shape[0])):
        prod = np.ones(k)
        for r in R:
            prod = prod * rows[r]
        out.append(prod)
    return np.vstack(out)


@dataclass
class StabilityReport:
    k: int
    zeta: float
    beta: float
    beta_k2: float
    sigma_k_observed: float
    sigma_k_bound: float
    sigma_max_observed: float
    sigma_max_bound: float
    submatrix_sigma_k: float
    submatrix_bound: float
    fos_sigma_k: float
    fos_bound: float
    passes: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.passes.values())


def verify_core_stability(rows, zeta=None):
    """Check the sigma bounds for M[2^S] built from k-1 zeta-separated rows of length k."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1) if rows.size else rows.reshape(0, 1)
    k = rows.shape[1]
    if rows.shape[0] != k - 1:
        raise ValueError(f"need k-1={k - 1} rows of length k={k}, got {rows.shape[0]}")
    gaps = row_gaps(rows) if rows.shape[0] else np.array([np.inf])
    observed_zeta = float(np.min(gaps)) if k > 1 else 1.0
    if zeta is None:
        zeta = min(observed_zeta, 1.0)
    elif observed_zeta < zeta - 1e-12:
        raise ValueError(f"rows are only {observed_zeta:.3g}-separated, not {zeta}")

    b = beta(zeta, k)
    mat = subset_product_matrix(rows)
    sv = np.linalg.svd(mat, compute_uv=False)
    sigma_k, sigma_max = float(sv[k - 1]), float(sv[0])
    sigma_k_bound = b ** k * 2.0 ** (-k) / k
    sigma_max_bound = k * 2.0 ** (k - 1)

    # best k rows that include the all-ones row (empty subset)
    best = -1.0
    for rest in combinations(range(1, mat.shape[0]), k - 1):
        sel = (0,) + rest
        best = max(best, float(np.linalg.svd(mat[list(sel)], compute_uv=False)[-1]))
    sub_bound = b ** k * 2.0 ** (-1.5 * k) * k ** -1.5

    cols = fos_column_select(mat.T)
    fos_sigma = float(np.linalg.svd(mat[list(cols)], compute_uv=False)[-1])
    fos_required = fos_bound(sigma_k, k, mat.shape[0]) if mat.shape[0] > k else sigma_k

    passes = {
        "sigma_k": sigma_k >= sigma_k_bound,
        "sigma_max": sigma_max <= sigma_max_bound,
        "submatrix": best >= sub_bound,
        "fos": fos_sigma >= fos_required * (1 - 1e-12),
    }
    return StabilityReport(k, float(zeta), b, beta_k2(zeta, k), sigma_k, sigma_k_bound,
                           sigma_max, sigma_max_bound, best, sub_bound, fos_sigma,
                           fos_required, passes)


@dataclass
class InversePerturbationResult:
    hypothesis_holds: bool
    diff_norm: float
    diff_bound: float
    inv_norm: float
    inv_bound: float
    passed: bool  # None when the hypothesis fails

    @property
    def diff_ratio(self):
        return self.diff_norm / self.diff_bound if self.diff_bound > 0 else 0.0


def inverse_perturbation_check(M, Mt):
    """||Mt^-1 - M^-1|| <= 2 ||M^-1||^2 ||Mt - M|| and ||Mt^-1|| <= 2 ||M^-1||.

    Only meaningful when ||Mt - M|| <= sigma_min(M) / 2; otherwise
    ``passed`` is None.
    """
    M = np.asarray(M, dtype=float)
    Mt = np.asarray(Mt, dtype=float)
    sigma_min = float(np.linalg.svd(M, compute_uv=False)[-1])
    if sigma_min == 0:
        raise ValueError("M must be invertible")
    eps = float(np.linalg.norm(Mt - M, 2))
    hypothesis = eps <= sigma_min / 2
    inv_norm_M = 1.0 / sigma_min
    diff_bound = 2.0 * inv_norm_M ** 2 * eps
    inv_bound = 2.0 * inv_norm_M
    if not hypothesis:
        return InversePerturbationResult(False, float("nan"), diff_bound, float("nan"),
                                         inv_bound, None)
    Mt_inv = np.linalg.inv(Mt)
    diff = float(np.linalg.norm(Mt_inv - np.linalg.inv(M), 2))
    inv_norm = float(np.linalg.norm(Mt_inv, 2))
    slack = 1 + 1e-10
    passed = diff <= diff_bound * slack and inv_norm <= inv_bound * slack
    return InversePerturbationResult(True, diff, diff_bound, inv_norm, inv_bound, bool(passed))


@dataclass
class VandermondeCheck:
    norm: float
    bound: float
    zeta: float

    @property
    def passed(self):
        return self.norm <= self.bound


def vandermonde_inverse_norm(m):
    """Operator norm of the inverse of the Vandermonde matrix with rows m^0..m^(k-1), against 2^k / zeta^(k-1)."""
    m = np.asarray(m, dtype=float)
    k = m.size
    if len(np.unique(m)) != k:
        raise ValueError("Vandermonde nodes must be distinct")
    zeta = float(np.min(np.diff(np.sort(m)))) if k > 1 else 1.0
    V = m[None, :] ** np.arange(k)[:, None]
    norm = 1.0 / float(np.linalg.svd(V, compute_uv=False)[-1])
    return VandermondeCheck(norm=norm, bound=2.0 ** k / zeta ** (k - 1), zeta=zeta)


def _tally():
    return {"instances": 0, "violations": 0, "worst_margin": float("inf")}


def _record(tally, passed, margin):
    tally["instances"] += 1
    tally["violations"] += int(not passed)
    tally["worst_margin"] = min(tally["worst_margin"], float(margin))


def stability_suite(n_instances=1000, seed=0, zeta=0.2, k_values=(2, 3, 4), vdm_k_values=(2, 3, 4, 5)):
    """Seeded Monte-Carlo sweep of every bound check.

    Margins are observed/bound for lower bounds and bound/observed for
    upper bounds, so a margin below 1 is a violation.
    """
    rng = np.random.default_rng(seed)
    checks = {name: _tally() for name in (
        "core_sigma_k", "core_sigma_max", "core_submatrix", "fos_core", "fos_random",
        "inverse_perturbation", "vandermonde", "lagrange")}

    for t in range(n_instances):
        k = k_values[t % len(k_values)]
        z = min(zeta, 1.0 / (k - 1)) if k > 1 else zeta
        rows = np.vstack([separated_values(rng, k, z) for _ in range(k - 1)]) if k > 1 \
            else np.zeros((0, 1))
        rep = verify_core_stability(rows, z)
        _record(checks["core_sigma_k"], rep.passes["sigma_k"], rep.sigma_k_observed / rep.sigma_k_bound)
        _record(checks["core_sigma_max"], rep.passes["sigma_max"],
                rep.sigma_max_bound / rep.sigma_max_observed)
        _record(checks["core_submatrix"], rep.passes["submatrix"],
                rep.submatrix_sigma_k / rep.submatrix_bound)
        _record(checks["fos_core"], rep.passes["fos"], rep.fos_sigma_k / rep.fos_bound)

        c = int(rng.integers(k + 1, 11))
        X = rng.standard_normal((k, c))
        sel = fos_column_select(X)
        s_all = np.linalg.svd(X, compute_uv=False)[k - 1]
        s_sel = np.linalg.svd(X[:, list(sel)], compute_uv=False)[-1]
        need = fos_bound(s_all, k, c)
        _record(checks["fos_random"], s_sel >= need * (1 - 1e-12), s_sel / need)

        d = int(rng.integers(2, 6))
        s = np.sort(rng.uniform(0, 1, d))[::-1]
        s_min = 10.0 ** rng.uniform(-3, 0)
        s[-1] = s_min
        s = np.maximum(s, s_min)
        U, _ = np.linalg.qr(rng.standard_normal((d, d)))
        W, _ = np.linalg.qr(rng.standard_normal((d, d)))
        Mx = U @ np.diag(s) @ W.T
        E = rng.standard_normal((d, d))
        E *= (s_min / 4) / np.linalg.norm(E, 2)
        res = inverse_perturbation_check(Mx, Mx + E)
        _record(checks["inverse_perturbation"], bool(res.passed),
                min(res.diff_bound / max(res.diff_norm, 1e-300), res.inv_bound / res.inv_norm))

        kv = vdm_k_values[t % len(vdm_k_values)]
        zv = min(zeta, 1.0 / (kv - 1))
        m = separated_values(rng, kv, zv)
        vc = vandermonde_inverse_norm(m)
        _record(checks["vandermonde"], vc.passed, vc.bound / vc.norm)
        i = int(rng.integers(kv))
        norm = lagrange_coeff_norm(m, i)
        bound = lagrange_norm_bound(zv, kv)
        _record(checks["lagrange"], norm <= bound, bound / norm if norm > 0 else float("inf"))

    return {"n_instances": n_instances, "seed": seed, "zeta": zeta, "checks": checks,
            "total_violations": sum(c["violations"] for c in checks.values())}
