"""Recovering a k-spike distribution on [0, 1] from its first 2k moments.

Matrix-pencil approach: with ``mu_r = sum_j w_j x_j^r``, the Hankel blocks
``H0[i, j] = mu_{i+j}`` and ``H1[i, j] = mu_{i+j+1}`` (i, j < k) factor as
``V diag(w) V^T`` and ``V diag(w x) V^T``, so the generalized eigenvalues
of (H1, H0) are the support points.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .bootstrap import HankelMatrix, hankel_from_moments
from .errors import ComplexEigenvalue, DegenerateHankel

WEIGHT_TOL = 1e-9
IMAG_TOL = 1e-6
DEGENERATE_FLOOR = 1e-15
REFINE_STEPS = 6
REFINE_SLACK = 0.01


@dataclass(frozen=True)
class SpikeDistribution:
    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = np.clip(np.asarray(self.support, dtype=float).reshape(-1), 0.0, 1.0)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if support.size != weights.size:
            raise ValueError("support and weights differ in length")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must be nonnegative and sum to 1")
        order = np.argsort(support, kind="stable")
        object.__setattr__(self, "support", support[order])
        object.__setattr__(self, "weights", weights[order])

    @property
    def k(self):
        return self.support.size


@dataclass(frozen=True)
class MomentSequence:
    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        if mu.size == 0 or abs(mu[0] - 1.0) > 1e-12:
            raise ValueError("mu_0 must equal 1")
        object.__setattr__(self, "mu", mu)

    def hankel(self, k):
        if self.mu.size < 2 * k + 1:
            raise ValueError(f"need {2 * k + 1} moments for k={k}")
        return hankel_from_moments(self.mu, k)


def spike_moments(d, r_max):
    """mu_r = sum_j w_j x_j^r for r = 0..r_max."""
    if r_max < 0:
        raise ValueError("r_max must be >= 0")
    powers = d.support[None, :] ** np.arange(r_max + 1)[:, None]
    return MomentSequence(powers @ d.weights)


def _moments_of(H):
    values = H.values if isinstance(H, HankelMatrix) else np.asarray(H, dtype=float)
    k = values.shape[0] - 1
    return np.concatenate([values[0, :], values[1:, k]]), values, k


def _averaged_moments(values):
    """mu_r as the mean of the r-th anti-diagonal, r = 0..2k."""
    flipped = np.fliplr(values)
    size = values.shape[0]
    return np.array([np.mean(np.diagonal(flipped, size - 1 - r)) for r in range(2 * size - 1)])


def _refine(support, weights, mu, steps=REFINE_STEPS):
    """Gauss-Newton on all moments; keeps the iterate with the smallest residual.

    Anti-diagonal r of a (k+1)-square Hankel matrix averages
    min(r, 2k - r) + 1 entries, so residuals are weighted by the square root
    of that count.
    """
    r = np.arange(mu.size)[:, None]
    half = (mu.size - 1) // 2
    scale = np.sqrt(np.minimum(r, 2 * half - r) + 1.0)

    def residual(s, w):
        return scale[:, 0] * ((s[None, :] ** r) @ w - mu)

    best = (support, weights, np.linalg.norm(residual(support, weights)))
    s, w = support.copy(), weights.copy()
    k = s.size
    for _ in range(steps):
        dpow = r * np.where(r > 0, s[None, :] ** np.maximum(r - 1, 0), 0.0)
        J = scale * np.hstack([w[None, :] * dpow, s[None, :] ** r])
        step = np.linalg.lstsq(J, residual(s, w), rcond=None)[0]
        s, w = s - step[:k], w - step[k:]
        if np.any(w < 0) or np.any(np.abs(s - 0.5) > 0.5 + REFINE_SLACK):
            break
        norm = np.linalg.norm(residual(s, w))
        # the first step can overshoot before the iteration settles
        if norm < best[2]:
            best = (s.copy(), w.copy(), norm)
    return np.clip(best[0], 0.0, 1.0), best[1]


def learn_power_distribution(H, k=None, zeta=None, pi_min=None, refine=True):
    """Support and weights of the k-spike distribution behind a (k+1) x (k+1) Hankel matrix.

    Support is clamped to [0, 1] before the weights are fit by nonnegative
    least squares on the first k moments; the result is sorted ascending.
    With ``refine`` the estimate is then polished by Gauss-Newton against
    all 2k+1 moments (anti-diagonal means), which roughly halves the error
    under entrywise noise.
    ``zeta`` and ``pi_min`` are accepted for interface parity and unused:
    the caller gates on the eigenvalue gap before calling.
    """
    _, values, size_k = _moments_of(H)
    if values.shape != (size_k + 1, size_k + 1):
        raise ValueError("Hankel matrix must be square")
    if k is None:
        k = size_k
    if k != size_k:
        raise ValueError(f"Hankel matrix is for k={size_k}, not k={k}")

    base = values[:k, :k]
    shift = values[1:k + 1, :k]
    sigma = np.linalg.svd(base, compute_uv=False)[-1]
    if not sigma >= DEGENERATE_FLOOR:
        raise DegenerateHankel(f"leading Hankel block is singular (sigma_k={sigma:.3e})",
                               value=float(sigma))

    eig = scipy.linalg.eigvals(shift, base)
    if not np.all(np.isfinite(eig)):
        raise DegenerateHankel("matrix pencil has infinite eigenvalues")
    worst_imag = float(np.max(np.abs(eig.imag)))
    if worst_imag > IMAG_TOL:
        raise ComplexEigenvalue(f"pencil eigenvalue with imaginary part {worst_imag:.3e}",
                                value=worst_imag)
    support = np.sort(np.clip(eig.real, 0.0, 1.0))

    vander = support[None, :] ** np.arange(k)[:, None]
    weights, _ = scipy.optimize.nnls(vander, values[0, :k])
    if refine and k > 0:
        support, weights = _refine(support, weights, _averaged_moments(values))
    total = weights.sum()
    if not total > 0:
        raise DegenerateHankel("all recovered weights are zero", value=0.0)
    return SpikeDistribution(support, weights / total)


def moment_residual(d, mu):
    """Max deviation between the moments of ``d`` and the observed sequence."""
    mu = np.asarray(mu, dtype=float)
    return float(np.max(np.abs(spike_moments(d, mu.size - 1).mu - mu)))


def spike_distance(a, b):
    if a.k != b.k:
        raise ValueError(f"size mismatch: {a.k} vs {b.k}")
    return float(max(np.max(np.abs(a.support - b.support)), np.max(np.abs(a.weights - b.weights))))
