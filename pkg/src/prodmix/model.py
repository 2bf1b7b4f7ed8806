"""Mixture-of-product-distribution models on n bits.

A model with k hidden states is a pair ``(pi, M)``: ``pi[j]`` is the
probability of hidden state ``j`` and ``M[i, j] = Pr[X_i = 1 | H = j]``.
Bits are indexed from 0 throughout the package.
"""

from dataclasses import dataclass
from itertools import permutations
import math

import numpy as np

from . import jsonio

PI_SUM_TOL = 1e-12
SEPARATION_TOL = 1e-12
MAX_ALIGN_K = 8
MAX_GRID = 10 ** 6


def as_subset(S, n=None):
    """Normalize an iterable of bit indices to a frozenset, range-checking against n."""
    subset = frozenset(int(i) for i in S)
    if n is not None:
        for i in subset:
            if i < 0 or i >= n:
                raise IndexError(f"bit index {i} out of range [0, {n})")
    return subset


@dataclass(frozen=True)
class MixtureModel:
    pi: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float).reshape(-1)
        M = np.array(self.M, dtype=float)
        if M.ndim == 1:
            M = M.reshape(-1, pi.size)
        if M.ndim != 2 or M.shape[1] != pi.size:
            raise ValueError(f"M must be n x {pi.size}, got shape {M.shape}")
        if pi.size < 1 or M.shape[0] < 1:
            raise ValueError("need k >= 1 and n >= 1")
        if np.any(pi <= 0):
            raise ValueError("mixing weights must be positive")
        if abs(pi.sum() - 1.0) > PI_SUM_TOL:
            raise ValueError(f"mixing weights sum to {pi.sum()!r}, not 1")
        if np.any(M < 0) or np.any(M > 1):
            raise ValueError("conditional probabilities must lie in [0, 1]")
        pi.flags.writeable = False
        M.flags.writeable = False
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "M", M)

    @property
    def k(self):
        return self.pi.size

    @property
    def n(self):
        return self.M.shape[0]

    @property
    def pi_min(self):
        return float(self.pi.min())

    def to_dict(self):
        return {"k": self.k, "n": self.n, "pi": self.pi.tolist(), "M": self.M.tolist()}

    @classmethod
    def from_dict(cls, data):
        model = cls(pi=data["pi"], M=data["M"])
        if int(data.get("k", model.k)) != model.k or int(data.get("n", model.n)) != model.n:
            raise ValueError("declared k/n do not match array shapes")
        return model

    def save(self, path):
        jsonio.dump(self.to_dict(), path)

    @classmethod
    def load(cls, path):
        return cls.from_dict(jsonio.load(path))


@dataclass(frozen=True)
class SeparationReport:
    per_row_gap: np.ndarray

    def separated_rows(self, zeta):
        """Indices of rows whose minimum pairwise gap is at least ``zeta``."""
        return [int(i) for i in np.flatnonzero(self.per_row_gap >= zeta - SEPARATION_TOL)]


@dataclass(frozen=True)
class ComponentAlignment:
    # permutation[j] is the component of the second model matched to component j of the first.
    permutation: tuple
    max_param_error: float


def hadamard_row(model, S):
    """Entrywise product of the rows of M indexed by S (all ones for S empty)."""
    S = as_subset(S, model.n)
    out = np.ones(model.k)
    for i in S:
        out = out * model.M[i]
    return out


def exact_moment(model, S):
    """mom(S) = E[prod_{i in S} X_i] = sum_j pi_j prod_{i in S} M[i, j]."""
    S = as_subset(S, model.n)
    if not S:
        return 1.0
    return float(np.clip(hadamard_row(model, S) @ model.pi, 0.0, 1.0))


def row_gaps(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    k = M.shape[1]
    if k < 2:
        return np.full(M.shape[0], math.inf)
    srt = np.sort(M, axis=1)
    return np.diff(srt, axis=1).min(axis=1)


def separation_report(model):
    return SeparationReport(per_row_gap=row_gaps(model.M))


def _check_zeta(k, zeta):
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    if k >= 2 and zeta > 1.0 / (k - 1) + 1e-12:
        raise ValueError(f"zeta={zeta} exceeds 1/(k-1)={1.0 / (k - 1)} for k={k}")


def separated_values(rng, k, zeta):
    """k values in [0, 1] with pairwise gaps >= zeta, in random order.

    Values sit on a zeta-spaced grid, shifted by a nondecreasing jitter that
    uses up the slack left at the top of [0, 1].
    """
    _check_zeta(k, zeta)
    if k == 1:
        return rng.random(1)
    if zeta == 0:
        return rng.random(k)
    if zeta * MAX_GRID < 1.0:
        # grid too fine to enumerate: sorted uniforms on the shrunk interval, then spread
        base = np.sort(rng.uniform(0.0, 1.0 - (k - 1) * zeta, size=k))
        return rng.permutation(np.clip(base + np.arange(k) * zeta, 0.0, 1.0))
    n_grid = int(math.floor(1.0 / zeta + 1e-9)) + 1
    slack = max(0.0, 1.0 - (n_grid - 1) * zeta)
    grid_idx = np.sort(rng.choice(n_grid, size=k, replace=False))
    jitter = np.sort(rng.uniform(0.0, slack, size=k)) if slack > 0 else np.zeros(k)
    values = np.clip(grid_idx * zeta + jitter, 0.0, 1.0)
    return rng.permutation(values)


def floored_weights(rng, k, pi_min):
    """Uniform draw from {pi on the simplex : min(pi) >= pi_min} via stick breaking."""
    if pi_min < 0 or pi_min * k > 1 + 1e-12:
        raise ValueError(f"pi_min={pi_min} infeasible for k={k}")
    w = np.empty(k)
    remaining = 1.0
    for j in range(k - 1):
        b = rng.beta(1.0, k - 1 - j)
        w[j] = b * remaining
        remaining -= w[j]
    w[k - 1] = remaining
    pi = pi_min + (1.0 - k * pi_min) * w
    return pi / pi.sum()


def random_model(k, n, zeta, pi_min, separated_rows="all", seed=None):
    """Random model honoring separation and weight-floor assumptions.

    ``separated_rows`` is ``"all"``, a count (the first rows are separated),
    or an explicit collection of row indices. Remaining rows are uniform.
    """
    if k < 1 or n < 1:
        raise ValueError("need k >= 1 and n >= 1")
    _check_zeta(k, zeta)
    if k >= 2 and pi_min <= 0:
        raise ValueError("pi_min must be positive")
    rng = np.random.default_rng(seed)

    if separated_rows == "all":
        designated = set(range(n))
    elif isinstance(separated_rows, (int, np.integer)):
        if separated_rows > n:
            raise ValueError("more separated rows requested than rows available")
        designated = set(range(int(separated_rows)))
    else:
        designated = {int(i) for i in separated_rows}
        if any(i < 0 or i >= n for i in designated):
            raise ValueError("separated row index out of range")

    pi = floored_weights(rng, k, min(pi_min, 1.0 / k)) if k > 1 else np.ones(1)
    M = np.empty((n, k))
    for i in range(n):
        M[i] = separated_values(rng, k, zeta) if i in designated else rng.random(k)
    return MixtureModel(pi=pi, M=M)


def _check_alignable(a, b):
    if a.k != b.k or a.n != b.n:
        raise ValueError(f"dimension mismatch: (k={a.k}, n={a.n}) vs (k={b.k}, n={b.n})")
    if a.k > MAX_ALIGN_K:
        raise ValueError(f"brute-force alignment limited to k <= {MAX_ALIGN_K}")


def model_distance(a, b):
    """Best max-norm parameter error over relabelings of the hidden states."""
    _check_alignable(a, b)
    best = None
    for perm in permutations(range(a.k)):
        p = list(perm)
        err = max(np.abs(a.pi - b.pi[p]).max(), np.abs(a.M - b.M[:, p]).max())
        if best is None or err < best.max_param_error:
            best = ComponentAlignment(permutation=tuple(perm), max_param_error=float(err))
    return best


def permute_components(model, perm):
    p = list(perm)
    return MixtureModel(pi=model.pi[p], M=model.M[:, p])
