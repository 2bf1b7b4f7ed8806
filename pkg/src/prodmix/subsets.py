"""Subset families, observable moment matrices C, and the family/triple search.

For disjoint families B (rows) and A (columns) the matrix
``C[l, i] = mom(B_l | A_i)`` equals ``M[B] diag(pi) M[A]^T`` and is
computable from moments alone. Identification needs such matrices with a
large k-th singular value; this module finds them by exhaustive search.
"""

from dataclasses import dataclass
from itertools import chain, combinations
from math import comb, sqrt

import numpy as np
import scipy.linalg

from .errors import CheckFailed, Exhausted, GroundOverlap, SelectionFailure

# Below this a k x k moment matrix is treated as numerically singular,
# whatever the configured selection threshold.
SIGMA_FLOOR = 1e-13
DEFAULT_THRESHOLD_EXPONENT = 10


def power_set(ground):
    """All subsets of ``ground`` ordered by size, then lexicographically; the empty set comes first."""
    ground = tuple(sorted(ground))
    return [frozenset(c) for r in range(len(ground) + 1) for c in combinations(ground, r)]


@dataclass(frozen=True)
class SubsetFamily:
    ground: tuple
    members: tuple

    def __post_init__(self):
        ground = tuple(sorted(int(i) for i in self.ground))
        members = tuple(frozenset(int(i) for i in m) for m in self.members)
        if len(set(members)) != len(members):
            raise ValueError("family members must be distinct")
        gset = set(ground)
        for m in members:
            if not m <= gset:
                raise ValueError(f"member {sorted(m)} not contained in ground {ground}")
        object.__setattr__(self, "ground", ground)
        object.__setattr__(self, "members", members)

    @property
    def contains_empty(self):
        return frozenset() in self.members

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, idx):
        return self.members[idx]

    def member_lists(self):
        return [sorted(m) for m in self.members]


@dataclass(frozen=True)
class MomentMatrixC:
    row_family: SubsetFamily
    col_family: SubsetFamily
    values: np.ndarray
    sigma_min: float
    sigma_max: float


def _check_disjoint(*grounds):
    seen = set()
    for g in grounds:
        g = set(g)
        if seen & g:
            raise GroundOverlap(f"ground sets overlap on {sorted(seen & g)}")
        seen |= g


def moment_block(oracle, rows, cols):
    """Matrix of oracle values on R | C for R in rows, C in cols."""
    table = oracle.table([r | c for r in rows for c in cols])
    return np.array([[table[r | c] for c in cols] for r in rows], dtype=float)


def build_C(oracle, B, A):
    _check_disjoint(B.ground, A.ground)
    values = moment_block(oracle, list(B.members), list(A.members))
    sv = np.linalg.svd(values, compute_uv=False)
    return MomentMatrixC(B, A, values, float(sv[-1]), float(sv[0]))


def family_sum(B, Bp):
    """{B_l | B'_j} in row-major (l, j) order, matching ``np.kron`` of coefficient vectors."""
    _check_disjoint(B.ground, Bp.ground)
    return [b | bp for b in B.members for bp in Bp.members]


def default_threshold(pi_min, zeta, k, exponent=DEFAULT_THRESHOLD_EXPONENT):
    """pi_min * zeta^(exponent * k^2); the selection gate before the numerical floor."""
    return float(pi_min) * float(zeta) ** (exponent * k * k)


@dataclass(frozen=True)
class FamilySelection:
    S: tuple
    T: tuple
    Tp: tuple
    A: SubsetFamily
    B: SubsetFamily
    Bp: SubsetFamily  # None for the sequential layout
    score: float
    target_bit: int

    @property
    def k(self):
        return len(self.A)

    @property
    def strategy(self):
        return "sequential" if self.Bp is None else "doubling"

    def to_dict(self):
        return {
            "S": list(self.S),
            "T": list(self.T),
            "Tp": list(self.Tp),
            "A": self.A.member_lists(),
            "B": self.B.member_lists(),
            "Bp": [] if self.Bp is None else self.Bp.member_lists(),
            "score": float(self.score),
            "target_bit": int(self.target_bit),
        }

    @classmethod
    def from_dict(cls, data):
        A = SubsetFamily(data["S"], data["A"])
        B = SubsetFamily(data["T"], data["B"])
        Bp = SubsetFamily(data["Tp"], data["Bp"]) if data["Bp"] else None
        return cls(tuple(data["S"]), tuple(data["T"]), tuple(data["Tp"]), A, B, Bp,
                   float(data["score"]), int(data["target_bit"]))


def _smallest_sigmas(blocks):
    return np.linalg.svd(blocks, compute_uv=False)[..., -1]


def _best_rows_per_col_family(C_full, row_cands, col_cands):
    """For each column family, the row family maximizing sigma_k (first max wins) and its value."""
    r = np.asarray(row_cands)
    c = np.asarray(col_cands)
    blocks = C_full[r[None, :, :, None], c[:, None, None, :]]
    sig = _smallest_sigmas(blocks)
    best = np.argmax(sig, axis=1)
    return best, sig[np.arange(len(col_cands)), best]


def select_families(oracle, S, T, Tp, k, threshold, target=None):
    """Exhaustively choose A in 2^S (empty set first), B in 2^T, B' in 2^Tp.

    Maximizes min(sigma_k(C_BA), sigma_k(C_B'A)). ``Tp=None`` selects the
    sequential layout, which scores sigma_k(C_BA) only. Raises
    :class:`SelectionFailure` if the best score is below ``threshold`` (or
    below the numerical floor).
    """
    S, T = tuple(sorted(S)), tuple(sorted(T))
    Tp = None if Tp is None else tuple(sorted(Tp))
    grounds = [S, T] + ([] if Tp is None else [Tp])
    _check_disjoint(*grounds)
    for g in grounds:
        if len(g) != k - 1:
            raise ValueError(f"ground sets must have k-1={k - 1} elements, got {g}")
    if target is not None and (target in S or (Tp is not None and target in Tp)
                               or (Tp is None and target in T)):
        raise GroundOverlap(f"target bit {target} lies in a forbidden ground set")

    pool_S, pool_T = power_set(S), power_set(T)
    col_cands = [(0,) + rest for rest in combinations(range(1, len(pool_S)), k - 1)]
    row_cands = list(combinations(range(len(pool_T)), k))

    C_T = moment_block(oracle, pool_T, pool_S)
    best_B, sig_B = _best_rows_per_col_family(C_T, row_cands, col_cands)
    if Tp is not None:
        pool_Tp = power_set(Tp)
        C_Tp = moment_block(oracle, pool_Tp, pool_S)
        best_Bp, sig_Bp = _best_rows_per_col_family(C_Tp, row_cands, col_cands)
        scores = np.minimum(sig_B, sig_Bp)
    else:
        scores = sig_B

    a = int(np.argmax(scores))
    score = float(scores[a])
    if not score >= max(threshold, SIGMA_FLOOR):
        raise SelectionFailure(
            f"best family score {score:.3e} below threshold {max(threshold, SIGMA_FLOOR):.3e}",
            value=score)

    A = SubsetFamily(S, [pool_S[i] for i in col_cands[a]])
    B = SubsetFamily(T, [pool_T[i] for i in row_cands[best_B[a]]])
    Bp = None if Tp is None else SubsetFamily(Tp, [pool_Tp[i] for i in row_cands[best_Bp[a]]])

    if target is None and Tp is not None:
        used = set(chain.from_iterable(B.members))
        free = [t for t in T if t not in used]
        target = free[0] if free else (T[0] if T else None)
    return FamilySelection(S, T, () if Tp is None else Tp, A, B, Bp, score, target)


def _fill_target(selection, n):
    if selection.target_bit is not None:
        return selection
    grounds = set(selection.S) | set(selection.T) | set(selection.Tp)
    free = [i for i in range(n) if i not in grounds]
    if not free:
        raise ValueError("no bit left to serve as target")
    return FamilySelection(selection.S, selection.T, selection.Tp, selection.A, selection.B,
                           selection.Bp, selection.score, free[0])


def required_bits(k, strategy="doubling"):
    if strategy == "sequential":
        return 2 * k - 1
    return max(3 * k - 3, 1)


def fixed_layout(k, strategy="doubling"):
    """(target, S, T, Tp) on the first rows: the layout used when all rows are separated."""
    r = list(range(3 * k))
    if strategy == "sequential":
        return 0, tuple(r[k:2 * k - 1]), tuple(r[1:k]), None
    return None, tuple(r[2 * k - 2:3 * k - 3]), tuple(r[:k - 1]), tuple(r[k - 1:2 * k - 2])


class _PairViability:
    """Cached necessary condition sigma_k(C_{2^X, 2^S}) >= threshold.

    Any k x k submatrix has k-th singular value at most that of the full
    block, so a failing pair rules out every family choice on it.
    """

    def __init__(self, oracle, k, threshold):
        self.oracle, self.k, self.threshold = oracle, k, threshold
        self._cache = {}

    def __call__(self, X, S):
        key = (X, S)
        if key not in self._cache:
            block = moment_block(self.oracle, power_set(X), power_set(S))
            sv = np.linalg.svd(block, compute_uv=False)
            self._cache[key] = bool(sv[self.k - 1] >= self.threshold)
        return self._cache[key]


def iter_selections(oracle, n, k, threshold, mode="all_separated", strategy="doubling"):
    """Yield passing family selections in lexicographic triple order.

    ``all_separated`` tries only the fixed layout on the first rows;
    ``exhaustive`` walks every disjoint (T, T', S) (or (target, T, S) for the
    sequential strategy).
    """
    mode = mode.replace("-", "_")
    if mode not in ("exhaustive", "all_separated"):
        raise ValueError(f"unknown search mode {mode!r}")
    if strategy not in ("doubling", "sequential"):
        raise ValueError(f"unknown strategy {strategy!r}")
    need = required_bits(k, strategy)
    if n < need:
        raise ValueError(f"need n >= {need} bits for k={k} ({strategy}), got n={n}")

    if mode == "all_separated":
        target, S, T, Tp = fixed_layout(k, strategy)
        try:
            yield _fill_target(select_families(oracle, S, T, Tp, k, threshold, target), n)
        except SelectionFailure:
            return
        return

    floor = max(threshold, SIGMA_FLOOR)
    viable = _PairViability(oracle, k, floor)
    bits = range(n)
    m = k - 1

    def has_partner(X, excluded):
        rest = [i for i in bits if i not in excluded]
        return any(viable(X, S) for S in combinations(rest, m))

    if strategy == "sequential":
        for target in bits:
            others = [i for i in bits if i != target]
            for T in combinations(others, m):
                if not has_partner(T, set(T) | {target}):
                    continue
                rest = [i for i in others if i not in T]
                for S in combinations(rest, m):
                    if not viable(T, S):
                        continue
                    try:
                        yield select_families(oracle, S, T, None, k, threshold, target)
                    except SelectionFailure:
                        continue
        return

    for T in combinations(bits, m):
        if not has_partner(T, set(T)):
            continue
        rest1 = [i for i in bits if i not in T]
        for Tp in combinations(rest1, m):
            if not has_partner(Tp, set(T) | set(Tp)):
                continue
            rest2 = [i for i in rest1 if i not in Tp]
            for S in combinations(rest2, m):
                if not (viable(T, S) and viable(Tp, S)):
                    continue
                try:
                    yield _fill_target(select_families(oracle, S, T, Tp, k, threshold), n)
                except SelectionFailure:
                    continue


def search_triples(oracle, n, k, threshold, mode="all_separated", strategy="doubling"):
    """First passing selection, or :class:`Exhausted` if none passes."""
    for selection in iter_selections(oracle, n, k, threshold, mode, strategy):
        return selection
    raise Exhausted(f"no row triple passed selection (k={k}, n={n}, mode={mode})")


def fos_bound(sigma, k, c):
    return sigma / sqrt(k * (c - k) + 1)


def _brute_force_columns(matrix, k, chunk=20000):
    c = matrix.shape[1]
    best_val, best_sel = -1.0, None
    combos = combinations(range(c), k)
    while True:
        batch = [sel for _, sel in zip(range(chunk), combos)]
        if not batch:
            break
        idx = np.asarray(batch)
        blocks = matrix[:, idx].transpose(1, 0, 2)
        sig = _smallest_sigmas(blocks)
        j = int(np.argmax(sig))
        if sig[j] > best_val:
            best_val, best_sel = float(sig[j]), batch[j]
    return tuple(best_sel)


def fos_column_select(matrix, brute_force_limit=20, max_combinations=200_000):
    """Choose k columns of a k x c matrix whose square submatrix keeps sigma_k large.

    Guarantees sigma_k(selection) >= sigma_k(matrix) / sqrt(k (c - k) + 1),
    checked after the fact. Brute force for c <= ``brute_force_limit``,
    otherwise column-pivoted QR with a brute-force fallback.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValueError("matrix must be 2-D")
    k, c = matrix.shape
    if c < k:
        raise ValueError("need at least as many columns as rows")
    if c == k:
        return tuple(range(k))
    sigma = np.linalg.svd(matrix, compute_uv=False)[k - 1]
    bound = fos_bound(sigma, k, c)

    if c <= brute_force_limit:
        return tuple(sorted(_brute_force_columns(matrix, k)))

    _, _, piv = scipy.linalg.qr(matrix, pivoting=True, mode="economic")
    sel = tuple(sorted(int(p) for p in piv[:k]))
    if np.linalg.svd(matrix[:, sel], compute_uv=False)[-1] >= bound:
        return sel
    if comb(c, k) <= max_combinations:
        return tuple(sorted(_brute_force_columns(matrix, k)))
    raise CheckFailed(f"pivoted selection misses the column-subset bound {bound:.3e}")
