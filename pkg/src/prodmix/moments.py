"""Multilinear moments: exact, empirical from samples, or exact plus bounded noise.

All three regimes sit behind :class:`MomentOracle`, which caches every
queried subset so that repeated queries return the identical value.
"""

import struct
import threading

import numpy as np

from .model import as_subset, exact_moment

BINARY_MAGIC = b"MIXB1"
_CHUNK = 1 << 18


class Dataset:
    """N records of n bits, stored packed (LSB-first, ceil(n/8) bytes per record)."""

    def __init__(self, n, packed):
        packed = np.ascontiguousarray(packed, dtype=np.uint8)
        width = (n + 7) // 8
        if packed.ndim != 2 or packed.shape[1] != width:
            raise ValueError(f"packed array must be N x {width}")
        if packed.shape[0] < 1:
            raise ValueError("dataset must contain at least one record")
        spare = width * 8 - n
        if spare and np.any(packed[:, -1] >> (8 - spare)):
            raise ValueError("padding bits must be zero")
        self.n = int(n)
        self.packed = packed

    @property
    def N(self):
        return self.packed.shape[0]

    @classmethod
    def from_bits(cls, bits):
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise ValueError("bits must be a 2-D array")
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("dataset entries must be 0 or 1")
        return cls(bits.shape[1], np.packbits(bits.astype(np.uint8), axis=1, bitorder="little"))

    def to_bits(self):
        return np.unpackbits(self.packed, axis=1, count=self.n, bitorder="little")

    def save_text(self, path):
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"{self.n} {self.N}\n")
            for start in range(0, self.N, _CHUNK):
                block = self.to_bits_range(start, start + _CHUNK)
                chars = np.where(block == 1, ord("1"), ord("0")).astype(np.uint8)
                lines = np.hstack([chars, np.full((chars.shape[0], 1), ord("\n"), np.uint8)])
                fh.write(lines.tobytes().decode("ascii"))

    def to_bits_range(self, start, stop):
        return np.unpackbits(self.packed[start:stop], axis=1, count=self.n, bitorder="little")

    @classmethod
    def load_text(cls, path):
        with open(path, encoding="ascii") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise ValueError("dataset header must be 'n N'")
            n, N = int(header[0]), int(header[1])
            body = fh.read().split()
        if len(body) != N:
            raise ValueError(f"header declares {N} records, found {len(body)}")
        raw = np.frombuffer("".join(body).encode("ascii"), dtype=np.uint8)
        if raw.size != n * N:
            raise ValueError(f"every record must have exactly {n} characters")
        bits = raw.reshape(N, n) - ord("0")
        return cls.from_bits(bits)

    def save_binary(self, path):
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC)
            fh.write(struct.pack("<IQ", self.n, self.N))
            fh.write(self.packed.tobytes())

    @classmethod
    def load_binary(cls, path):
        with open(path, "rb") as fh:
            if fh.read(len(BINARY_MAGIC)) != BINARY_MAGIC:
                raise ValueError("not a packed dataset file")
            n, N = struct.unpack("<IQ", fh.read(12))
            width = (n + 7) // 8
            payload = fh.read()
        if len(payload) != width * N:
            raise ValueError("truncated packed dataset")
        return cls(n, np.frombuffer(payload, dtype=np.uint8).reshape(N, width))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            head = fh.read(len(BINARY_MAGIC))
        return cls.load_binary(path) if head == BINARY_MAGIC else cls.load_text(path)


def draw_samples(model, N, seed=None):
    """N i.i.d. records: H ~ pi, then X_i ~ Bernoulli(M[i, H]) independently."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(seed)
    width = (model.n + 7) // 8
    packed = np.empty((N, width), dtype=np.uint8)
    for start in range(0, N, _CHUNK):
        m = min(_CHUNK, N - start)
        hidden = rng.choice(model.k, size=m, p=model.pi)
        bits = rng.random((m, model.n)) < model.M[:, hidden].T
        packed[start:start + m] = np.packbits(bits, axis=1, bitorder="little")
    return Dataset(model.n, packed)


def _masks(n, subsets):
    width = (n + 7) // 8
    masks = np.zeros((len(subsets), width), dtype=np.uint8)
    for row, S in enumerate(subsets):
        for i in S:
            masks[row, i // 8] |= np.uint8(1 << (i % 8))
    return masks


def count_subsets(dataset, subsets):
    """Number of records with every bit of S set, for each S, in one pass over the data."""
    subsets = [as_subset(S, dataset.n) for S in subsets]
    masks = _masks(dataset.n, subsets)
    cols = [np.flatnonzero(m) for m in masks]
    counts = np.zeros(len(subsets), dtype=np.int64)
    for start in range(0, dataset.N, _CHUNK):
        block = dataset.packed[start:start + _CHUNK]
        for row, S in enumerate(subsets):
            if not S:
                counts[row] += block.shape[0]
                continue
            c = cols[row]
            sub = block[:, c]
            counts[row] += int(np.count_nonzero(((sub & masks[row, c]) == masks[row, c]).all(axis=1)))
    return counts


def empirical_moment(dataset, S):
    """Fraction of records whose bits in S are all 1; exactly 1.0 for S empty."""
    S = as_subset(S, dataset.n)
    if not S:
        return 1.0
    return float(count_subsets(dataset, [S])[0]) / dataset.N


class MomentOracle:
    """Uniform, cached access to mom(S) in one of three modes.

    Use the constructors :meth:`exact`, :meth:`empirical` and
    :meth:`perturbed`. Queries are thread-safe; the cache is guarded by a lock.
    """

    def __init__(self, mode, n, model=None, dataset=None, eps=0.0, seed=0, perturbation=None):
        if mode not in ("exact", "empirical", "perturbed"):
            raise ValueError(f"unknown oracle mode {mode!r}")
        self.mode = mode
        self.n = int(n)
        self.model = model
        self.dataset = dataset
        self.eps = float(eps)
        self.seed = int(seed) if seed is not None else 0
        self.perturbation = perturbation
        self._cache = {}
        self._lock = threading.Lock()

    @classmethod
    def exact(cls, model):
        return cls("exact", model.n, model=model)

    @classmethod
    def empirical(cls, dataset):
        return cls("empirical", dataset.n, dataset=dataset)

    @classmethod
    def perturbed(cls, model, eps, seed=0, perturbation=None):
        """Exact moments plus delta_S in [-eps, eps] (delta of the empty set is 0).

        By default delta_S is uniform, keyed deterministically by (seed, S).
        ``perturbation``, if given, is called as ``perturbation(S)`` and its
        output is clipped to [-eps, eps].
        """
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        return cls("perturbed", model.n, model=model, eps=eps, seed=seed,
                   perturbation=perturbation)

    def delta(self, S):
        if not S or self.eps == 0:
            return 0.0
        if self.perturbation is not None:
            return float(np.clip(self.perturbation(S), -self.eps, self.eps))
        rng = np.random.default_rng([self.seed, len(S), *sorted(S)])
        return float(rng.uniform(-self.eps, self.eps))

    def _compute(self, S):
        if self.mode == "exact":
            return exact_moment(self.model, S)
        if self.mode == "perturbed":
            return float(np.clip(exact_moment(self.model, S) + self.delta(S), 0.0, 1.0))
        return empirical_moment(self.dataset, S)

    def query(self, S):
        S = as_subset(S, self.n)
        with self._lock:
            hit = self._cache.get(S)
        if hit is not None:
            return hit
        value = self._compute(S)
        with self._lock:
            return self._cache.setdefault(S, value)

    __call__ = query

    def table(self, family):
        """Values for every subset in ``family``; empirical mode counts them in a single scan."""
        subsets = [as_subset(S, self.n) for S in family]
        if self.mode == "empirical":
            with self._lock:
                missing = list(dict.fromkeys(S for S in subsets if S not in self._cache))
            if missing:
                counts = count_subsets(self.dataset, missing)
                with self._lock:
                    for S, c in zip(missing, counts):
                        self._cache.setdefault(S, 1.0 if not S else float(c) / self.dataset.N)
        return {S: self.query(S) for S in subsets}


def oracle_query(oracle, S):
    return oracle.query(S)


def moment_table(oracle, family):
    return oracle.table(family)
