"""Shared value types: alphabets, probability vectors, transcripts, tuple
indexing for super-symbols, and seeded common randomness.

Everything here is an immutable value; channel state lives in uclab.channels.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

# Hard cap on alphabet sizes so product alphabets stay enumerable.
ALPHABET_CAP = 2 ** 20

# Normalization tolerance for probability vectors (double-precision
# accumulation over alphabets up to ALPHABET_CAP).
PROB_TOL = 1e-12

_DEFAULT_ENUM_CAP = 2 ** 16


def enum_cap() -> int:
    """Joint-outcome cap for exhaustive enumerations (UCLAB_ENUM_CAP overrides)."""
    raw = os.environ.get("UCLAB_ENUM_CAP")
    if raw is None:
        return _DEFAULT_ENUM_CAP
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"UCLAB_ENUM_CAP must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ValueError("UCLAB_ENUM_CAP must be positive")
    return value


class NotNormalized(ValueError):
    """Probability vector does not sum to 1 within tolerance."""


class NegativeMass(ValueError):
    """Probability vector has a negative entry."""


class AlphabetMismatch(ValueError):
    """Two distributions/channels live on different alphabets."""


class Overflow(ValueError):
    """A product alphabet or enumeration exceeds the configured cap."""


@dataclass(frozen=True)
class Alphabet:
    """Finite alphabet; letters are 0..size-1."""

    size: int

    def __post_init__(self):
        if not isinstance(self.size, int) or self.size < 1:
            raise ValueError(f"alphabet size must be a positive integer, got {self.size}")
        if self.size > ALPHABET_CAP:
            raise Overflow(f"alphabet size {self.size} exceeds cap {ALPHABET_CAP}")

    def __contains__(self, symbol) -> bool:
        return 0 <= symbol < self.size


class Dist:
    """Probability vector over a finite alphabet (validated, read-only)."""

    __slots__ = ("probs",)

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("distribution must be a nonempty vector")
        if np.any(p < -1e-15):
            raise NegativeMass(f"negative probability mass: min entry {p.min()}")
        total = float(p.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise NotNormalized(f"probabilities sum to {total!r}, not 1")
        p = np.clip(p, 0.0, None)
        p.flags.writeable = False
        self.probs = p

    @property
    def size(self) -> int:
        return self.probs.size

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, i) -> float:
        return float(self.probs[i])

    def __repr__(self) -> str:
        return f"Dist({self.probs.tolist()})"


def validate_dist(p) -> Dist:
    """Check nonnegativity and normalization; returns the validated Dist."""
    return p if isinstance(p, Dist) else Dist(p)


def as_probs(p) -> np.ndarray:
    """Accept a Dist or raw vector; return the validated numpy array."""
    return validate_dist(p).probs


def l1_distance(p, q) -> float:
    """L1 distance sum |p_i - q_i| between two distributions; lies in [0, 2]."""
    pa, qa = as_probs(p), as_probs(q)
    if pa.size != qa.size:
        raise AlphabetMismatch(f"sizes {pa.size} and {qa.size} differ")
    return float(np.abs(pa - qa).sum())


@dataclass(frozen=True)
class Transcript:
    """A realized input/output sequence pair of equal length."""

    x: tuple
    y: tuple

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(int(v) for v in self.x))
        object.__setattr__(self, "y", tuple(int(v) for v in self.y))
        if len(self.x) != len(self.y):
            raise ValueError(f"input length {len(self.x)} != output length {len(self.y)}")
        if any(v < 0 for v in self.x) or any(v < 0 for v in self.y):
            raise ValueError("symbols must be nonnegative")

    @classmethod
    def empty(cls) -> "Transcript":
        return cls((), ())

    @property
    def n(self) -> int:
        return len(self.x)

    def validate_alphabets(self, input_size: int, output_size: int) -> None:
        if any(v >= input_size for v in self.x):
            raise ValueError(f"input symbol out of range for alphabet of size {input_size}")
        if any(v >= output_size for v in self.y):
            raise ValueError(f"output symbol out of range for alphabet of size {output_size}")


_MASK64 = (1 << 64) - 1


def _label_hash(*parts) -> int:
    h = hashlib.blake2b("/".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RandomSource:
    """Counter-based seeded randomness; (seed, stream) fully determines draws.

    Streams derived with distinct labels are independent in practice (Philox
    counter streams under distinct keys).
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array([self.seed & _MASK64, self.stream & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def derive(self, *labels) -> "RandomSource":
        """Child source; same labels always yield the same child."""
        return RandomSource(self.seed, _label_hash(self.stream, *labels))


class TupleCodec:
    """Bijection between k-tuples over 0..size-1 and indices 0..size^k-1.

    Most-significant symbol first, so index order is lexicographic order of
    tuples.
    """

    __slots__ = ("k", "size", "count")

    def __init__(self, k: int, size: int, cap: int = ALPHABET_CAP):
        if k < 1:
            raise ValueError("tuple length must be >= 1")
        if size < 1:
            raise ValueError("alphabet size must be >= 1")
        count = size ** k
        if count > cap:
            raise Overflow(f"{size}^{k} = {count} exceeds cap {cap}")
        self.k = k
        self.size = size
        self.count = count

    def index_of(self, symbols) -> int:
        if len(symbols) != self.k:
            raise ValueError(f"expected {self.k} symbols, got {len(symbols)}")
        idx = 0
        for s in symbols:
            if not 0 <= s < self.size:
                raise ValueError(f"symbol {s} out of range 0..{self.size - 1}")
            idx = idx * self.size + int(s)
        return idx

    def tuple_of(self, index: int) -> tuple:
        if not 0 <= index < self.count:
            raise ValueError(f"index {index} out of range 0..{self.count - 1}")
        out = []
        for _ in range(self.k):
            out.append(index % self.size)
            index //= self.size
        return tuple(reversed(out))

    def all_tuples(self):
        """Iterate tuples in index (lexicographic) order."""
        for i in range(self.count):
            yield self.tuple_of(i)


def tuple_codec(k: int, alphabet, cap: int = ALPHABET_CAP) -> TupleCodec:
    """Codec for k-tuples over the given alphabet (or raw size)."""
    size = alphabet.size if isinstance(alphabet, Alphabet) else int(alphabet)
    return TupleCodec(k, size, cap=cap)
