"""Index-modulation codec: bits <-> (chirp index set, PSK symbols).

The first ``p1`` bits pick a combination of ``L`` chirp indices by
lexicographic unranking; the remaining ``p2 = L*log2(H)`` bits pick one
Gray-labelled H-PSK phase per active chirp, in increasing index order.

With index separation (``S > 1``, ``L = 2`` only) the combination is drawn
from the pairs whose circular distance is at least ``S``.
"""

from __future__ import annotations

import bisect
import cmath
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import accumulate
from typing import Sequence

import numpy as np


class CodecError(ValueError):
    """Invalid codec arguments."""


class UnusedCodewordError(CodecError):
    """A valid index set whose rank lies outside the ``2**p1`` usable codebook."""


# ----------------------------------------------------------------------------
# Combinatorics
# ----------------------------------------------------------------------------

def circular_distance(i: int, j: int, M: int) -> int:
    if not (0 <= i < M and 0 <= j < M):
        raise CodecError(f"indices ({i}, {j}) out of range for M={M}")
    a = abs(i - j)
    return min(a, M - a)


def count_unconstrained(M: int, L: int) -> int:
    if not 0 < L <= M:
        raise CodecError(f"need 0 < L <= M, got M={M}, L={L}")
    return math.comb(M, L)


def count_constrained(M: int, S: int) -> int:
    """Number of index pairs with circular distance at least ``S``."""
    if M < 2:
        raise CodecError(f"need M >= 2, got {M}")
    if not 1 <= S <= M // 2:
        raise CodecError(f"need 1 <= S <= {M // 2}, got S={S}")
    return math.comb(M, 2) - M * (S - 1)


def s_max(M: int) -> int:
    """Largest separation that keeps ``floor(log2 C)`` at its unconstrained value."""
    if M < 2:
        raise CodecError(f"need M >= 2, got {M}")
    total = math.comb(M, 2)
    top = 1 << (total.bit_length() - 1)
    return 1 + (total - top) // M


def floor_log2(n: int) -> int:
    if n < 1:
        raise CodecError("floor_log2 of a non-positive integer")
    return n.bit_length() - 1


# ----------------------------------------------------------------------------
# Scheme parameters
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SchemeParams:
    M: int
    L: int
    H: int = 2
    S: int = 1

    def __post_init__(self):
        if self.M < 2:
            raise CodecError(f"M must be >= 2, got {self.M}")
        if not 1 <= self.L <= self.M:
            raise CodecError(f"L must be in [1, M], got {self.L}")
        if self.H < 2 or self.H & (self.H - 1):
            raise CodecError(f"H must be a power of two >= 2, got {self.H}")
        if not 1 <= self.S <= self.M // 2:
            raise CodecError(f"S must be in [1, {self.M // 2}], got {self.S}")
        if self.S > 1 and self.L != 2:
            raise CodecError("index separation (S > 1) is only defined for L = 2")

    @property
    def constrained(self) -> bool:
        return self.S > 1

    @cached_property
    def combinations(self) -> int:
        if self.constrained:
            return count_constrained(self.M, self.S)
        return count_unconstrained(self.M, self.L)

    @cached_property
    def bits_per_symbol(self) -> int:
        return self.H.bit_length() - 1

    @cached_property
    def p1(self) -> int:
        return floor_log2(self.combinations)

    @cached_property
    def p2(self) -> int:
        return self.L * self.bits_per_symbol

    @cached_property
    def p(self) -> int:
        return self.p1 + self.p2

    @cached_property
    def usable(self) -> int:
        """Number of index combinations reachable by ``encode``."""
        return 1 << self.p1


def bit_capacity(params: SchemeParams) -> tuple[int, int, int]:
    return params.p1, params.p2, params.p


def spectral_efficiency(params: SchemeParams) -> float:
    """Bits per subcarrier, ``floor(log2(C * H**L)) / M``."""
    return floor_log2(params.combinations * params.H ** params.L) / params.M


def spectral_efficiency_from_bits(params: SchemeParams) -> float:
    return params.p / params.M


# ----------------------------------------------------------------------------
# Ranking / unranking
# ----------------------------------------------------------------------------

def rank_combination(indices: Sequence[int], M: int) -> int:
    """Lexicographic rank of a strictly increasing index tuple."""
    L = len(indices)
    rank = 0
    start = 0
    for pos, x in enumerate(indices):
        k = L - pos
        rank += math.comb(M - start, k) - math.comb(M - x, k)
        start = x + 1
    return rank


def unrank_combination(rank: int, M: int, L: int) -> tuple[int, ...]:
    if not 0 <= rank < math.comb(M, L):
        raise CodecError(f"rank {rank} out of range for C({M},{L})")
    out = []
    start = 0
    for pos in range(L):
        k = L - pos
        total = math.comb(M - start, k)
        # smallest x with (combos starting before x+1) > rank
        lo, hi = start, M - k
        while lo < hi:
            mid = (lo + hi) // 2
            if total - math.comb(M - mid - 1, k) > rank:
                hi = mid
            else:
                lo = mid + 1
        rank -= total - math.comb(M - lo, k)
        out.append(lo)
        start = lo + 1
    return tuple(out)


@lru_cache(maxsize=64)
def _pair_prefix(M: int, S: int) -> tuple[int, ...]:
    # valid partners of first index i: j in [i+S, min(M-1, i+M-S)]
    counts = (max(0, min(M - 1, i + M - S) - (i + S) + 1) for i in range(M))
    return tuple(accumulate(counts, initial=0))


def rank_pair(i: int, j: int, M: int, S: int) -> int:
    """Rank of ``i < j`` in the lexicographic list of pairs with distance >= S."""
    if S == 1:
        return rank_combination((i, j), M)
    if not (0 <= i < j < M) or circular_distance(i, j, M) < S:
        raise CodecError(f"pair ({i}, {j}) violates separation S={S}")
    return _pair_prefix(M, S)[i] + (j - i - S)


def unrank_pair(rank: int, M: int, S: int) -> tuple[int, int]:
    if S == 1:
        return unrank_combination(rank, M, 2)  # type: ignore[return-value]
    prefix = _pair_prefix(M, S)
    if not 0 <= rank < prefix[-1]:
        raise CodecError(f"rank {rank} out of range for M={M}, S={S}")
    i = bisect.bisect_right(prefix, rank) - 1
    return i, i + S + (rank - prefix[i])


def rank_indices(indices: Sequence[int], params: SchemeParams) -> int:
    if params.constrained:
        return rank_pair(indices[0], indices[1], params.M, params.S)
    return rank_combination(indices, params.M)


def unrank_indices(rank: int, params: SchemeParams) -> tuple[int, ...]:
    if params.constrained:
        return unrank_pair(rank, params.M, params.S)
    return unrank_combination(rank, params.M, params.L)


def pair_ranks(i: np.ndarray, j: np.ndarray, params: SchemeParams) -> np.ndarray:
    """Vectorised rank of sorted pairs ``i < j`` (int64; M <= 2**20)."""
    M, S = params.M, params.S
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    if S == 1:
        # C(M,2) - C(M-i,2) + (j - i - 1)
        return (M * (M - 1) - (M - i) * (M - i - 1)) // 2 + (j - i - 1)
    prefix = np.asarray(_pair_prefix(M, S), dtype=np.int64)
    return prefix[i] + (j - i - S)


# ----------------------------------------------------------------------------
# PSK labelling
# ----------------------------------------------------------------------------

def gray(q: int) -> int:
    return q ^ (q >> 1)


def inverse_gray(g: int) -> int:
    q = g
    shift = g >> 1
    while shift:
        q ^= shift
        shift >>= 1
    return q


def psk_point(q: int, H: int) -> complex:
    """Constellation point ``exp(j*2*pi*q/H)`` with exact axis values."""
    q %= H
    if (4 * q) % H == 0:
        return (1, 1j, -1, -1j)[4 * q // H]
    return complex(np.exp(2j * np.pi * q / H))


def psk_index(symbol: complex, H: int) -> int:
    return round(cmath.phase(symbol) * H / (2 * math.pi)) % H


def constellation(H: int) -> np.ndarray:
    return np.array([psk_point(q, H) for q in range(H)], dtype=complex)


# ----------------------------------------------------------------------------
# Messages
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class IndexMessage:
    indices: tuple[int, ...]
    psk: tuple[complex, ...]
    bits: tuple[int, ...] = field(default=(), compare=False)

    @property
    def L(self) -> int:
        return len(self.indices)

    def data_vector(self, M: int) -> np.ndarray:
        """Length-M spreading input with ``psk[l]`` at ``indices[l]``."""
        d = np.zeros(M, dtype=complex)
        d[list(self.indices)] = self.psk
        return d

    def validate(self, params: SchemeParams) -> None:
        idx = self.indices
        if len(idx) != params.L or len(self.psk) != params.L:
            raise CodecError(f"message carries {len(idx)} indices, expected L={params.L}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise CodecError("indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= params.M:
            raise CodecError(f"indices must lie in [0, {params.M})")
        if params.constrained and circular_distance(idx[0], idx[1], params.M) < params.S:
            raise CodecError(f"indices {idx} violate separation S={params.S}")
        for s in self.psk:
            if abs(abs(s) - 1.0) > 1e-12:
                raise CodecError(f"PSK symbol {s} is not unit-magnitude")
            q = cmath.phase(s) * params.H / (2 * math.pi)
            if abs(q - round(q)) > 1e-9:
                raise CodecError(f"PSK symbol {s} is not a {params.H}-PSK point")


def _bits_to_int(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def _int_to_bits(v: int, width: int) -> tuple[int, ...]:
    return tuple((v >> (width - 1 - t)) & 1 for t in range(width))


def encode(bits: Sequence[int], params: SchemeParams) -> IndexMessage:
    bits = tuple(int(b) for b in bits)
    if len(bits) != params.p:
        raise CodecError(f"expected {params.p} bits, got {len(bits)}")
    if any(b not in (0, 1) for b in bits):
        raise CodecError("bits must be 0 or 1")
    rank = _bits_to_int(bits[: params.p1])
    indices = unrank_indices(rank, params)
    k = params.bits_per_symbol
    psk = tuple(
        psk_point(inverse_gray(_bits_to_int(bits[params.p1 + l * k: params.p1 + (l + 1) * k])), params.H)
        for l in range(params.L)
    )
    return IndexMessage(indices=tuple(indices), psk=psk, bits=bits)


def decode(msg: IndexMessage, params: SchemeParams) -> tuple[int, ...]:
    msg.validate(params)
    rank = rank_indices(msg.indices, params)
    if rank >= params.usable:
        raise UnusedCodewordError(
            f"index set {msg.indices} has rank {rank} >= 2**{params.p1}")
    k = params.bits_per_symbol
    out = list(_int_to_bits(rank, params.p1))
    for s in msg.psk:
        out.extend(_int_to_bits(gray(psk_index(s, params.H)), k))
    return tuple(out)


def random_bits(params: SchemeParams, rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(int(b) for b in rng.integers(0, 2, size=params.p))


def random_message(params: SchemeParams, rng: np.random.Generator) -> IndexMessage:
    return encode(random_bits(params, rng), params)
