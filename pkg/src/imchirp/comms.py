"""Communication receiver: DFT-s-OFDM front end and index/PSK detection."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .codec import (IndexMessage, SchemeParams, UnusedCodewordError, _int_to_bits,
                    constellation, decode, gray, pair_ranks, psk_index, psk_point,
                    rank_indices)
from .waveform import FdssCoefficients, TimeFrame, WaveformConfig


@dataclass(frozen=True)
class DetectionResult:
    indices: tuple[int, ...]
    psk: tuple[complex, ...]
    bits: tuple[int, ...]
    metric: float
    usable: bool = True

    @property
    def message(self) -> IndexMessage:
        return IndexMessage(self.indices, self.psk, self.bits)


def demodulate(frame: TimeFrame | np.ndarray, config: WaveformConfig) -> np.ndarray:
    """Strip the CP, take the N-point DFT (scaled by 1/N), keep bins L_d..L_u."""
    samples = frame.samples if isinstance(frame, TimeFrame) else np.asarray(frame)
    if len(samples) != config.N_CP + config.N:
        raise ValueError(f"frame has {len(samples)} samples, expected {config.N_CP + config.N}")
    spec = np.fft.fft(samples[config.N_CP:]) / config.N
    return spec[config.bins % config.N]


def equalize_despread(y: np.ndarray, h: np.ndarray | float, fdss: FdssCoefficients | np.ndarray,
                      config: WaveformConfig) -> np.ndarray:
    """M-point IDFT of ``conj(h_k c_k) y_k``, giving one value per chirp shift."""
    c = fdss.c if isinstance(fdss, FdssCoefficients) else np.asarray(fdss)
    v = np.conj(h) * np.conj(c) * y
    spec = np.zeros(config.M, dtype=complex)
    spec[config.bins % config.M] = v
    return np.fft.ifft(spec)


# ----------------------------------------------------------------------------
# Detection helpers
# ----------------------------------------------------------------------------

def _best_psk(x: np.ndarray, H: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-index best ``Re{x_m conj(s)}`` and the phase index achieving it."""
    scores = np.real(np.multiply.outer(x, np.conj(constellation(H))))
    q = np.argmax(scores, axis=1)
    return scores[np.arange(len(x)), q], q


@lru_cache(maxsize=16)
def _valid_pairs(M: int, S: int, usable: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``i < j`` with circular distance >= S, lexicographic order."""
    i, j = np.triu_indices(M, k=1)
    keep = np.minimum(j - i, M - (j - i)) >= S
    i, j = i[keep], j[keep]
    if usable is not None:
        params = SchemeParams(M=M, L=2, S=S)
        r = pair_ranks(i, j, params)
        keep = r < usable
        i, j = i[keep], j[keep]
    i.setflags(write=False)
    j.setflags(write=False)
    return i, j


def _result(indices, q, metric, params: SchemeParams) -> DetectionResult:
    order = np.argsort(indices)
    indices = tuple(int(indices[t]) for t in order)
    psk = tuple(psk_point(int(q[t]), params.H) for t in order)
    msg = IndexMessage(indices, psk)
    try:
        bits = decode(msg, params)
        usable = True
    except UnusedCodewordError:
        # outside the codebook: keep the low p1 bits of the rank so the block
        # still counts, and flag it
        rank = rank_indices(indices, params) % params.usable
        k = params.bits_per_symbol
        bits = _int_to_bits(rank, params.p1) + tuple(
            b for s in psk for b in _int_to_bits(gray(psk_index(s, params.H)), k))
        usable = False
    return DetectionResult(indices, psk, tuple(bits), float(metric), usable)


def ml_detect(x: np.ndarray, params: SchemeParams, usable_only: bool = True) -> DetectionResult:
    """Exhaustive maximisation of ``sum_l Re{x_{i_l} conj(s_l)}``.

    The objective separates over indices, so the best PSK point per index is
    found first and the index search runs on those per-index scores. For
    ``L = 2`` every valid pair is scored (restricted to the emitted codebook
    when ``usable_only``); for ``L = 1`` the single best index; for ``L > 2``
    the top-``L`` indices, which is exact for the unconstrained codebook.
    """
    x = np.asarray(x)
    score, q = _best_psk(x, params.H)
    if params.L == 1:
        cand = score[: params.usable] if usable_only else score
        m = int(np.argmax(cand))
        return _result([m], q[[m]], score[m], params)
    if params.L == 2:
        i, j = _valid_pairs(params.M, params.S, params.usable if usable_only else None)
        total = score[i] + score[j]
        t = int(np.argmax(total))
        pair = np.array([i[t], j[t]])
        return _result(pair, q[pair], total[t], params)
    top = np.sort(np.argsort(-score, kind="stable")[: params.L])
    return _result(top, q[top], score[top].sum(), params)


def two_step_detect(x: np.ndarray, params: SchemeParams, usable_only: bool = True) -> DetectionResult:
    """Greedy detector: best (index, phase) first, then the best compatible partner."""
    if params.L != 2:
        raise ValueError("two-step detection is defined for L = 2")
    x = np.asarray(x)
    M = params.M
    score, q = _best_psk(x, params.H)
    first = int(np.argmax(score))
    n = np.arange(M)
    dist = np.minimum(np.abs(n - first), M - np.abs(n - first))
    ok = (dist >= params.S) & (n != first)
    if usable_only:
        ranks = pair_ranks(np.minimum(n, first), np.maximum(n, first), params)
        usable_ok = ok & (ranks < params.usable)
        if usable_ok.any():
            ok = usable_ok
    cand = np.where(ok, score, -np.inf)
    second = int(np.argmax(cand))
    pair = np.array([first, second])
    return _result(pair, q[pair], score[first] + score[second], params)


def ber_bler(detected, truth, p: int) -> tuple[float, float]:
    det = np.asarray(detected, dtype=np.int8).ravel()
    ref = np.asarray(truth, dtype=np.int8).ravel()
    if det.size != ref.size:
        raise ValueError("bit streams differ in length")
    if p <= 0 or det.size % p:
        raise ValueError(f"stream length {det.size} is not a multiple of p={p}")
    if det.size == 0:
        raise ValueError("empty bit stream")
    err = det != ref
    return float(err.mean()), float(err.reshape(-1, p).any(axis=1).mean())
