"""Range estimation from the known transmitted bins.

The single-target estimator maximises ``|Re{t_tau^H q}|`` where ``q`` is
either ``W^H b`` (matched filter) or the LMMSE channel estimate. Because the
real part oscillates at the carrier, the search runs in two phases: the
envelope ``|t_tau^H q|`` is located on a coarse grid and refined, then the
signed statistic is maximised on a window spanning a few carrier periods.
Multiple targets are handled by successive cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import SPEED_OF_LIGHT, RadarScene
from .waveform import WaveformConfig


class DegenerateWaveformError(ValueError):
    pass


@dataclass(frozen=True)
class DelayGrid:
    t_min: float
    t_max: float
    coarse_step: float
    refine_stages: int = 2
    refine_factor: int = 10
    carrier_window: float = 1.0   # half-width of the signed stage, in carrier periods
    carrier_step: float = 1 / 20  # first signed-stage step, in carrier periods
    polish_stages: int = 2

    def __post_init__(self):
        if not 0 <= self.t_min < self.t_max:
            raise ValueError("need 0 <= t_min < t_max")
        if self.coarse_step <= 0:
            raise ValueError("coarse_step must be positive")
        if self.refine_factor < 2:
            raise ValueError("refine_factor must be >= 2")

    def final_step(self, config: WaveformConfig) -> float:
        return self.carrier_step / config.f_c / self.refine_factor ** self.polish_stages

    def final_resolution(self, config: WaveformConfig) -> float:
        """Range spacing of the last grid, in metres."""
        return self.final_step(config) * SPEED_OF_LIGHT / 2


def default_grid(config: WaveformConfig) -> DelayGrid:
    coarse = config.T_sample / 2
    # envelope refinement down to roughly the first signed-stage step
    stages = max(0, math.ceil(math.log10(coarse * 20 * config.f_c)))
    return DelayGrid(t_min=0.0, t_max=config.T_CP, coarse_step=coarse, refine_stages=stages)


@dataclass(frozen=True)
class TargetEstimate:
    tau_hat: float
    a_hat: float
    range_hat: float
    at_boundary: bool = False
    objective: float = 0.0


# ----------------------------------------------------------------------------
# Steering vectors and objectives
# ----------------------------------------------------------------------------

def delay_vector(tau, config: WaveformConfig) -> np.ndarray:
    """``t_tau[k] = exp(-j 2 pi f_c tau) exp(-j 2 pi k tau / T_chirp)``.

    A scalar ``tau`` gives a length-M vector; an array gives one row per delay.
    """
    tau = np.asarray(tau, dtype=float)
    freqs = config.f_c + config.bins / config.T_chirp
    return np.exp(-2j * np.pi * np.multiply.outer(tau, freqs))


def _baseband_corr(taus: np.ndarray, q: np.ndarray, config: WaveformConfig) -> np.ndarray:
    """``sum_k q_k exp(j 2 pi k tau / T)`` (carrier term excluded)."""
    return np.exp(2j * np.pi * np.multiply.outer(taus, config.bins / config.T_chirp)) @ q


def _corr(taus: np.ndarray, q: np.ndarray, config: WaveformConfig) -> np.ndarray:
    return np.exp(2j * np.pi * config.f_c * taus) * _baseband_corr(taus, q, config)


def mf_objective(tau: float, w: np.ndarray, b: np.ndarray,
                 config: WaveformConfig) -> tuple[float, float]:
    """Envelope ``|t^H W^H b|`` and signed value ``Re{t^H W^H b}``."""
    z = complex(_corr(np.array([tau]), np.conj(w) * b, config)[0])
    return abs(z), z.real


def lmmse_channel(b: np.ndarray, w: np.ndarray, sigma2: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin LMMSE estimate ``conj(w) b / (|w|^2 + sigma2)``.

    Returns the estimate and a mask of bins where it was forced to zero
    (``sigma2 == 0`` and ``w_k == 0``).
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    den = np.abs(w) ** 2 + sigma2
    dead = den == 0
    h = np.zeros_like(np.asarray(b, dtype=complex))
    np.divide(np.conj(w) * b, den, out=h, where=~dead)
    return h, dead


def _statistic(b, w, sigma2, kind):
    if kind == "mf":
        return np.conj(w) * b
    if kind == "lmmse":
        return lmmse_channel(b, w, sigma2)[0]
    raise ValueError(f"unknown estimator kind {kind!r}")


# ----------------------------------------------------------------------------
# Search
# ----------------------------------------------------------------------------

def _coarse_envelope(q, grid: DelayGrid, config: WaveformConfig) -> tuple[np.ndarray, np.ndarray]:
    n = int(math.floor((grid.t_max - grid.t_min) / grid.coarse_step + 1e-9)) + 1
    taus = grid.t_min + grid.coarse_step * np.arange(n)
    per_period = config.T_chirp / grid.coarse_step
    start = grid.t_min / grid.coarse_step
    P = int(round(per_period))
    if abs(per_period - P) < 1e-9 and abs(start - round(start)) < 1e-9 and P >= config.M and n <= P:
        # uniform grid aligned with the chirp period: one zero-padded IDFT
        spec = np.zeros(P, dtype=complex)
        spec[config.bins % P] = q
        vals = np.fft.ifft(spec) * P
        env = np.abs(np.take(vals, (int(round(start)) + np.arange(n)) % P))
    else:
        env = np.abs(_baseband_corr(taus, q, config))
    return taus, env


def _local_grid(center: float, half: float, step: float, grid: DelayGrid) -> np.ndarray:
    n = int(round(half / step))
    taus = center + step * np.arange(-n, n + 1)
    return taus[(taus >= grid.t_min) & (taus <= grid.t_max)]


def search_delay(q: np.ndarray, config: WaveformConfig, grid: DelayGrid | None = None,
                 trace: list | None = None) -> tuple[float, bool, float]:
    """Maximise ``|Re{t_tau^H q}|`` over the grid.

    Returns ``(tau_hat, at_boundary, objective)``. If ``trace`` is a list,
    ``(stage_name, step, best_value)`` tuples are appended to it.
    """
    grid = grid or default_grid(config)
    taus, env = _coarse_envelope(q, grid, config)
    i = int(np.argmax(env))
    at_boundary = i == 0 or i == len(taus) - 1
    best, step = float(taus[i]), grid.coarse_step
    if trace is not None:
        trace.append(("coarse", step, float(env[i])))
    for _ in range(grid.refine_stages):
        fine = step / grid.refine_factor
        taus = _local_grid(best, step, fine, grid)
        env = np.abs(_baseband_corr(taus, q, config))
        i = int(np.argmax(env))
        best, step = float(taus[i]), fine
        if trace is not None:
            trace.append(("envelope", step, float(env[i])))

    period = 1.0 / config.f_c
    step = grid.carrier_step * period
    half = grid.carrier_window * period
    for stage in range(grid.polish_stages + 1):
        taus = _local_grid(best, half, step, grid)
        signed = np.abs(_corr(taus, q, config).real)
        i = int(np.argmax(signed))
        best, value = float(taus[i]), float(signed[i])
        if trace is not None:
            trace.append(("signed", step, value))
        half, step = step, step / grid.refine_factor
    at_boundary = at_boundary or best <= grid.t_min or best >= grid.t_max
    return best, at_boundary, value


def estimate_single(b: np.ndarray, w: np.ndarray, config: WaveformConfig,
                    sigma2: float = 0.0, kind: str = "mf",
                    grid: DelayGrid | None = None) -> TargetEstimate:
    w = np.asarray(w)
    energy = float(np.vdot(w, w).real)
    if energy == 0:
        raise DegenerateWaveformError("transmitted bins are all zero")
    q = _statistic(b, w, sigma2, kind)
    tau, at_boundary, value = search_delay(q, config, grid)
    mf = complex(_corr(np.array([tau]), np.conj(w) * b, config)[0]).real
    den = energy if kind == "mf" else energy + sigma2
    return TargetEstimate(tau_hat=tau, a_hat=mf / den, range_hat=tau * SPEED_OF_LIGHT / 2,
                          at_boundary=at_boundary, objective=value)


def estimate_multi(b: np.ndarray, w: np.ndarray, R_known: int, config: WaveformConfig,
                   sigma2: float = 0.0, kind: str = "mf",
                   grid: DelayGrid | None = None) -> list[TargetEstimate]:
    """Successive estimation and cancellation of ``R_known`` reflectors."""
    if R_known < 1:
        raise ValueError("R_known must be >= 1")
    residual = np.array(b, dtype=complex)
    out = []
    for _ in range(R_known):
        est = estimate_single(residual, w, config, sigma2, kind, grid)
        out.append(est)
        residual = residual - est.a_hat * w * delay_vector(est.tau_hat, config)
    return out


# ----------------------------------------------------------------------------
# Metrics
# ----------------------------------------------------------------------------

def matched_errors(estimates: Sequence[TargetEstimate], scene: RadarScene) -> np.ndarray:
    """Range errors after pairing strongest estimate with strongest target."""
    if len(estimates) != len(scene.targets):
        raise ValueError(f"{len(estimates)} estimates for {len(scene.targets)} targets")
    est = sorted(estimates, key=lambda e: -abs(e.a_hat))
    truth = sorted(scene.targets, key=lambda t: -abs(t[1]))
    return np.array([e.range_hat - d for e, (d, _) in zip(est, truth)])


def rmse(estimates: Sequence[Sequence[TargetEstimate]], truths: Sequence[RadarScene]) -> float:
    if len(estimates) != len(truths):
        raise ValueError("need one scene per trial")
    if not estimates:
        raise ValueError("no trials")
    errs = np.concatenate([matched_errors(e, t) for e, t in zip(estimates, truths)])
    return float(np.sqrt(np.mean(errs ** 2)))
