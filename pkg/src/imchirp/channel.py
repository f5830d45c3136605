"""Radar and communication channels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .waveform import TimeFrame, WaveformConfig

SPEED_OF_LIGHT = 299_792_458.0


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class RadarScene:
    """Point reflectors as ``(distance_m, reflection_coefficient)`` pairs."""

    targets: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple((float(d), float(a)) for d, a in self.targets))
        dist = [d for d, _ in self.targets]
        if not dist:
            raise SceneError("scene has no targets")
        if any(d < 0 for d in dist):
            raise SceneError("distances must be non-negative")
        if any(b <= a for a, b in zip(dist, dist[1:])):
            raise SceneError("target distances must be strictly increasing")

    @property
    def distances(self) -> np.ndarray:
        return np.array([d for d, _ in self.targets])

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([a for _, a in self.targets])

    @property
    def delays(self) -> np.ndarray:
        return 2 * self.distances / SPEED_OF_LIGHT

    def check_range(self, config: WaveformConfig) -> None:
        if np.any(self.delays > config.T_CP):
            raise SceneError(
                f"target beyond maximum range {config.max_range:.3f} m (c*T_CP/2)")


def radar_cfr(scene: RadarScene, config: WaveformConfig) -> np.ndarray:
    scene.check_range(config)
    k = config.bins
    h = np.zeros(k.size, dtype=complex)
    for tau, a in zip(scene.delays, scene.coefficients):
        h += a * np.exp(-2j * np.pi * config.f_c * tau) * np.exp(-2j * np.pi * k * tau / config.T_chirp)
    return h


def complex_noise(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``sigma2``."""
    if sigma2 < 0:
        raise ValueError("noise variance must be non-negative")
    scale = math.sqrt(sigma2 / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def apply_radar_channel(w: np.ndarray, h: np.ndarray, sigma2: float,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    if sigma2 < 0:
        raise ValueError("noise variance must be non-negative")
    b = np.asarray(w) * np.asarray(h)
    if sigma2 > 0:
        if rng is None:
            raise ValueError("an RNG is required when sigma2 > 0")
        b = b + complex_noise(b.shape, sigma2, rng)
    return b


def snr_to_sigma2(snr_db: float, w: np.ndarray | float = 1.0) -> float:
    """Per-bin noise variance for a given SNR over the mean occupied-bin energy.

    ``w`` is either the transmitted bin vector or its mean power directly.
    An infinite SNR maps to zero noise.
    """
    ref = float(np.mean(np.abs(w) ** 2)) if np.ndim(w) else float(w)
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return ref / 10 ** (snr_db / 10)


# ----------------------------------------------------------------------------
# Multipath fading for the communication link
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class FadingProfile:
    """Taps as ``(delay_s, power_db, rician_K)``; K = inf gives a fixed LOS tap."""

    taps: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "taps", tuple((float(t), float(p), float(k)) for t, p, k in self.taps))
        if not self.taps:
            raise SceneError("fading profile has no taps")
        for t, _, k in self.taps:
            if t < 0:
                raise SceneError("tap delays must be non-negative")
            if k < 0:
                raise SceneError("Rician K must be non-negative")

    def check(self, config: WaveformConfig) -> None:
        if any(t >= config.T_CP for t, _, _ in self.taps):
            raise SceneError("tap delay exceeds the cyclic prefix")

    @property
    def powers(self) -> np.ndarray:
        """Linear tap powers normalised to unit total gain."""
        p = 10 ** (np.array([p for _, p, _ in self.taps]) / 10)
        return p / p.sum()

    @property
    def delays(self) -> np.ndarray:
        return np.array([t for t, _, _ in self.taps])


INDOOR_RICIAN = FadingProfile(((0.0, 0.0, 10.0), (10e-9, -10.0, 0.0), (20e-9, -20.0, 0.0)))


def realize_fading(profile: FadingProfile, config: WaveformConfig,
                   rng: np.random.Generator | int) -> list[tuple[float, complex]]:
    profile.check(config)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    taps = []
    for (delay, _, K), P in zip(profile.taps, profile.powers):
        if math.isinf(K):
            g = complex(math.sqrt(P))
        else:
            diffuse = complex_noise((), 1.0, rng)
            g = math.sqrt(P) * (math.sqrt(K / (K + 1)) + math.sqrt(1 / (K + 1)) * complex(diffuse))
        taps.append((float(delay), complex(g)))
    return taps


def multipath_cfr(taps: Sequence[tuple[float, complex]], config: WaveformConfig,
                  bins: np.ndarray | None = None) -> np.ndarray:
    """Baseband response ``sum_i g_i exp(-j 2 pi k tau_i / T_chirp)`` per bin."""
    k = config.bins if bins is None else bins
    h = np.zeros(np.shape(k), dtype=complex)
    for tau, g in taps:
        h += g * np.exp(-2j * np.pi * k * tau / config.T_chirp)
    return h


def apply_multipath(frame: TimeFrame, taps: Sequence[tuple[float, complex]],
                    config: WaveformConfig) -> TimeFrame:
    """Filter a CP-prefixed frame with delays no longer than the CP.

    The channel is applied to one period in the frequency domain, which keeps
    fractional delays exact and equals linear convolution once the CP is
    stripped.
    """
    n = config.N
    if len(frame.samples) != config.N_CP + n:
        raise ValueError("frame length does not match the configuration")
    signed = np.fft.fftfreq(n, d=1.0 / n)
    payload = np.fft.ifft(np.fft.fft(frame.payload) * multipath_cfr(taps, config, signed))
    samples = np.concatenate([payload[n - config.N_CP:], payload]) if config.N_CP else payload
    return TimeFrame(samples=samples, sample_rate=frame.sample_rate, n_cp=frame.n_cp)


def add_time_noise(frame: TimeFrame, sigma2_bin: float, config: WaveformConfig,
                   rng: np.random.Generator) -> TimeFrame:
    """AWGN in time such that each demodulated bin sees variance ``sigma2_bin``.

    Demodulation scales the N-point DFT by 1/N, so the per-sample variance is
    ``N * sigma2_bin``.
    """
    if sigma2_bin == 0:
        return frame
    noisy = frame.samples + complex_noise(frame.samples.shape, config.N * sigma2_bin, rng)
    return TimeFrame(samples=noisy, sample_rate=frame.sample_rate, n_cp=frame.n_cp)
