"""Index-modulated circularly-shifted chirps for joint radar and communications."""

from .codec import (IndexMessage, SchemeParams, bit_capacity, circular_distance,
                    count_constrained, count_unconstrained, decode, encode, s_max,
                    spectral_efficiency)
from .waveform import (FdssCoefficients, TimeFrame, WaveformConfig, compute_fdss,
                       desk_scale, ieee_80211ay, pmepr, synthesize, synthesize_direct)
from .channel import SPEED_OF_LIGHT, FadingProfile, RadarScene, radar_cfr
from .radar import DelayGrid, TargetEstimate, estimate_multi, estimate_single
from .comms import DetectionResult, demodulate, equalize_despread, ml_detect, two_step_detect

__version__ = "0.1.0"
