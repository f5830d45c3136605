"""Seeded Monte Carlo campaigns and their CSV output.

Each trial draws from its own generator, seeded by the campaign seed and the
``(point, trial)`` position, so results do not depend on how trials are
spread over worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .channel import (INDOOR_RICIAN, FadingProfile, RadarScene, add_time_noise,
                      apply_multipath, apply_radar_channel, multipath_cfr, radar_cfr,
                      realize_fading, snr_to_sigma2)
from .codec import SchemeParams, count_constrained, encode, floor_log2, random_bits, s_max
from .comms import ber_bler, demodulate, equalize_despread, ml_detect, two_step_detect
from .radar import default_grid, estimate_multi, matched_errors
from .waveform import (WaveformConfig, desk_scale, fdss_for, frequency_symbols, ieee_80211ay,
                       pmepr, synthesize, write_frame)

SCENARIOS = ("radar-1target", "radar-2target", "comm-awgn", "comm-fading", "pmepr",
             "smax-sweep", "synthesize")

# Target draws: (distance range in metres, reflection coefficient)
SCENE_DRAWS = {
    "radar-1target": (((0.5, 6.5), -1.0),),
    "radar-2target": (((1.3, 3.3), -1.0), ((3.6, 5.6), -0.5)),
}


class ConfigError(ValueError):
    """Bad campaign configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class Campaign:
    scenario: str
    waveform: WaveformConfig = field(default_factory=ieee_80211ay)
    L: int = 2
    H: int = 2
    S: int | None = None
    index_separation: bool = True
    snr_points: tuple[float, ...] = (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0)
    trials: int = 1000
    seed: int = 1
    estimator: str = "mf"
    detector: str = "ml"
    targets: tuple[tuple[float, float], ...] | None = None
    fading: FadingProfile = INDOOR_RICIAN
    pmepr_L: tuple[int, ...] = (1, 2, 4)
    pmepr_chirps: tuple[str, ...] = ("linear", "sinusoidal")
    messages: int = 10_000
    m_min: int = 8
    m_max: int = 2048
    bits: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.scenario in ("radar-1target", "radar-2target", "comm-awgn", "comm-fading") \
                and not self.snr_points:
            raise ConfigError("snr list must be non-empty")
        if self.estimator not in ("mf", "lmmse"):
            raise ConfigError(f"estimator must be mf or lmmse, got {self.estimator!r}")
        if self.detector not in ("ml", "two-step"):
            raise ConfigError(f"detector must be ml or two-step, got {self.detector!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.messages < 1 or self.workers < 1:
            raise ConfigError("messages and workers must be >= 1")

    def scheme(self, L: int | None = None) -> SchemeParams:
        L = self.L if L is None else L
        M = self.waveform.M
        if self.S is not None and L == 2:
            S = self.S if self.index_separation else 1
        elif self.index_separation and L == 2:
            S = s_max(M)
        else:
            S = 1
        try:
            return SchemeParams(M=M, L=L, H=self.H, S=S)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def describe(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["fading"] = [list(t) for t in self.fading.taps]
        d.pop("workers")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class TrialRecord:
    point: int
    trial: int
    snr_db: float
    truth: str
    estimate: str
    metric: float


@dataclass
class CampaignResult:
    columns: list[str]
    rows: list[list[Any]]
    metadata: dict[str, Any]
    records: list[TrialRecord] = field(default_factory=list)

    def to_csv(self, timestamp: bool = True) -> str:
        buf = io.StringIO()
        if timestamp:
            buf.write(f"# generated: {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
        for key, value in self.metadata.items():
            buf.write(f"# {key}: {value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def records_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["seed", "point", "trial", "snr_db", "truth", "estimate", "metric"])
        seed = self.metadata.get("seed", "")
        for r in self.records:
            writer.writerow([seed, r.point, r.trial, _fmt(r.snr_db), r.truth, r.estimate, _fmt(r.metric)])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return v


def strip_timestamp(text: str) -> str:
    """CSV payload without the ``# generated:`` line."""
    return "".join(line for line in text.splitlines(keepends=True)
                   if not line.startswith("# generated:"))


# ----------------------------------------------------------------------------
# Statistics
# ----------------------------------------------------------------------------

def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def rmse_interval(sq_errors: np.ndarray, z: float = 1.96) -> tuple[float, float, float]:
    """RMSE with a normal-approximation interval on the per-trial mean square error."""
    mse = float(np.mean(sq_errors))
    half = z * float(np.std(sq_errors, ddof=1)) / math.sqrt(len(sq_errors)) if len(sq_errors) > 1 else math.inf
    return math.sqrt(mse), math.sqrt(max(0.0, mse - half)), math.sqrt(mse + half)


# ----------------------------------------------------------------------------
# Trial execution
# ----------------------------------------------------------------------------

def trial_rng(seed: int, point: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(point, trial)))


def _map(fn: Callable, jobs: Sequence, workers: int) -> list:
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    chunk = max(1, len(jobs) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=chunk))


def draw_scene(campaign: Campaign, rng: np.random.Generator) -> RadarScene:
    if campaign.targets is not None:
        return RadarScene(campaign.targets)
    return RadarScene(tuple((rng.uniform(lo, hi), a) for (lo, hi), a in SCENE_DRAWS[campaign.scenario]))


def radar_trial(job) -> tuple[np.ndarray, TrialRecord]:
    campaign, point, snr, trial = job
    cfg = campaign.waveform
    rng = trial_rng(campaign.seed, point, trial)
    params = campaign.scheme()
    msg = encode(random_bits(params, rng), params)
    w = frequency_symbols(msg, cfg, fdss_for(cfg))
    scene = draw_scene(campaign, rng)
    sigma2 = snr_to_sigma2(snr, w)
    b = apply_radar_channel(w, radar_cfr(scene, cfg), sigma2, rng)
    est = estimate_multi(b, w, len(scene.targets), cfg, sigma2, campaign.estimator)
    err = matched_errors(est, scene)
    rec = TrialRecord(point, trial, snr,
                      truth=" ".join(f"{d:.6f}:{a:g}" for d, a in scene.targets),
                      estimate=" ".join(f"{e.range_hat:.6f}:{e.a_hat:.6f}" for e in est),
                      metric=float(np.mean(err ** 2)))
    return err, rec


def comm_trial(job) -> tuple[int, bool, TrialRecord]:
    campaign, point, snr, trial = job
    cfg = campaign.waveform
    fd = fdss_for(cfg)
    rng = trial_rng(campaign.seed, point, trial)
    params = campaign.scheme()
    bits = random_bits(params, rng)
    msg = encode(bits, params)
    frame = synthesize(msg, cfg, fd)
    if campaign.scenario == "comm-fading":
        taps = realize_fading(campaign.fading, cfg, rng)
        frame = apply_multipath(frame, taps, cfg)
        h = multipath_cfr(taps, cfg)
    else:
        h = np.ones(cfg.M, dtype=complex)
    sigma2 = snr_to_sigma2(snr, frequency_symbols(msg, cfg, fd))
    frame = add_time_noise(frame, sigma2, cfg, rng)
    x = equalize_despread(demodulate(frame, cfg), h, fd, cfg)
    det = two_step_detect(x, params) if campaign.detector == "two-step" else ml_detect(x, params)
    errors = sum(a != b for a, b in zip(det.bits, bits))
    rec = TrialRecord(point, trial, snr,
                      truth=" ".join(map(str, msg.indices)),
                      estimate=" ".join(map(str, det.indices)), metric=float(errors))
    return errors, errors > 0, rec


# ----------------------------------------------------------------------------
# Campaign runners
# ----------------------------------------------------------------------------

def _metadata(campaign: Campaign, **extra) -> dict[str, Any]:
    meta = {
        "imchirp": __version__,
        "scenario": campaign.scenario,
        "config_digest": campaign.digest(),
        "seed": campaign.seed,
        "chirp": campaign.waveform.chirp,
        "waveform": ";".join(f"{k}={v}" for k, v in dataclasses.asdict(campaign.waveform).items()),
    }
    meta.update(extra)
    return meta


def _jobs(campaign: Campaign) -> list[tuple]:
    return [(campaign, p, float(snr), t)
            for p, snr in enumerate(campaign.snr_points) for t in range(campaign.trials)]


def run_radar_campaign(campaign: Campaign) -> CampaignResult:
    params = campaign.scheme()
    grid = default_grid(campaign.waveform)
    results = _map(radar_trial, _jobs(campaign), campaign.workers)
    rows = []
    for p, snr in enumerate(campaign.snr_points):
        chunk = results[p * campaign.trials:(p + 1) * campaign.trials]
        sq = np.array([float(np.mean(err ** 2)) for err, _ in chunk])
        value, lo, hi = rmse_interval(sq)
        rows.append([float(snr), value, campaign.trials, campaign.estimator,
                     int(params.S > 1), params.L, params.S, lo, hi, campaign.seed])
    meta = _metadata(campaign, estimator=campaign.estimator,
                     matching="descending |a_hat| to descending |a|",
                     final_resolution_m=f"{grid.final_resolution(campaign.waveform):.3e}",
                     targets=campaign.targets or SCENE_DRAWS[campaign.scenario])
    return CampaignResult(["snr_db", "rmse_m", "trials", "estimator", "IS_flag", "L", "S",
                           "rmse_ci_low", "rmse_ci_high", "seed"],
                          rows, meta, [r for _, r in results])


def run_comm_campaign(campaign: Campaign) -> CampaignResult:
    params = campaign.scheme()
    results = _map(comm_trial, _jobs(campaign), campaign.workers)
    rows = []
    for p, snr in enumerate(campaign.snr_points):
        chunk = results[p * campaign.trials:(p + 1) * campaign.trials]
        bit_err = sum(e for e, _, _ in chunk)
        blk_err = sum(b for _, b, _ in chunk)
        n_bits = campaign.trials * params.p
        ber_lo, ber_hi = wilson_interval(bit_err, n_bits)
        bl_lo, bl_hi = wilson_interval(blk_err, campaign.trials)
        rows.append([float(snr), bit_err / n_bits, blk_err / campaign.trials, campaign.trials,
                     campaign.detector, int(params.S > 1), params.L, params.S, params.p,
                     ber_lo, ber_hi, bl_lo, bl_hi, campaign.seed])
    extra = {"detector": campaign.detector,
             "equalizer": "conjugate composite response (h*c*), perfect CSI",
             "channel": "fading " + str(campaign.fading.taps) if campaign.scenario == "comm-fading" else "awgn"}
    if params.L > 2:
        extra["note"] = f"L={params.L} detection uses top-L index selection"
    return CampaignResult(["snr_db", "ber", "bler", "trials", "detector", "IS_flag", "L", "S", "p",
                           "ber_ci_low", "ber_ci_high", "bler_ci_low", "bler_ci_high", "seed"],
                          rows, _metadata(campaign, **extra), [r for _, _, r in results])


def _pmepr_job(job) -> tuple[float, float]:
    campaign, chirp, L, index = job
    cfg = campaign.waveform.with_chirp(chirp)
    params = campaign.scheme(L)
    vals = []
    for t in range(index, min(index + _PMEPR_BLOCK, campaign.messages)):
        rng = trial_rng(campaign.seed, L, t)
        vals.append(pmepr(encode(random_bits(params, rng), params), cfg, fdss=fdss_for(cfg)))
    return max(vals), sum(vals)


_PMEPR_BLOCK = 500


def run_pmepr_campaign(campaign: Campaign) -> CampaignResult:
    rows = []
    for chirp in campaign.pmepr_chirps:
        for L in campaign.pmepr_L:
            jobs = [(campaign, chirp, L, i) for i in range(0, campaign.messages, _PMEPR_BLOCK)]
            parts = _map(_pmepr_job, jobs, campaign.workers)
            params = campaign.scheme(L)
            rows.append([chirp, L, max(m for m, _ in parts),
                         sum(s for _, s in parts) / campaign.messages, campaign.messages,
                         int(params.S > 1), params.S, round(10 * math.log10(L), 6), campaign.seed])
    meta = _metadata(campaign, normalization="ensemble mean power sum|c_k|^2", oversample=4)
    meta.pop("chirp")
    return CampaignResult(["profile", "L", "max_pmepr_db", "mean_pmepr_db", "messages",
                           "IS_flag", "S", "bound_db", "seed"], rows, meta)


def smax_row(M: int) -> list[int]:
    s = s_max(M)
    count = count_constrained(M, s)
    return [M, s, count, floor_log2(count)]


def run_smax_sweep(M_min: int, M_max: int) -> CampaignResult:
    if not 2 <= M_min <= M_max:
        raise ConfigError("need 2 <= m_min <= m_max")
    rows = [smax_row(M) for M in range(M_min, M_max + 1)]
    return CampaignResult(["M", "s_max", "count_at_smax", "p1"], rows,
                          {"imchirp": __version__, "scenario": "smax-sweep",
                           "range": f"{M_min}..{M_max}"})


def synthesize_frame(campaign: Campaign, out: str | Path):
    params = campaign.scheme()
    if campaign.bits is not None:
        bits = tuple(int(b) for b in campaign.bits)
    else:
        bits = random_bits(params, trial_rng(campaign.seed, 0, 0))
    try:
        msg = encode(bits, params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    frame = synthesize(msg, campaign.waveform)
    write_frame(out, frame)
    return msg, frame


def run(campaign: Campaign) -> CampaignResult:
    if campaign.scenario in ("radar-1target", "radar-2target"):
        return run_radar_campaign(campaign)
    if campaign.scenario in ("comm-awgn", "comm-fading"):
        return run_comm_campaign(campaign)
    if campaign.scenario == "pmepr":
        return run_pmepr_campaign(campaign)
    if campaign.scenario == "smax-sweep":
        return run_smax_sweep(campaign.m_min, campaign.m_max)
    raise ConfigError(f"scenario {campaign.scenario!r} does not produce a CSV")


# ----------------------------------------------------------------------------
# Config files
# ----------------------------------------------------------------------------

WAVEFORM_KEYS = {"N": int, "N_CP": int, "M": int, "L_d": int, "L_u": int,
                 "D": float, "f_sample": float, "f_c": float}


def read_config(path: str | Path) -> dict[str, tuple[str, int]]:
    """Parse ``key = value`` lines; returns ``{key: (value, line_number)}``."""
    out: dict[str, tuple[str, int]] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{no}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{no}: duplicate key {key!r} (first on line {out[key][1]})")
        out[key] = (value, no)
    return out


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.replace(";", ",").split(",") if v.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _targets(s: str) -> tuple[tuple[float, float], ...]:
    out = []
    for item in s.split(","):
        d, a = item.split(":")
        out.append((float(d), float(a)))
    return tuple(out)


def _fading(s: str) -> FadingProfile:
    taps = []
    for item in s.split(","):
        t, p, k = item.split(":")
        taps.append((float(t), float(p), float(k)))
    return FadingProfile(tuple(taps))


def _chirps(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(",") if v.strip())


FIELD_PARSERS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "scenario": ("scenario", str),
    "L": ("L", int),
    "H": ("H", int),
    "S": ("S", int),
    "index_separation": ("index_separation", _bool),
    "snr": ("snr_points", _floats),
    "trials": ("trials", int),
    "seed": ("seed", int),
    "estimator": ("estimator", str),
    "detector": ("detector", str),
    "targets": ("targets", _targets),
    "fading": ("fading", _fading),
    "pmepr_L": ("pmepr_L", _ints),
    "messages": ("messages", int),
    "m_min": ("m_min", int),
    "m_max": ("m_max", int),
    "bits": ("bits", str),
    "workers": ("workers", int),
}
OTHER_KEYS = {"chirp", "desk_scale", "out", "records"} | set(WAVEFORM_KEYS)


def build_campaign(values: dict[str, tuple[str, int | None]],
                   source: str = "config") -> tuple[Campaign, dict[str, str]]:
    """Turn raw ``key -> (value, line)`` pairs into a :class:`Campaign`.

    Returns the campaign plus the non-campaign keys (``out``, ``records``).
    """
    def where(key):
        line = values[key][1]
        return f"{source}:{line}: key {key!r}" if line else f"option {key!r}"

    unknown = set(values) - set(FIELD_PARSERS) - OTHER_KEYS
    if unknown:
        key = sorted(unknown, key=lambda k: values[k][1] or 0)[0]
        raise ConfigError(f"{where(key)}: unknown key")

    kwargs: dict[str, Any] = {}
    for key, (name, parse) in FIELD_PARSERS.items():
        if key in values:
            try:
                kwargs[name] = parse(values[key][0])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{where(key)}: {exc}") from None

    chirp = values.get("chirp", ("linear", None))[0]
    chirps = _chirps(chirp)
    try:
        small = _bool(values["desk_scale"][0]) if "desk_scale" in values else False
    except ValueError as exc:
        raise ConfigError(f"{where('desk_scale')}: {exc}") from None
    scenario = kwargs.setdefault("scenario", "radar-1target")
    if scenario == "pmepr":
        if "chirp" in values:
            kwargs["pmepr_chirps"] = chirps
        chirp = chirps[0] if chirps else "linear"
    elif len(chirps) != 1:
        raise ConfigError(f"{where('chirp')}: exactly one chirp profile expected")
    base = desk_scale(chirp) if small else ieee_80211ay(chirp)
    overrides = {}
    for key, typ in WAVEFORM_KEYS.items():
        if key in values:
            try:
                overrides[key] = typ(values[key][0])
            except ValueError as exc:
                raise ConfigError(f"{where(key)}: {exc}") from None
    try:
        kwargs["waveform"] = dataclasses.replace(base, **overrides)
        campaign = Campaign(**kwargs)
        campaign.scheme()
        for c in campaign.pmepr_chirps:
            campaign.waveform.with_chirp(c)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    rest = {k: values[k][0] for k in ("out", "records") if k in values}
    return campaign, rest
