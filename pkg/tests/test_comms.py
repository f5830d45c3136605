import itertools

import numpy as np
import pytest

from imchirp.codec import (IndexMessage, SchemeParams, constellation, encode, random_bits,
                           random_message, unrank_indices)
from imchirp.comms import (ber_bler, demodulate, equalize_despread, ml_detect,
                           two_step_detect)
from imchirp.waveform import TimeFrame, WaveformConfig, fdss_for, frequency_symbols, synthesize

SMALL = WaveformConfig(N=128, N_CP=32, M=64, L_d=-31, L_u=32, D=48, f_sample=1.0e9, f_c=60e9,
                       chirp="linear")


def _loop(msg, config, noise=None):
    fdss = fdss_for(config)
    frame = synthesize(msg, config, fdss)
    y = demodulate(frame, config)
    if noise is not None:
        y = y + noise
    return equalize_despread(y, 1.0, fdss, config)


def test_demodulate_inverts_synthesis(full_linear, rng):
    msg = random_message(SchemeParams(1448, 2, S=362), rng)
    fdss = fdss_for(full_linear)
    y = demodulate(synthesize(msg, full_linear, fdss), full_linear)
    assert np.allclose(y, frequency_symbols(msg, full_linear, fdss), atol=1e-10)


def test_demodulate_shift_theorem(full_linear, rng):
    cfg = full_linear
    frame = synthesize(random_message(SchemeParams(1448, 2), rng), cfg)
    g = 17
    delayed = np.r_[np.zeros(g), frame.samples[:-g]]
    y0 = demodulate(frame, cfg)
    y1 = demodulate(delayed, cfg)
    assert np.allclose(y1, y0 * np.exp(-2j * np.pi * cfg.bins * g / cfg.N), atol=1e-12)


def test_demodulate_edge_cases(full_linear):
    n = full_linear.N + full_linear.N_CP
    assert not demodulate(np.zeros(n, dtype=complex), full_linear).any()
    with pytest.raises(ValueError):
        demodulate(np.zeros(n - 1), full_linear)
    frame = TimeFrame(np.zeros(n, dtype=complex), full_linear.f_sample, full_linear.N_CP)
    assert demodulate(frame, full_linear).shape == (full_linear.M,)


def test_single_chirp_peak(full_linear):
    x = _loop(IndexMessage((517,), (1 + 0j,)), full_linear)
    assert int(np.argmax(x.real)) == 517


def test_despread_linearity_and_phase(full_linear, rng):
    fdss = fdss_for(full_linear)
    y1 = rng.standard_normal(full_linear.M) + 1j * rng.standard_normal(full_linear.M)
    y2 = rng.standard_normal(full_linear.M) + 1j * rng.standard_normal(full_linear.M)
    x1 = equalize_despread(y1, 1.0, fdss, full_linear)
    x2 = equalize_despread(y2, 1.0, fdss, full_linear)
    assert np.allclose(equalize_despread(2 * y1 - 3j * y2, 1.0, fdss, full_linear), 2 * x1 - 3j * x2)
    rot = np.exp(0.4j)
    assert np.allclose(equalize_despread(rot * y1, 1.0, fdss, full_linear), rot * x1)


def test_ml_single_dominant_entry():
    x = np.full(16, 0.1 + 0j)
    x[5] = 3.0
    res = ml_detect(x, SchemeParams(16, 1))
    assert res.indices == (5,) and res.psk == (1 + 0j,)


def test_ml_scale_invariance(rng):
    params = SchemeParams(64, 2, H=4, S=8)
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    a = ml_detect(x, params)
    b = ml_detect(7.5 * x, params)
    assert (a.indices, a.psk) == (b.indices, b.psk)


def test_ml_respects_separation():
    params = SchemeParams(64, 2, S=8)
    x = np.zeros(64, dtype=complex)
    x[[10, 12]] = 5.0   # best unconstrained pair is too close
    x[40] = 1.0
    res = ml_detect(x, params)
    i, j = res.indices
    assert min(j - i, 64 - (j - i)) >= 8
    assert 40 in res.indices
    two = two_step_detect(x, params)
    i, j = two.indices
    assert min(j - i, 64 - (j - i)) >= 8


def test_ml_matches_brute_force(rng):
    params = SchemeParams(16, 2, H=4, S=3)
    pts = constellation(4)
    for _ in range(20):
        x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        best = max(
            ((x[i] * np.conj(s1) + x[j] * np.conj(s2)).real, (i, j))
            for r in range(params.usable)
            for (i, j) in [unrank_indices(r, params)]
            for s1, s2 in itertools.product(pts, pts))
        assert ml_detect(x, params).metric == pytest.approx(best[0])
        assert ml_detect(x, params).indices == best[1]


def test_top_l_detection():
    params = SchemeParams(32, 4)
    x = np.zeros(32, dtype=complex)
    x[[3, 9, 20, 31]] = [1.0, -2.0, 1.5, -0.7]
    res = ml_detect(x, params)
    assert res.indices == (3, 9, 20, 31)
    assert res.psk == (1, -1, 1, -1)


def test_two_step_requires_pairs():
    with pytest.raises(ValueError):
        two_step_detect(np.zeros(8), SchemeParams(8, 1))


@pytest.mark.parametrize("H", [2, 4])
def test_noiseless_recovery_exhaustive(H):
    params = SchemeParams(64, 2, H=H, S=8)
    cfg = SMALL
    # every index pair in the usable codebook with a fixed PSK pattern
    for r in range(0, params.usable, 1 if H == 2 else 7):
        bits = tuple(int(b) for b in np.binary_repr(r, params.p1)) + (1,) * (params.p - params.p1)
        msg = encode(bits, params)
        x = _loop(msg, cfg)
        for det in (ml_detect(x, params), two_step_detect(x, params)):
            assert det.bits == bits
            assert det.usable


def test_true_message_has_max_metric(small_linear, rng):
    params = SchemeParams(small_linear.M, 2, S=5)
    for _ in range(20):
        msg = random_message(params, rng)
        x = _loop(msg, small_linear)
        truth = sum((x[i] * np.conj(s)).real for i, s in zip(msg.indices, msg.psk))
        assert ml_detect(x, params).metric == pytest.approx(truth)


def test_noiseless_recovery_full_scale(full_linear, rng):
    params = SchemeParams(1448, 2, S=362)
    for _ in range(50):
        bits = random_bits(params, rng)
        x = _loop(encode(bits, params), full_linear)
        assert ml_detect(x, params).bits == bits


def test_two_step_agrees_at_high_snr(rng):
    params = SchemeParams(64, 2, S=8)
    fdss = fdss_for(SMALL)
    agree = 0
    for _ in range(300):
        msg = random_message(params, rng)
        w = frequency_symbols(msg, SMALL, fdss)
        sigma2 = np.mean(np.abs(w) ** 2) / 10
        noise = np.sqrt(sigma2 / 2) * (rng.standard_normal(64) + 1j * rng.standard_normal(64))
        x = equalize_despread(w + noise, 1.0, fdss, SMALL)
        a, b = ml_detect(x, params), two_step_detect(x, params)
        agree += a.bits == b.bits
    assert agree >= 290


def test_unused_codeword_is_flagged():
    params = SchemeParams(16, 2)   # 120 pairs, 64 usable
    x = np.zeros(16, dtype=complex)
    x[[14, 15]] = 1.0
    res = ml_detect(x, params, usable_only=False)
    assert not res.usable
    assert len(res.bits) == params.p
    assert ml_detect(x, params).usable


def test_ber_bler_examples():
    p = 21
    truth = np.zeros(210, dtype=np.int8)
    assert ber_bler(truth, truth, p) == (0.0, 0.0)
    flipped = truth.copy()
    flipped[50] = 1
    assert ber_bler(flipped, truth, p) == pytest.approx((1 / 210, 1 / 10))
    assert ber_bler(1 - truth, truth, p) == (1.0, 1.0)
    with pytest.raises(ValueError):
        ber_bler(truth[:-1], truth, p)
    with pytest.raises(ValueError):
        ber_bler(truth[:200], truth[:200], p)
