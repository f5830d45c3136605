import math

import numpy as np
import pytest

from imchirp.campaign import (Campaign, ConfigError, build_campaign, read_config, run,
                              run_smax_sweep, strip_timestamp, trial_rng, wilson_interval,
                              rmse_interval)
from imchirp.codec import count_constrained, s_max
from imchirp.radar import default_grid
from imchirp.waveform import desk_scale
from conftest import brute_pairs


def _desk(scenario, **kw):
    return Campaign(scenario, waveform=desk_scale(kw.pop("chirp", "linear")), **kw)


def test_trial_rng_is_positional():
    a = trial_rng(5, 1, 2).integers(0, 2 ** 32, 4)
    assert np.array_equal(a, trial_rng(5, 1, 2).integers(0, 2 ** 32, 4))
    assert not np.array_equal(a, trial_rng(5, 2, 1).integers(0, 2 ** 32, 4))
    assert not np.array_equal(a, trial_rng(6, 1, 2).integers(0, 2 ** 32, 4))


def test_campaign_validation():
    with pytest.raises(ConfigError):
        Campaign("radar-3target")
    with pytest.raises(ConfigError):
        Campaign("radar-1target", trials=0)
    with pytest.raises(ConfigError):
        Campaign("comm-awgn", snr_points=())
    with pytest.raises(ConfigError):
        Campaign("radar-1target", estimator="music")
    with pytest.raises(ConfigError):
        Campaign("radar-1target", seed=-1)


def test_scheme_selection():
    c = Campaign("comm-awgn")
    assert c.scheme().S == 362
    assert Campaign("comm-awgn", index_separation=False).scheme().S == 1
    assert Campaign("comm-awgn", S=100).scheme().S == 100
    assert c.scheme(4).S == 1
    with pytest.raises(ConfigError):
        Campaign("comm-awgn", S=800).scheme()


def test_noiseless_radar_point():
    res = run(_desk("radar-1target", snr_points=(math.inf,), trials=10))
    assert res.rows[0][1] <= default_grid(desk_scale()).final_resolution(desk_scale())
    assert res.columns[:7] == ["snr_db", "rmse_m", "trials", "estimator", "IS_flag", "L", "S"]
    assert res.rows[0][-1] == 1


def test_two_target_noiseless_point():
    # the narrower desk-scale band leaves a few mm of inter-target sidelobe bias
    res = run(_desk("radar-2target", snr_points=(math.inf,), trials=5, chirp="sinusoidal"))
    assert res.rows[0][1] < 1e-2


def test_noiseless_comm_point():
    for scenario in ("comm-awgn", "comm-fading"):
        res = run(_desk(scenario, snr_points=(math.inf,), trials=30))
        assert res.rows[0][1:3] == [0.0, 0.0]


def test_comm_ber_decreases_with_snr():
    res = run(_desk("comm-awgn", snr_points=(-20.0, -15.0, -10.0), trials=150))
    ber = [r[1] for r in res.rows]
    assert ber[0] > ber[1] > ber[2]


def test_results_do_not_depend_on_workers():
    serial = run(_desk("comm-awgn", snr_points=(-6.0,), trials=12))
    pooled = run(_desk("comm-awgn", snr_points=(-6.0,), trials=12, workers=2))
    assert strip_timestamp(serial.to_csv()) == strip_timestamp(pooled.to_csv())


def test_csv_is_deterministic():
    c = _desk("radar-1target", snr_points=(-10.0, 0.0), trials=4)
    first, second = run(c).to_csv(), run(c).to_csv()
    assert strip_timestamp(first) == strip_timestamp(second)
    assert first.startswith("# generated:")
    assert "# generated:" not in run(c).to_csv(timestamp=False)
    assert "# config_digest: " + c.digest() in first


def test_pmepr_campaign_small():
    res = run(_desk("pmepr", messages=40, pmepr_L=(1, 2), pmepr_chirps=("sinusoidal",)))
    by_l = {r[1]: r for r in res.rows}
    assert by_l[1][2] == pytest.approx(0.0, abs=0.1)
    assert by_l[2][2] <= 10 * math.log10(2) + 0.1
    assert by_l[2][7] == pytest.approx(3.0103, abs=1e-4)


def test_smax_sweep_rows():
    res = run_smax_sweep(8, 64)
    for M, s, count, p1 in res.rows:
        assert s == s_max(M)
        assert count == count_constrained(M, s) == len(brute_pairs(M, s))
        assert 2 ** p1 <= count < 2 ** (p1 + 1)
    with pytest.raises(ConfigError):
        run_smax_sweep(10, 9)


def test_intervals():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0 < hi < 0.05
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    value, lo, hi = rmse_interval(np.array([0.0, 0.04]))
    assert value == pytest.approx(math.sqrt(0.02))
    assert lo <= value <= hi


def test_read_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nscenario = comm-awgn  # trailing\n\ntrials=7\nsnr = -5, 0, inf\n")
    values = read_config(p)
    assert values["trials"] == ("7", 4)
    campaign, rest = build_campaign(values, str(p))
    assert campaign.trials == 7
    assert campaign.snr_points == (-5.0, 0.0, math.inf)
    assert rest == {}


@pytest.mark.parametrize("text,line,needle", [
    ("scenario = pmepr\nno equals sign here\n", 2, "expected"),
    ("trials = 3\ntrials = 4\n", 2, "duplicate"),
    ("scenario = comm-awgn\n\nflavour = mint\n", 3, "unknown"),
    ("seed = 1\nH = three\n", 2, "'H'"),
])
def test_config_errors_name_the_line(tmp_path, text, line, needle):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(ConfigError) as exc:
        build_campaign(read_config(p), str(p))
    assert f"{p}:{line}" in str(exc.value)
    assert needle in str(exc.value)


def test_config_semantic_errors():
    with pytest.raises(ConfigError):
        build_campaign({"H": ("3", None)})
    with pytest.raises(ConfigError):
        build_campaign({"chirp": ("linear,sinusoidal", None)})
    with pytest.raises(ConfigError):
        build_campaign({"N_CP": ("4096", None)})
    with pytest.raises(ConfigError):
        read_config("/nonexistent/path.cfg")
