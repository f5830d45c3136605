"""Command-line driver.

Exit codes: 0 success, 2 configuration error, 3 numerical/runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .campaign import SCENARIOS, ConfigError, build_campaign, read_config, run, synthesize_frame
from .channel import SceneError
from .radar import DegenerateWaveformError
from .waveform import ConfigurationError

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="imchirp",
        description="Monte Carlo campaigns for index-modulated circularly-shifted chirps.")
    p.add_argument("scenario_pos", nargs="?", metavar="SCENARIO", choices=SCENARIOS,
                   help=f"one of: {', '.join(SCENARIOS)} (same as --scenario)")
    p.add_argument("--config", type=Path, help="flat 'key = value' config file")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--snr", help="comma-separated SNR points in dB ('inf' for noiseless)")
    p.add_argument("--trials", type=int, help="trials per SNR point")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output path (CSV, or binary frame for 'synthesize'); default stdout")
    p.add_argument("--records", help="also write per-trial records to this CSV")
    p.add_argument("--is", dest="index_separation", action="store_true", default=None,
                   help="enable index separation (S = S_max unless --S is given)")
    p.add_argument("--no-is", dest="index_separation", action="store_false")
    p.add_argument("--estimator", choices=("mf", "lmmse"))
    p.add_argument("--detector", choices=("ml", "two-step"))
    p.add_argument("--chirp", help="linear or sinusoidal (pmepr accepts a comma list)")
    p.add_argument("--L", type=int, dest="L")
    p.add_argument("--S", type=int, dest="S")
    p.add_argument("--H", type=int, dest="H")
    p.add_argument("--desk-scale", action="store_true", default=None,
                   help="small N=256/M=181 preset with the same chirp and CP durations")
    p.add_argument("--workers", type=int)
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit the '# generated:' header line")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    return p


def _collect(args) -> dict[str, tuple[str, int | None]]:
    values: dict[str, tuple[str, int | None]] = {}
    if args.config is not None:
        values.update(read_config(args.config))
    flag_map = {
        "scenario": args.scenario or args.scenario_pos,
        "snr": args.snr, "trials": args.trials, "seed": args.seed, "out": args.out,
        "records": args.records, "estimator": args.estimator, "detector": args.detector,
        "chirp": args.chirp, "L": args.L, "S": args.S, "H": args.H, "workers": args.workers,
    }
    if args.index_separation is not None:
        flag_map["index_separation"] = "true" if args.index_separation else "false"
    if args.desk_scale:
        flag_map["desk_scale"] = "true"
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = (v.strip(), None)
    for k, v in flag_map.items():
        if v is not None:
            values[k] = (str(v), None)
    return values


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        source = str(args.config) if args.config else "config"
        campaign, extra = build_campaign(_collect(args), source)
        out = extra.get("out")
        if campaign.scenario == "synthesize":
            if not out:
                raise ConfigError("synthesize needs --out for the binary frame")
            msg, frame = synthesize_frame(campaign, out)
            print(f"wrote {len(frame.samples)} samples, indices={msg.indices}", file=sys.stderr)
            return 0
        result = run(campaign)
    except (ConfigError, ConfigurationError, SceneError) as exc:
        print(f"imchirp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateWaveformError, FloatingPointError, ArithmeticError, ValueError) as exc:
        print(f"imchirp: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    text = result.to_csv(timestamp=not args.no_timestamp)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if extra.get("records"):
        Path(extra["records"]).write_text(result.records_csv(), encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
