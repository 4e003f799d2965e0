"""Command-line interface: simulate, probe, predict, filters."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import periodicity as per
from .core import Backend
from .filters import channelizer_filter, interpolation_filter
from .pipeline import (TAPS, ConfigError, RunConfig, export_results, load_config, run_closed_loop,
                       run_stage_probe, single_tone_config, tap_chains)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else single_tone_config()
    changes = {}
    if args.backend:
        changes["backend"] = Backend(args.backend)
    if args.modulus:
        changes["accumulator_modulus"] = args.modulus
        changes["ddc_window"] = None
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    if getattr(args, "duration", None):
        changes["duration"] = args.duration
    return replace(cfg, **changes).validate() if changes else cfg


def cmd_simulate(args) -> int:
    cfg = _config(args)
    result = run_closed_loop(cfg)
    for k, tr in enumerate(result.tones):
        amp = ", ".join(f"{f:.2f} Hz ({p:.1f} dB)" for f, p in (tr.amp_psd.detected_spurs if tr.amp_psd else []))
        print(f"tone {k} band {tr.tone.band} fcw {tr.tone.fcw}: amp spurs [{amp or 'none'}]")
    ddc = result.periodicity["ddc"]
    print(f"DDC output period: predicted {ddc.period}, verified {ddc.verified[-1]}")
    print(f"saturations: {dict(result.saturation) or 'none'}; wall time {result.wall_time:.1f} s")
    if args.out:
        manifest = export_results(result, args.out)
        print(f"wrote {len(manifest['files'])} files + manifest.json to {args.out}")
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg = _config(args)
    near = None if args.near_mhz is None else args.near_mhz * 1e6
    res = run_stage_probe(cfg, args.tap, args.nfft, near)
    print(f"tap {args.tap}: n_fft {args.nfft}, rate {res.stream.sample_rate / 1e6:g} MHz, "
          f"predicted period {res.predicted_period}")
    print(f"peak {res.peak_freq / 1e6:.6f} MHz (bin {res.peak_bin}), concentration {res.concentration:.6f}")
    for f, p in res.peaks:
        print(f"  {f / 1e6:12.6f} MHz {p:8.2f} dB")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / f"probe_{args.tap}_{args.nfft}.csv",
                   np.column_stack([res.spectrum.freqs, res.spectrum.psd]), delimiter=",",
                   header="freq_hz,power_db", comments="")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _config(args)
    out = {tap: per.predict_period(chain).period for tap, chain in tap_chains(cfg).items()}
    spurs = per.spur_frequency_prediction(cfg.accumulator_modulus, cfg.window)
    out["spur_lines_hz"] = [round(f, 3) for f in spurs]
    out["ddc_output_rate_hz"] = cfg.tones[0].sample_rate / cfg.window
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_filters(args) -> int:
    for filt in (interpolation_filter(), channelizer_filter()):
        gain = 8.0 if filt.name == "interpolation" else 1.0
        print(f"{filt.name}: {len(filt)} taps, 18-bit with {filt.frac_bits} fractional bits, "
              f"stopband {filt.stopband_attenuation_db(True, gain):.1f} dB, "
              f"passband ripple {filt.passband_ripple_db(True):.4f} dB")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            f, g = filt.response(4096, quantized=True)
            np.savetxt(out / f"{filt.name}_response.csv", np.column_stack([f, 20 * np.log10(g / gain + 1e-300)]),
                       delimiter=",", header="freq_hz,gain_db", comments="")
            np.savetxt(out / f"{filt.name}_taps.csv", filt.int_taps, fmt="%d", header=f"frac_bits={filt.frac_bits}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--backend", choices=["fixed", "float"])
    common.add_argument("--modulus", type=int, help="accumulator modulus and DDC window (65536 or 65520)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mkid-twin", description="MKID readout DSP chain digital twin")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="closed-loop run")
    s.add_argument("--workers", type=int)
    s.add_argument("--duration", type=int, help="DDC output samples per tone")
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("probe", parents=[common], help="spectrum and bin alignment at one stage")
    s.add_argument("--tap", required=True, choices=TAPS)
    s.add_argument("--nfft", type=int, required=True)
    s.add_argument("--near-mhz", type=float, help="look for the peak near this frequency")
    s.set_defaults(func=cmd_probe)
    s = sub.add_parser("predict", parents=[common], help="period and spur prediction, no simulation")
    s.set_defaults(func=cmd_predict)
    s = sub.add_parser("filters", parents=[common], help="designed filter responses")
    s.set_defaults(func=cmd_filters)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
