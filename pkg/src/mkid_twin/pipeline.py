"""Closed-loop orchestration, stage probes, configuration and result export."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import periodicity as per
from .analysis import Channelizer, ChannelizerConfig, Ddc, DdcConfig
from .core import Backend, IqStream, SaturationCounter
from .excitation import (INTERP_FACTOR, PHASOR_TABLE_LEN, Interpolator, band_upshift, combine,
                         downshift_quarter_rate, realize)
from .spectral import (NoiseStreams, SpectrumReport, amp_phase_noise, bin_alignment_metric, bin_of,
                       detect_spurs, estimate_psd, line_spectrum, signed_bin, top_peaks)
from .tonegen import CORDIC_ITERATIONS, FS_DEFAULT, N_BANDS, ToneConfig, ToneSource

log = logging.getLogger(__name__)

TAPS = ("tonegen", "downshift", "interp", "upshift", "channelizer_demod", "channelizer_out", "ddc")
TAP_FACTOR = {"tonegen": 1, "downshift": 1, "interp": 8, "upshift": 8, "channelizer_demod": 8,
              "channelizer_out": 1}
SUPPORTED_MODULI = (1 << 16, 65520)
FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class BandPlan:
    band: int
    fcws: tuple[int, ...]


@dataclass(frozen=True)
class PsdParams:
    seg_len: int | None = None
    overlap: float = 0.5
    window: str = "hann"
    min_prominence_db: float = 10.0


@dataclass(frozen=True)
class RunConfig:
    bands: tuple[BandPlan, ...]
    backend: Backend = Backend.FIXED
    accumulator_modulus: int = 1 << 16
    ddc_window: int | None = None
    duration: int = 256
    loopback_component: str = "I"
    psd: PsdParams = field(default_factory=PsdParams)
    seed: int = 0
    cordic_iterations: int = CORDIC_ITERATIONS
    settle_windows: int = 1
    block_size: int = 1 << 16
    workers: int = 1

    @property
    def window(self) -> int:
        return self.accumulator_modulus if self.ddc_window is None else self.ddc_window

    @property
    def tones(self) -> list[ToneConfig]:
        return [ToneConfig(fcw, self.accumulator_modulus, bp.band) for bp in self.bands for fcw in bp.fcws]

    @property
    def n_samples(self) -> int:
        """Samples simulated at 250 MHz."""
        return (self.duration + self.settle_windows) * self.window

    def validate(self) -> RunConfig:
        def bad(path, msg):
            raise ConfigError(f"{path}: {msg}")

        if not isinstance(self.backend, Backend):
            bad("backend", "must be 'fixed' or 'float'")
        m = self.accumulator_modulus
        if not isinstance(m, int) or not 0 < m <= 1 << 16:
            bad("accumulator_modulus", "must be an integer in (0, 65536]")
        if m not in SUPPORTED_MODULI:
            warnings.warn(f"accumulator_modulus={m} is neither 65536 nor 65520", stacklevel=2)
        if not isinstance(self.window, int) or self.window < 1:
            bad("ddc_window", "must be a positive integer")
        if not self.bands:
            bad("bands", "at least one tone is required")
        if len(self.bands) > N_BANDS:
            bad("bands", f"at most {N_BANDS} bands")
        seen = set()
        for k, bp in enumerate(self.bands):
            if not 0 <= bp.band < N_BANDS:
                bad(f"bands[{k}].band", f"must be in [0, {N_BANDS - 1}]")
            if bp.band in seen:
                bad(f"bands[{k}].band", "duplicate band")
            seen.add(bp.band)
            if not bp.fcws:
                bad(f"bands[{k}].fcw", "at least one tone is required")
            if len(bp.fcws) > PHASOR_TABLE_LEN:
                bad(f"bands[{k}].fcw", "at most 40 tones per band")
            for j, fcw in enumerate(bp.fcws):
                if not isinstance(fcw, int) or not 0 <= fcw < m:
                    bad(f"bands[{k}].fcw[{j}]", f"must be an integer in [0, {m})")
        if not isinstance(self.duration, int) or self.duration < 1:
            bad("duration", "must be a positive integer")
        if self.loopback_component not in ("I", "Q"):
            bad("loopback_component", "must be 'I' or 'Q'")
        if self.settle_windows < 0:
            bad("settle_windows", "must be >= 0")
        if self.block_size < 8 or self.block_size % 8:
            bad("block_size", "must be a positive multiple of 8")
        if self.workers < 1:
            bad("workers", "must be >= 1")
        if self.cordic_iterations < 1:
            bad("cordic_iterations", "must be >= 1")
        if not 0 <= self.psd.overlap < 1:
            bad("psd.overlap", "must be in [0, 1)")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["backend"] = self.backend.value
        d["bands"] = [{"band": b.band, "fcw": list(b.fcws)} for b in self.bands]
        return d


_TOP_KEYS = {"backend", "accumulator_modulus", "ddc_window", "duration", "loopback_component", "psd",
             "seed", "cordic_iterations", "settle_windows", "block_size", "workers", "bands", "tone_plan"}
_PSD_KEYS = {"seg_len", "overlap", "window", "min_prominence_db"}


def synthetic_tone_plan(modulus: int, n_bands: int = N_BANDS, tones_per_band: int = 40) -> tuple[BandPlan, ...]:
    """Evenly spread tones over each band's usable 12.5-112.5 MHz span."""
    lo = math.ceil(12.5e6 / FS_DEFAULT * modulus)
    hi = math.floor(112.5e6 / FS_DEFAULT * modulus)
    step = (hi - lo) / (tones_per_band + 1)
    fcws = tuple(int(round(lo + step * (k + 1))) for k in range(tones_per_band))
    return tuple(BandPlan(b, fcws) for b in range(n_bands))


def config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config: top level must be a mapping")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
    kw = {k: v for k, v in d.items() if k not in ("bands", "psd", "tone_plan")}
    if "backend" in kw:
        try:
            kw["backend"] = Backend(kw["backend"])
        except ValueError:
            raise ConfigError("backend: must be 'fixed' or 'float'") from None
    psd = d.get("psd") or {}
    if not isinstance(psd, dict):
        raise ConfigError("psd: must be a mapping")
    unknown = set(psd) - _PSD_KEYS
    if unknown:
        raise ConfigError(f"psd.{sorted(unknown)[0]}: unknown key")
    kw["psd"] = PsdParams(**psd)
    modulus = kw.get("accumulator_modulus", 1 << 16)
    if "tone_plan" in d:
        if "bands" in d:
            raise ConfigError("tone_plan: give either tone_plan or bands, not both")
        plan = d["tone_plan"] or {}
        unknown = set(plan) - {"bands", "tones_per_band"}
        if unknown:
            raise ConfigError(f"tone_plan.{sorted(unknown)[0]}: unknown key")
        kw["bands"] = synthetic_tone_plan(modulus, plan.get("bands", N_BANDS), plan.get("tones_per_band", 40))
    else:
        bands = []
        for k, b in enumerate(d.get("bands") or []):
            if not isinstance(b, dict):
                raise ConfigError(f"bands[{k}]: must be a mapping")
            unknown = set(b) - {"band", "fcw"}
            if unknown:
                raise ConfigError(f"bands[{k}].{sorted(unknown)[0]}: unknown key")
            if "band" not in b:
                raise ConfigError(f"bands[{k}].band: missing")
            fcw = b.get("fcw", [])
            fcw = [fcw] if isinstance(fcw, int) else list(fcw)
            bands.append(BandPlan(b["band"], tuple(fcw)))
        kw["bands"] = tuple(bands)
    try:
        cfg = RunConfig(**kw)
    except TypeError as e:
        raise ConfigError(f"config: {e}") from None
    return cfg.validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML ({e})") from None
    return config_from_dict(data or {})


def single_tone_config(fcw: int = 4000, band: int = 6, modulus: int = 1 << 16, **kw) -> RunConfig:
    return RunConfig(bands=(BandPlan(band, (fcw,)),), accumulator_modulus=modulus, **kw).validate()


class _Capture:
    def __init__(self, start: int, length: int):
        self.start, self.stop = start, start + length
        self.parts: list[IqStream] = []

    def offer(self, s: IqStream):
        lo = max(self.start, s.origin_index)
        hi = min(self.stop, s.origin_index + len(s))
        if hi > lo:
            self.parts.append(s.slice(lo - s.origin_index, hi - s.origin_index))

    @property
    def done(self) -> bool:
        have = sum(len(p) for p in self.parts)
        return have >= self.stop - self.start

    def stream(self) -> IqStream:
        first = self.parts[0]
        return first.replace(i=np.concatenate([p.i for p in self.parts]),
                             q=np.concatenate([p.q for p in self.parts]), origin_index=first.origin_index)


class ClosedLoop:
    """Block-streaming model of the excitation -> loop-back -> analysis loop.

    Every stage is addressed by global sample index, so outputs do not
    depend on the block size. ``capture`` maps tap names to (start, length)
    in that tap's own sample rate; taps follow the first configured tone.
    """

    def __init__(self, cfg: RunConfig, capture: dict | None = None, probe_tone: int = 0):
        self.cfg = cfg.validate()
        self.backend = cfg.backend
        self.counter = SaturationCounter()
        self.tones = cfg.tones
        self.sources = [ToneSource(t, cfg.backend, cfg.cordic_iterations) for t in self.tones]
        self.band_ids = [bp.band for bp in cfg.bands]
        self.interps = {b: Interpolator(cfg.backend, counter=self.counter) for b in self.band_ids}
        self.channelizers = {b: Channelizer(ChannelizerConfig(b), cfg.backend, self.counter)
                             for b in self.band_ids}
        self.ddcs = [Ddc(DdcConfig(cfg.window, t), cfg.backend) for t in self.tones]
        self.outputs: list[list[IqStream]] = [[] for _ in self.tones]
        self.probe_tone = probe_tone
        self.probe_band = self.tones[probe_tone].band
        self.captures = {k: _Capture(*v) for k, v in (capture or {}).items()}
        for k in self.captures:
            if k not in TAPS:
                raise ValueError(f"unknown tap {k!r}; choose from {', '.join(TAPS)}")
        self._pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    def _map(self, fn, items):
        return list(self._pool.map(fn, items)) if self._pool else [fn(x) for x in items]

    def _offer(self, tap, stream):
        cap = self.captures.get(tap)
        if cap is not None:
            cap.offer(stream)

    def _excite_band(self, band, tone_blocks):
        idx = [k for k, t in enumerate(self.tones) if t.band == band]
        summed = combine([tone_blocks[k] for k in idx], self.counter)
        centred = downshift_quarter_rate(summed, self.counter)
        up = self.interps[band].process(centred)
        shifted = band_upshift(up, band, self.counter)
        return centred, up, shifted

    def step(self, start: int, n: int):
        tone_blocks = self._map(lambda s: s.block(start, n), self.sources)
        self._offer("tonegen", tone_blocks[self.probe_tone])
        excited = dict(zip(self.band_ids, self._map(lambda b: self._excite_band(b, tone_blocks), self.band_ids)))
        centred, up, shifted = excited[self.probe_band]
        self._offer("downshift", centred)
        self._offer("interp", up)
        self._offer("upshift", shifted)
        wide = combine([excited[b][2] for b in self.band_ids], self.counter)
        loop = realize(wide, self.cfg.loopback_component)
        want_demod = "channelizer_demod" in self.captures

        def analyse(b):
            return self.channelizers[b].process(loop, capture_demod=want_demod and b == self.probe_band)

        chan = dict(zip(self.band_ids, self._map(analyse, self.band_ids)))
        out, demod = chan[self.probe_band]
        if demod is not None:
            self._offer("channelizer_demod", demod)
        self._offer("channelizer_out", out)

        def demodulate(k):
            return self.ddcs[k].process(chan[self.tones[k].band][0], tone_blocks[k])

        for k, o in enumerate(self._map(demodulate, range(len(self.tones)))):
            if len(o):
                self.outputs[k].append(o)
                if k == self.probe_tone:
                    self._offer("ddc", o)

    def run(self, n_samples: int, stop_when_captured: bool = False):
        bs = self.cfg.block_size
        start = 0
        try:
            while start < n_samples:
                n = min(bs, n_samples - start)
                self.step(start, n)
                start += n
                if stop_when_captured and self.captures and all(c.done for c in self.captures.values()):
                    break
        finally:
            if self._pool:
                self._pool.shutdown()
        return self

    def ddc_stream(self, k: int) -> IqStream:
        parts = self.outputs[k]
        rate = self.ddcs[k].cfg.output_rate
        if not parts:
            return IqStream.zeros(0, rate, self.backend)
        first = parts[0]
        return first.replace(i=np.concatenate([p.i for p in parts]), q=np.concatenate([p.q for p in parts]))

    def captured(self, tap: str) -> IqStream:
        return self.captures[tap].stream()


@dataclass
class ToneResult:
    tone: ToneConfig
    iq: IqStream
    noise: NoiseStreams | None
    amp_psd: SpectrumReport | None
    phase_psd: SpectrumReport | None


@dataclass
class RunResult:
    config: RunConfig
    tones: list[ToneResult]
    periodicity: dict[str, per.PeriodicityReport]
    saturation: dict[str, int]
    wall_time: float = 0.0


def tap_chains(cfg: RunConfig) -> dict[str, list]:
    """Predicted-period stage prefixes for each tap."""
    full = per.legacy_chain(cfg.accumulator_modulus, cfg.window, PHASOR_TABLE_LEN, INTERP_FACTOR)
    # tonegen, downshift, interp, upshift, demod, decimate, upconvert, mix, boxcar
    cut = {"tonegen": 1, "downshift": 2, "interp": 3, "upshift": 4, "channelizer_demod": 5,
           "channelizer_out": 7, "ddc": 9}
    return {tap: full[:n] for tap, n in cut.items()}


def _analyse_tone(tone: ToneConfig, iq: IqStream, cfg: RunConfig) -> ToneResult:
    steady = iq.slice(min(cfg.settle_windows, len(iq)))
    if len(steady) < 4:
        return ToneResult(tone, iq, None, None, None)
    noise = amp_phase_noise(steady)
    p = cfg.psd
    reports = []
    for x in (noise.amp_noise, noise.phase_noise):
        rep = estimate_psd(x, steady.sample_rate, p.seg_len, p.overlap, p.window)
        detect_spurs(rep, p.min_prominence_db)
        reports.append(rep)
    return ToneResult(tone, iq, noise, *reports)


def run_closed_loop(cfg: RunConfig) -> RunResult:
    """Simulate every configured tone through the full loop and analyse the DDC outputs."""
    t0 = time.perf_counter()
    loop = ClosedLoop(cfg).run(cfg.n_samples)
    results = [_analyse_tone(t, loop.ddc_stream(k), cfg) for k, t in enumerate(loop.tones)]
    reports = {tap: per.predict_period(chain) for tap, chain in tap_chains(cfg).items()}
    ddc_rep = reports["ddc"]
    if results:
        steady = results[0].iq.slice(min(cfg.settle_windows, len(results[0].iq)))
        p = ddc_rep.period
        if len(steady) >= 2 * p:
            ok, first = per.verify_period(steady, p, len(steady) // p - 1)
            ddc_rep.verified[-1], ddc_rep.first_mismatch[-1] = ok, first
    return RunResult(cfg, results, reports, dict(loop.counter), time.perf_counter() - t0)


def _tap_rate(tap: str, cfg: RunConfig) -> float:
    if tap == "ddc":
        return FS_DEFAULT / cfg.window
    return FS_DEFAULT * TAP_FACTOR[tap]


@dataclass
class ProbeResult:
    tap: str
    stream: IqStream
    spectrum: SpectrumReport
    peaks: list[tuple[float, float]]
    peak_bin: int
    peak_freq: float
    concentration: float
    predicted_period: int


def capture_tap(cfg: RunConfig, tap: str, length: int, start: int | None = None,
                probe_tone: int = 0) -> IqStream:
    """Run the loop just long enough to record ``length`` samples of one tap.

    By default recording starts one DDC window into the run, past every
    filter start-up transient.
    """
    if tap not in TAPS:
        raise ValueError(f"unknown tap {tap!r}; choose from {', '.join(TAPS)}")
    if tap == "ddc":
        start = cfg.settle_windows if start is None else start
        n250 = (start + length) * cfg.window
    else:
        f = TAP_FACTOR[tap]
        start = cfg.window * f if start is None else start
        n250 = -(-(start + length) // f)
    loop = ClosedLoop(cfg, {tap: (start, length)}, probe_tone).run(n250, stop_when_captured=True)
    return loop.captured(tap)


def run_stage_probe(cfg: RunConfig, tap: str, n_fft: int, near_freq: float | None = None,
                    start: int | None = None, probe_tone: int = 0) -> ProbeResult:
    """Spectrum, strongest lines and bin-alignment metric at one tap."""
    s = capture_tap(cfg, tap, n_fft, start, probe_tone)
    x = s.to_complex()
    rate = s.sample_rate
    near = None if near_freq is None else bin_of(near_freq, rate, n_fft)
    k, conc = bin_alignment_metric(x, n_fft, near_bin=near)
    spec = line_spectrum(x, rate, n_fft)
    period = per.predict_period(tap_chains(cfg)[tap]).period
    return ProbeResult(tap, s, spec, top_peaks(spec), k, signed_bin(k, n_fft) * rate / n_fft, conc, period)


def _csv_bytes(header: str, columns) -> bytes:
    buf = io.StringIO(newline="")
    buf.write(header + "\n")
    for row in zip(*columns):
        buf.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return buf.getvalue().encode()


def export_results(result: RunResult, out_dir) -> dict:
    """Write per-tone I/Q and PSD CSVs plus manifest.json; returns the manifest."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out_dir}: {e.strerror}") from e
    files = []

    def write(name, data: bytes):
        path = out_dir / name
        try:
            path.write_bytes(data)
        except OSError as e:
            raise OSError(f"cannot write {path}: {e.strerror}") from e
        files.append({"name": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})

    for k, tr in enumerate(result.tones):
        stem = f"tone{k:03d}_band{tr.tone.band}_fcw{tr.tone.fcw}"
        iq = tr.iq
        idx = np.arange(len(iq)) + iq.origin_index
        vi = (iq.i * iq.scale).tolist()
        vq = (iq.q * iq.scale).tolist()
        write(f"iq_{stem}.csv", _csv_bytes("index,i,q", (idx.tolist(), vi, vq)))
        if tr.amp_psd is not None:
            write(f"psd_{stem}.csv", _csv_bytes("freq_hz,amp_psd_dbc_hz,phase_psd_dbc_hz",
                                                (tr.amp_psd.freqs.tolist(), tr.amp_psd.psd.tolist(),
                                                 tr.phase_psd.psd.tolist())))
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": result.config.to_dict(),
        "files": files,
        "spurs": [{"tone": k, "amp": tr.amp_psd.detected_spurs if tr.amp_psd else [],
                   "phase": tr.phase_psd.detected_spurs if tr.phase_psd else []}
                  for k, tr in enumerate(result.tones)],
        "periodicity": {tap: rep.to_dict() for tap, rep in result.periodicity.items()},
        "saturation": {k: int(v) for k, v in sorted(result.saturation.items())},
    }
    data = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()
    (out_dir / "manifest.json").write_bytes(data)
    return manifest

