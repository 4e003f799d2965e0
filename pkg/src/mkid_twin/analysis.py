"""Analysis path: the five-step sub-band channelizer and the per-tone DDC."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .core import (INTERNAL_FRAC, INTERNAL_WIDTH, IQ_FRAC, IQ_WIDTH, Backend, BackendMismatch, IqStream,
                   SaturationCounter, requantize, round_div)
from .excitation import INTERP_FACTOR, BandPhasorTable, band_shift_hz, realize, upconvert_quarter_rate
from .filters import DAC_RATE, FirFilter, channelizer_filter
from .tonegen import FS_DEFAULT, N_BANDS, ToneConfig

log = logging.getLogger(__name__)

DDC_OUT_FRAC = 40
DDC_OUT_WIDTH = 48


@dataclass(frozen=True)
class ChannelizerConfig:
    band: int
    lpf: FirFilter = field(default_factory=channelizer_filter)
    decim_factor: int = INTERP_FACTOR

    def __post_init__(self):
        if not 0 <= self.band < N_BANDS:
            raise ValueError(f"band={self.band} outside [0, {N_BANDS - 1}]")
        if self.decim_factor != INTERP_FACTOR:
            raise ValueError("only /8 decimation is modelled")

    @property
    def demod_frequency(self) -> float:
        return -band_shift_hz(self.band, DAC_RATE)


@dataclass(frozen=True)
class DdcConfig:
    window_len: int
    tone_ref: ToneConfig

    def __post_init__(self):
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")

    @property
    def output_rate(self) -> float:
        return self.tone_ref.sample_rate / self.window_len

    @property
    def aligned(self) -> bool:
        return self.window_len == self.tone_ref.modulus_m


class Channelizer:
    """Streaming model of one sub-band of the analysis filter bank.

    Steps: complex demodulation by exp(-j*alpha_b*m), low-pass, /8
    decimation, +Fs/4 up-conversion, real part. Input is the real 2 GHz
    loop-back stream; output is real at 250 MHz.
    """

    def __init__(self, cfg: ChannelizerConfig, backend: Backend, counter: SaturationCounter | None = None):
        self.cfg = cfg
        self.backend = backend
        self.counter = counter
        self.table = BandPhasorTable(cfg.band, backend, sign=-1)
        lpf = cfg.lpf
        self.h = lpf.int_taps.astype(np.float64) if backend is Backend.FIXED else lpf.taps
        d = cfg.decim_factor
        self.hist_len = d * math.ceil((len(self.h) - 1) / d)
        self._hist_i = np.zeros(self.hist_len)
        self._hist_q = np.zeros(self.hist_len)
        self._next = None

    def demodulate(self, block: IqStream) -> IqStream:
        c, s = self.table.lookup(block.origin_index, len(block))
        x = block.i
        if self.backend is Backend.FLOAT:
            return block.replace(i=x * c, q=x * s)
        di = requantize(x * c, 2 * IQ_FRAC, INTERNAL_FRAC, INTERNAL_WIDTH, self.counter, "channelizer_demod")
        dq = requantize(x * s, 2 * IQ_FRAC, INTERNAL_FRAC, INTERNAL_WIDTH, self.counter, "channelizer_demod")
        return block.replace(i=di, q=dq, width=INTERNAL_WIDTH, frac_bits=INTERNAL_FRAC)

    def _lowpass_decimate(self, x, hist):
        d = self.cfg.decim_factor
        ext = np.concatenate([hist, x.astype(np.float64)])
        y = signal.upfirdn(self.h, ext, down=d)
        start = self.hist_len // d
        y = y[start:start + len(x) // d]
        if self.backend is Backend.FIXED:
            y = requantize(np.rint(y).astype(np.int64), INTERNAL_FRAC + self.cfg.lpf.frac_bits, IQ_FRAC,
                           IQ_WIDTH, self.counter, "channelizer_lpf")
        return y, ext[len(ext) - self.hist_len:]

    def process(self, block: IqStream, capture_demod: bool = False):
        """Returns (real 250 MHz output, demodulated 2 GHz stream or None)."""
        if block.backend is not self.backend:
            raise BackendMismatch("channelizer backend differs from input")
        if not block.is_real:
            raise ValueError("channelizer input must be real (Q channel zero)")
        d = self.cfg.decim_factor
        if block.origin_index % d or len(block) % d:
            raise ValueError("blocks must be aligned to the decimation factor")
        if self._next is not None and block.origin_index != self._next:
            raise ValueError("non-contiguous block")
        self._next = block.origin_index + len(block)
        demod = self.demodulate(block)
        yi, self._hist_i = self._lowpass_decimate(demod.i, self._hist_i)
        yq, self._hist_q = self._lowpass_decimate(demod.q, self._hist_q)
        low = block.replace(i=yi, q=yq, sample_rate=block.sample_rate / d,
                            origin_index=block.origin_index // d, width=IQ_WIDTH, frac_bits=IQ_FRAC)
        out = realize(upconvert_quarter_rate(low, self.counter), "I")
        return out, (demod if capture_demod else None)


def channelize(real_stream: IqStream, cfg: ChannelizerConfig,
               counter: SaturationCounter | None = None) -> IqStream:
    out, _ = Channelizer(cfg, real_stream.backend, counter).process(real_stream)
    return out


class Ddc:
    """Streaming tone demodulator with a non-overlapping boxcar average.

    Windows are locked to global sample index 0: output k averages samples
    [k*L, (k+1)*L). Fixed-mode products and window sums are exact; each
    output is the window mean rounded to DDC_OUT_FRAC fractional bits.
    """

    def __init__(self, cfg: DdcConfig, backend: Backend):
        self.cfg = cfg
        self.backend = backend
        self._pi: list[np.ndarray] = []
        self._pq: list[np.ndarray] = []
        self._pending = 0
        self._window_start = None
        self._next = None

    def process(self, block: IqStream, tone: IqStream) -> IqStream:
        L = self.cfg.window_len
        if block.backend is not self.backend or tone.backend is not self.backend:
            raise BackendMismatch("ddc backend differs from input")
        if len(block) != len(tone) or block.origin_index != tone.origin_index:
            raise ValueError("stream and excitation tone must cover the same samples")
        if self._next is not None and block.origin_index != self._next:
            raise ValueError("non-contiguous block")
        self._next = block.origin_index + len(block)
        x, ti, tq = block.i, tone.i, tone.q
        start = block.origin_index
        if self._window_start is None:
            skip = (-start) % L
            x, ti, tq = x[skip:], ti[skip:], tq[skip:]
            self._window_start = (start + skip) // L
        # multiply by the conjugate reference tone
        self._pi.append(x * ti)
        self._pq.append(-(x * tq))
        self._pending += len(x)
        n_out = self._pending // L
        pi = np.concatenate(self._pi) if len(self._pi) > 1 else self._pi[0]
        pq = np.concatenate(self._pq) if len(self._pq) > 1 else self._pq[0]
        si = [np.sum(pi[k * L:(k + 1) * L]) for k in range(n_out)]
        sq = [np.sum(pq[k * L:(k + 1) * L]) for k in range(n_out)]
        used = n_out * L
        self._pi, self._pq = [pi[used:]], [pq[used:]]
        self._pending -= used
        origin = self._window_start
        self._window_start += n_out
        rate = self.cfg.output_rate
        if self.backend is Backend.FLOAT:
            return IqStream(np.asarray(si, np.float64) / L, np.asarray(sq, np.float64) / L, rate,
                            Backend.FLOAT, origin)
        shift = DDC_OUT_FRAC - 2 * IQ_FRAC
        oi = round_div(np.asarray(si, np.int64) << shift, L) if n_out else np.zeros(0, np.int64)
        oq = round_div(np.asarray(sq, np.int64) << shift, L) if n_out else np.zeros(0, np.int64)
        return IqStream(oi.astype(np.int64), oq.astype(np.int64), rate, Backend.FIXED, origin,
                        DDC_OUT_WIDTH, DDC_OUT_FRAC)


def ddc(stream: IqStream, cfg: DdcConfig, excitation_tone: IqStream) -> IqStream:
    if len(stream) < cfg.window_len:
        log.warning("stream of %d samples is shorter than one %d-sample window", len(stream), cfg.window_len)
    return Ddc(cfg, stream.backend).process(stream, excitation_tone)


def averaging_filter_response(window_len: int, f, rate: float = FS_DEFAULT):
    """|sin(pi f L / Fs) / (L sin(pi f / Fs))|, the boxcar-average magnitude."""
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    f = np.asarray(f, dtype=np.float64)
    x = np.pi * f / rate
    den = window_len * np.sin(x)
    num = np.sin(window_len * x)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(np.abs(den) < 1e-300, 1.0, np.abs(num / den))
    return float(h) if h.ndim == 0 else h


def ddc_output_rate(window_len: int, rate: float = FS_DEFAULT) -> float:
    return rate / window_len
