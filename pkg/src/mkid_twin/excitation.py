"""Excitation path: -Fs/4 centring, x8 interpolation, band up-shift, combining."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal

from .core import (IQ_FRAC, IQ_WIDTH, Backend, BackendMismatch, IqStream, SaturationCounter,
                   check_homogeneous, cmul_arrays, quantize_float, requantize, saturate)
from .filters import DAC_RATE, FirFilter, interpolation_filter
from .tonegen import FS_DEFAULT, N_BANDS, ToneConfig

INTERP_FACTOR = 8
PHASOR_TABLE_LEN = 40
COMBINE_ACC_WIDTH = 26


def band_alpha(band: int) -> float:
    """Per-sample phase increment of the band phasor, (2b+1)/40 turns."""
    return 2 * np.pi * (2 * band + 1) / PHASOR_TABLE_LEN


def band_shift_hz(band: int, rate: float = DAC_RATE) -> float:
    return (2 * band + 1) / PHASOR_TABLE_LEN * rate


@lru_cache(maxsize=None)
def _table_entries(band: int, backend: Backend, sign: int):
    n = np.arange(PHASOR_TABLE_LEN)
    # reduce the angle exactly in turns before converting to radians
    turns = ((2 * band + 1) * n % PHASOR_TABLE_LEN) / PHASOR_TABLE_LEN
    c, s = np.cos(2 * np.pi * turns), sign * np.sin(2 * np.pi * turns)
    if backend is Backend.FIXED:
        c, s = quantize_float(c), quantize_float(s)
    c.setflags(write=False)
    s.setflags(write=False)
    return c, s


@dataclass(frozen=True, eq=False)
class BandPhasorTable:
    """The 40 unit phasors exp(+-j*alpha*n), n = 0..39, for one band."""

    band: int
    backend: Backend = Backend.FIXED
    sign: int = 1

    def __post_init__(self):
        if not 0 <= self.band < N_BANDS:
            raise ValueError(f"band={self.band} outside [0, {N_BANDS - 1}]")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def entries(self):
        return _table_entries(self.band, self.backend, self.sign)

    def lookup(self, start: int, n: int):
        idx = (np.arange(n, dtype=np.int64) + start) % PHASOR_TABLE_LEN
        c, s = self.entries
        return c[idx], s[idx]


@dataclass(frozen=True)
class ExcitationConfig:
    tones: tuple[ToneConfig, ...]
    interp_factor: int = INTERP_FACTOR
    dac_rate: float = DAC_RATE
    interp_filter: FirFilter = field(default_factory=interpolation_filter)

    def __post_init__(self):
        if self.interp_factor != INTERP_FACTOR:
            raise ValueError("only x8 interpolation is modelled")
        if abs(self.dac_rate - INTERP_FACTOR * FS_DEFAULT) > 1e-6:
            raise ValueError("dac_rate must be 8 x 250 MHz")
        per_band: dict[int, int] = {}
        for t in self.tones:
            per_band[t.band] = per_band.get(t.band, 0) + 1
        if any(n > PHASOR_TABLE_LEN for n in per_band.values()):
            raise ValueError("at most 40 tones per band")

    def bands(self) -> list[int]:
        return sorted({t.band for t in self.tones})


def _neg(x, backend, counter, stage):
    if backend is Backend.FLOAT:
        return -x
    out, n = saturate(-x, IQ_WIDTH)
    if counter is not None:
        counter.add(stage, n)
    return out


def downshift_quarter_rate(stream: IqStream, counter: SaturationCounter | None = None) -> IqStream:
    """Multiply by exp(-j*pi*n/2): the sequence (I,Q), (Q,-I), (-I,-Q), (-Q,I)."""
    i, q, b = stream.i, stream.q, stream.backend
    r = (np.arange(len(stream)) + stream.origin_index) % 4
    ni, nq = _neg(i, b, counter, "downshift"), _neg(q, b, counter, "downshift")
    out_i = np.select([r == 0, r == 1, r == 2], [i, q, ni], nq)
    out_q = np.select([r == 0, r == 1, r == 2], [q, ni, nq], i)
    return stream.replace(i=out_i, q=out_q)


def upconvert_quarter_rate(stream: IqStream, counter: SaturationCounter | None = None) -> IqStream:
    """Multiply by exp(+j*pi*n/2): the sequence (I,Q), (-Q,I), (-I,-Q), (Q,-I)."""
    i, q, b = stream.i, stream.q, stream.backend
    r = (np.arange(len(stream)) + stream.origin_index) % 4
    ni, nq = _neg(i, b, counter, "upconvert"), _neg(q, b, counter, "upconvert")
    out_i = np.select([r == 0, r == 1, r == 2], [i, nq, ni], q)
    out_q = np.select([r == 0, r == 1, r == 2], [q, i, nq], ni)
    return stream.replace(i=out_i, q=out_q)


class Interpolator:
    """Streaming polyphase x8 interpolator with zero initial state.

    Consecutive calls must pass contiguous blocks; the output origin is
    8x the input origin.
    """

    def __init__(self, backend: Backend, filt: FirFilter | None = None, factor: int = INTERP_FACTOR,
                 counter: SaturationCounter | None = None):
        if factor != INTERP_FACTOR:
            raise ValueError("only x8 interpolation is modelled")
        self.filt = filt or interpolation_filter()
        self.backend = backend
        self.factor = factor
        self.counter = counter
        self.h = self.filt.int_taps.astype(np.float64) if backend is Backend.FIXED else self.filt.taps
        self.hist_len = math.ceil(len(self.h) / factor) - 1
        self._hist_i = np.zeros(self.hist_len)
        self._hist_q = np.zeros(self.hist_len)
        self._next = None

    def _run(self, x, hist):
        ext = np.concatenate([hist, x.astype(np.float64)])
        y = signal.upfirdn(self.h, ext, up=self.factor)
        start = self.factor * self.hist_len
        y = y[start:start + self.factor * len(x)]
        if self.backend is Backend.FIXED:
            y = requantize(np.rint(y).astype(np.int64), self.filt.frac_bits, 0, IQ_WIDTH,
                           self.counter, "interpolate")
        return y, ext[len(ext) - self.hist_len:]

    def process(self, block: IqStream) -> IqStream:
        if block.backend is not self.backend:
            raise BackendMismatch("interpolator backend differs from input")
        if self._next is not None and block.origin_index != self._next:
            raise ValueError("non-contiguous block")
        self._next = block.origin_index + len(block)
        yi, self._hist_i = self._run(block.i, self._hist_i)
        yq, self._hist_q = self._run(block.q, self._hist_q)
        return block.replace(i=yi, q=yq, sample_rate=block.sample_rate * self.factor,
                             origin_index=block.origin_index * self.factor)


def interpolate(stream: IqStream, factor: int = INTERP_FACTOR, filt: FirFilter | None = None,
                counter: SaturationCounter | None = None) -> IqStream:
    return Interpolator(stream.backend, filt, factor, counter).process(stream)


def band_upshift(stream: IqStream, band: int, counter: SaturationCounter | None = None) -> IqStream:
    """Multiply by exp(+j*alpha_b*n) read from the 40-entry phasor table."""
    if not 0 <= band < N_BANDS:
        raise ValueError(f"band={band} outside [0, {N_BANDS - 1}]")
    c, s = BandPhasorTable(band, stream.backend).lookup(stream.origin_index, len(stream))
    i, q = cmul_arrays(stream.i, stream.q, c, s, stream.backend, IQ_FRAC, IQ_WIDTH, counter, "band_upshift")
    return stream.replace(i=i, q=q)


def combine(streams, counter: SaturationCounter | None = None) -> IqStream:
    """Sample-wise sum scaled by 2**-ceil(log2(n)).

    A single stream passes through unchanged. In fixed mode the sum is held
    in a 26-bit accumulator and rounded once.
    """
    streams = list(streams)
    backend = check_homogeneous(streams)
    first = streams[0]
    if len(streams) == 1:
        return first
    for s in streams[1:]:
        if len(s) != len(first) or s.sample_rate != first.sample_rate or s.origin_index != first.origin_index:
            raise ValueError("combine needs streams of equal length, rate and origin")
    shift = math.ceil(math.log2(len(streams)))
    acc_i = np.sum([s.i for s in streams], axis=0)
    acc_q = np.sum([s.q for s in streams], axis=0)
    if backend is Backend.FLOAT:
        return first.replace(i=acc_i / (1 << shift), q=acc_q / (1 << shift))
    acc_i, ni = saturate(acc_i, COMBINE_ACC_WIDTH)
    acc_q, nq = saturate(acc_q, COMBINE_ACC_WIDTH)
    if counter is not None:
        counter.add("combine_acc", ni + nq)
    out_i = requantize(acc_i, shift, 0, IQ_WIDTH, counter, "combine")
    out_q = requantize(acc_q, shift, 0, IQ_WIDTH, counter, "combine")
    return first.replace(i=out_i, q=out_q)


def realize(stream: IqStream, select: str = "I") -> IqStream:
    """Keep one quadrature component as a real stream (Q channel zeroed)."""
    select = select.upper()
    if select not in ("I", "Q"):
        raise ValueError("select must be 'I' or 'Q'")
    keep = stream.i if select == "I" else stream.q
    return stream.replace(i=keep.copy(), q=np.zeros_like(keep))
