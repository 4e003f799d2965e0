"""Numeric foundations shared by the fixed-point and floating-point backends.

Fixed-point values are signed two's-complement integers tagged with a total
width and a number of fractional bits (Q notation: Q1.15 is width 16,
frac_bits 15). Every rounding in the model is round-to-nearest with ties
away from zero, followed by saturation to the target width. Saturation is
silent but counted.

Streams carry whole numpy arrays rather than per-sample objects; the scalar
types here exist for the reference arithmetic and for tests.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Union

import numpy as np

IQ_WIDTH = 16
IQ_FRAC = 15
INTERNAL_WIDTH = 18
INTERNAL_FRAC = 17


class Backend(str, enum.Enum):
    FIXED = "fixed"
    FLOAT = "float"


class BackendMismatch(ValueError):
    """Raised when one stage is handed streams from different backends."""


class SaturationCounter(Counter):
    """Per-stage tally of samples clipped by saturation."""

    def add(self, stage: str, n: int) -> None:
        if n:
            self[stage] += int(n)


def _limits(width: int) -> tuple[int, int]:
    return -(1 << (width - 1)), (1 << (width - 1)) - 1


def round_shift(value, shift: int):
    """Divide by 2**shift, rounding to nearest with ties away from zero.

    Works on Python ints and on int64 arrays. A negative shift is an exact
    left shift.
    """
    if shift <= 0:
        return value * (1 << -shift)
    half = 1 << (shift - 1)
    if isinstance(value, np.ndarray):
        mag = (np.abs(value) + half) >> shift
        return np.where(value < 0, -mag, mag)
    mag = (abs(value) + half) >> shift
    return -mag if value < 0 else mag


def round_div(num, den: int):
    """Integer num/den rounded to nearest, ties away from zero (den > 0)."""
    if isinstance(num, np.ndarray):
        mag = (2 * np.abs(num) + den) // (2 * den)
        return np.where(num < 0, -mag, mag)
    mag = (2 * abs(num) + den) // (2 * den)
    return -mag if num < 0 else mag


def saturate(value, width: int):
    """Clip to the signed range of ``width`` bits; returns (value, n_clipped)."""
    lo, hi = _limits(width)
    if isinstance(value, np.ndarray):
        clipped = np.clip(value, lo, hi)
        n = int(np.count_nonzero(clipped != value))
        return clipped, n
    if value > hi:
        return hi, 1
    if value < lo:
        return lo, 1
    return value, 0


def requantize(value, from_frac: int, to_frac: int, width: int, counter=None, stage="requantize"):
    """Round from ``from_frac`` to ``to_frac`` fractional bits and saturate."""
    out, n = saturate(round_shift(value, from_frac - to_frac), width)
    if counter is not None:
        counter.add(stage, n)
    return out


def quantize_float(x, width: int = IQ_WIDTH, frac_bits: int = IQ_FRAC, counter=None, stage="quantize"):
    """Real value(s) to fixed-point integers with the model's rounding rule."""
    scaled = np.asarray(x, dtype=np.float64) * (1 << frac_bits)
    q = np.where(scaled < 0, -np.floor(-scaled + 0.5), np.floor(scaled + 0.5)).astype(np.int64)
    q, n = saturate(q, width)
    if counter is not None:
        counter.add(stage, n)
    if np.ndim(x) == 0:
        return int(q)
    return q


@dataclass(frozen=True)
class FixedSample:
    value: int
    width: int = IQ_WIDTH
    frac_bits: int = IQ_FRAC

    def __post_init__(self):
        lo, hi = _limits(self.width)
        if not lo <= self.value <= hi:
            raise ValueError(f"value {self.value} does not fit in {self.width} bits")

    @classmethod
    def from_float(cls, x: float, width: int = IQ_WIDTH, frac_bits: int = IQ_FRAC) -> FixedSample:
        return cls(quantize_float(x, width, frac_bits), width, frac_bits)

    def __float__(self) -> float:
        return self.value / (1 << self.frac_bits)

    @property
    def lsb(self) -> float:
        return 2.0 ** -self.frac_bits


Scalar = Union[FixedSample, float]


@dataclass(frozen=True)
class ComplexSample:
    i: Scalar
    q: Scalar

    def __post_init__(self):
        fi, fq = isinstance(self.i, FixedSample), isinstance(self.q, FixedSample)
        if fi != fq:
            raise BackendMismatch("i and q must both be fixed-point or both be real")
        if fi and (self.i.width, self.i.frac_bits) != (self.q.width, self.q.frac_bits):
            raise BackendMismatch("i and q must share one bit layout")

    @property
    def backend(self) -> Backend:
        return Backend.FIXED if isinstance(self.i, FixedSample) else Backend.FLOAT

    def __complex__(self) -> complex:
        return complex(float(self.i), float(self.q))


def fx_mul(a: FixedSample, b: FixedSample, out_width: int = IQ_WIDTH, out_frac: int = IQ_FRAC,
           counter: SaturationCounter | None = None) -> FixedSample:
    """Exact product of two fixed-point samples, rounded to ``out_frac`` and saturated."""
    prod = a.value * b.value
    value = requantize(prod, a.frac_bits + b.frac_bits, out_frac, out_width, counter, "fx_mul")
    return FixedSample(int(value), out_width, out_frac)


def complex_mul(a: ComplexSample, b: ComplexSample, out_width: int | None = None,
                out_frac: int | None = None, counter: SaturationCounter | None = None) -> ComplexSample:
    """(a.i*b.i - a.q*b.q, a.i*b.q + a.q*b.i).

    In fixed mode each component is formed exactly and rounded once. The
    output layout defaults to that of ``a``.
    """
    if a.backend != b.backend:
        raise BackendMismatch("complex_mul operands use different backends")
    if a.backend is Backend.FLOAT:
        ai, aq, bi, bq = float(a.i), float(a.q), float(b.i), float(b.q)
        return ComplexSample(ai * bi - aq * bq, ai * bq + aq * bi)
    width = a.i.width if out_width is None else out_width
    frac = a.i.frac_bits if out_frac is None else out_frac
    shift_from = a.i.frac_bits + b.i.frac_bits
    re = a.i.value * b.i.value - a.q.value * b.q.value
    im = a.i.value * b.q.value + a.q.value * b.i.value
    re = requantize(re, shift_from, frac, width, counter, "complex_mul")
    im = requantize(im, shift_from, frac, width, counter, "complex_mul")
    return ComplexSample(FixedSample(int(re), width, frac), FixedSample(int(im), width, frac))


def cmul_arrays(ai, aq, bi, bq, backend: Backend, shift: int = 0, width: int = IQ_WIDTH,
                counter: SaturationCounter | None = None, stage: str = "cmul"):
    """Vectorised complex multiply used by the streaming stages.

    ``shift`` is the number of fractional bits dropped after the exact
    fixed-point product; ignored in float mode.
    """
    re = ai * bi - aq * bq
    im = ai * bq + aq * bi
    if backend is Backend.FLOAT:
        return re, im
    re = requantize(re, shift, 0, width, counter, stage)
    im = requantize(im, shift, 0, width, counter, stage)
    return re, im


@dataclass(frozen=True, eq=False)
class IqStream:
    """Rate-annotated block of complex samples.

    ``i`` and ``q`` are int64 arrays in fixed mode (raw integers with the
    given width/frac_bits) and float64 arrays in float mode (full scale 1.0).
    ``origin_index`` is the index of the first sample in the global timeline
    of this stage's rate.
    """

    i: np.ndarray
    q: np.ndarray
    sample_rate: float
    backend: Backend = Backend.FIXED
    origin_index: int = 0
    width: int | None = IQ_WIDTH
    frac_bits: int | None = IQ_FRAC
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.origin_index < 0:
            raise ValueError("origin_index must be non-negative")
        if len(self.i) != len(self.q):
            raise ValueError("i and q lengths differ")
        expected = np.int64 if self.backend is Backend.FIXED else np.float64
        if self.i.dtype != expected or self.q.dtype != expected:
            raise BackendMismatch(f"{self.backend.value} stream needs {np.dtype(expected).name} samples")
        if self.backend is Backend.FLOAT:
            object.__setattr__(self, "width", None)
            object.__setattr__(self, "frac_bits", None)

    def __len__(self) -> int:
        return len(self.i)

    @classmethod
    def zeros(cls, n: int, sample_rate: float, backend: Backend = Backend.FIXED, **kw) -> IqStream:
        dtype = np.int64 if backend is Backend.FIXED else np.float64
        return cls(np.zeros(n, dtype), np.zeros(n, dtype), sample_rate, backend, **kw)

    @classmethod
    def from_complex(cls, x, sample_rate: float, backend: Backend = Backend.FLOAT,
                     width: int = IQ_WIDTH, frac_bits: int = IQ_FRAC, origin_index: int = 0) -> IqStream:
        x = np.asarray(x, dtype=np.complex128)
        if backend is Backend.FLOAT:
            return cls(x.real.copy(), x.imag.copy(), sample_rate, backend, origin_index)
        return cls(quantize_float(x.real, width, frac_bits), quantize_float(x.imag, width, frac_bits),
                   sample_rate, backend, origin_index, width, frac_bits)

    @property
    def scale(self) -> float:
        return 1.0 if self.backend is Backend.FLOAT else 2.0 ** -self.frac_bits

    def to_complex(self) -> np.ndarray:
        """Samples as complex128 in full-scale units."""
        return (self.i + 1j * self.q) * self.scale

    @property
    def is_real(self) -> bool:
        return not np.any(self.q)

    def sample(self, k: int) -> ComplexSample:
        if self.backend is Backend.FLOAT:
            return ComplexSample(float(self.i[k]), float(self.q[k]))
        return ComplexSample(FixedSample(int(self.i[k]), self.width, self.frac_bits),
                             FixedSample(int(self.q[k]), self.width, self.frac_bits))

    def slice(self, start: int, stop: int | None = None) -> IqStream:
        stop = len(self) if stop is None else stop
        return self.replace(i=self.i[start:stop], q=self.q[start:stop], origin_index=self.origin_index + start)

    def replace(self, **changes) -> IqStream:
        kw = dict(i=self.i, q=self.q, sample_rate=self.sample_rate, backend=self.backend,
                  origin_index=self.origin_index, width=self.width, frac_bits=self.frac_bits, meta=self.meta)
        kw.update(changes)
        return IqStream(**kw)

    def same_layout(self, other: IqStream) -> bool:
        return (self.backend, self.width, self.frac_bits) == (other.backend, other.width, other.frac_bits)


def check_homogeneous(streams) -> Backend:
    """Reject a set of streams that mixes backends or bit layouts."""
    streams = list(streams)
    if not streams:
        raise ValueError("no streams given")
    first = streams[0]
    for s in streams[1:]:
        if not first.same_layout(s):
            raise BackendMismatch("streams mix backends or bit layouts")
    return first.backend
