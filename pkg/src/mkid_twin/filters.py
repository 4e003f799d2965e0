"""FIR designs for the interpolator and the channelizer low-pass filter.

Neither filter is published for the firmware; both are equiripple stand-ins
sized to the attenuation the chain needs. Fixed-mode taps are quantised to
18 bits with a per-filter binary point chosen so the largest tap uses the
full word.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal

from .core import INTERNAL_WIDTH, quantize_float

DAC_RATE = 2000e6
COEF_WIDTH = INTERNAL_WIDTH


def ripple_to_delta(db: float) -> float:
    return 10 ** (db / 20) - 1


@dataclass(frozen=True, eq=False)
class FirFilter:
    name: str
    taps: np.ndarray
    int_taps: np.ndarray
    frac_bits: int
    sample_rate: float
    passband: tuple[float, float]
    stopband: tuple[float, float]

    def __len__(self) -> int:
        return len(self.taps)

    def quantized_taps(self) -> np.ndarray:
        return self.int_taps / 2.0 ** self.frac_bits

    def response(self, n_points: int = 8192, quantized: bool = False):
        """(freq_hz, gain) on [0, rate/2]."""
        h = self.quantized_taps() if quantized else self.taps
        w, resp = signal.freqz(h, worN=n_points, fs=self.sample_rate)
        return w, np.abs(resp)

    def stopband_attenuation_db(self, quantized: bool = False, gain: float = 1.0) -> float:
        f, g = self.response(1 << 15, quantized)
        sb = g[(f >= self.stopband[0]) & (f <= self.stopband[1])]
        return float(-20 * np.log10(np.max(sb) / gain))

    def passband_ripple_db(self, quantized: bool = False) -> float:
        f, g = self.response(1 << 15, quantized)
        pb = g[(f >= self.passband[0]) & (f <= self.passband[1])]
        return float(20 * np.log10(np.max(pb) / np.min(pb)))


def quantize_taps(taps: np.ndarray, width: int = COEF_WIDTH) -> tuple[np.ndarray, int]:
    peak = float(np.max(np.abs(taps)))
    frac = (width - 1) - math.ceil(math.log2(peak * (1 + 2.0 ** -(width - 2))))
    return quantize_float(taps, width, frac), frac


def _equiripple(numtaps, pass_edge, stop_edge, fs, pass_ripple_db, stop_atten_db):
    weight = [1.0, ripple_to_delta(pass_ripple_db) / 10 ** (-stop_atten_db / 20)]
    return signal.remez(numtaps, [0, pass_edge, stop_edge, fs / 2], [1, 0], weight=weight,
                        fs=fs, maxiter=200)


@lru_cache(maxsize=None)
def interpolation_filter(factor: int = 8, numtaps: int = 64, gain: float = 0.998) -> FirFilter:
    """Image-rejection filter for x8 upsampling, 250 MHz -> 2 GHz.

    Passband 0-50 MHz, stopband from 200 MHz (first image edge). The taps
    carry the factor of 8 so each polyphase branch has gain ``gain``; the
    slight back-off keeps full-scale tones clear of saturation despite
    passband ripple.
    """
    fs = DAC_RATE
    h = _equiripple(numtaps, 50e6, 200e6, fs, 0.005, 85.0)
    h = h / np.sum(h) * factor * gain
    q, frac = quantize_taps(h)
    return FirFilter("interpolation", h, q, frac, fs, (0.0, 50e6), (200e6, fs / 2))


@lru_cache(maxsize=None)
def channelizer_filter(numtaps: int = 328) -> FirFilter:
    """Sub-band isolation low-pass at 2 GHz: pass to 50 MHz, stop from 75 MHz."""
    fs = DAC_RATE
    h = _equiripple(numtaps, 50e6, 75e6, fs, 0.01, 84.0)
    h = h / np.sum(h)
    q, frac = quantize_taps(h)
    return FirFilter("channelizer_lpf", h, q, frac, fs, (0.0, 50e6), (75e6, fs / 2))
