"""Tone generator: modulo-M phase accumulator feeding a CORDIC sine/cosine unit."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import IQ_FRAC, IQ_WIDTH, Backend, ComplexSample, FixedSample, IqStream, round_shift, saturate

FS_DEFAULT = 250e6
PHASE_WORD_BITS = 16
CORDIC_PHASE_BITS = 10
CORDIC_ITERATIONS = 18
CORDIC_GUARD_BITS = 6
CORDIC_ANGLE_FRAC = 24
N_BANDS = 10


@dataclass(frozen=True)
class ToneConfig:
    fcw: int
    modulus_m: int = 1 << 16
    band: int = 0
    sample_rate: float = FS_DEFAULT

    def __post_init__(self):
        if self.modulus_m <= 0:
            raise ValueError("modulus_m must be positive")
        if self.modulus_m > 1 << PHASE_WORD_BITS:
            raise ValueError(f"modulus_m must fit the {PHASE_WORD_BITS}-bit phase word")
        if not 0 <= self.fcw < self.modulus_m:
            raise ValueError(f"fcw={self.fcw} outside [0, {self.modulus_m})")
        if not 0 <= self.band < N_BANDS:
            raise ValueError(f"band={self.band} outside [0, {N_BANDS - 1}]")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def frequency(self) -> float:
        return self.sample_rate * self.fcw / self.modulus_m

    @property
    def resolution(self) -> float:
        return self.sample_rate / self.modulus_m


@dataclass(frozen=True)
class PhaseState:
    phase: int = 0


def phase_step(state: PhaseState, cfg: ToneConfig) -> PhaseState:
    return PhaseState((state.phase + cfg.fcw) % cfg.modulus_m)


def phase_sequence(cfg: ToneConfig, start: int, n: int) -> np.ndarray:
    """Accumulator contents at global sample indices start..start+n-1.

    The accumulator holds 0 at index 0, so phase[k] = fcw*k mod M.
    """
    k = (np.arange(n, dtype=np.int64) + start) % cfg.modulus_m
    return (k * cfg.fcw) % cfg.modulus_m


def phase_to_cordic_input(phase, modulus_m: int = 1 << 16):
    """Top 10 bits of the 16-bit phase word (a 6-bit right shift)."""
    if modulus_m > 1 << PHASE_WORD_BITS:
        raise ValueError("modulus_m exceeds the phase word")
    return phase >> (PHASE_WORD_BITS - CORDIC_PHASE_BITS)


def cordic_gain(iterations: int) -> float:
    return math.prod(math.sqrt(1.0 + 2.0 ** (-2 * i)) for i in range(iterations))


def _cordic_first_quadrant(code: int, iterations: int) -> tuple[int, int]:
    # rotation mode; angle in [0, pi/2) as a binary fraction with CORDIC_ANGLE_FRAC bits
    frac = IQ_FRAC + CORDIC_GUARD_BITS
    full = (1 << IQ_FRAC) - 1
    x = round((full << CORDIC_GUARD_BITS) / cordic_gain(iterations))
    y = 0
    z = round(2 * math.pi * code / (1 << CORDIC_PHASE_BITS) * (1 << CORDIC_ANGLE_FRAC))
    for i in range(iterations):
        step = round(math.atan(2.0 ** -i) * (1 << CORDIC_ANGLE_FRAC))
        if z >= 0:
            x, y, z = x - (y >> i), y + (x >> i), z - step
        else:
            x, y, z = x + (y >> i), y - (x >> i), z + step
    c, _ = saturate(round_shift(x, frac - IQ_FRAC), IQ_WIDTH)
    s, _ = saturate(round_shift(y, frac - IQ_FRAC), IQ_WIDTH)
    return c, s


@lru_cache(maxsize=None)
def cordic_table(iterations: int = CORDIC_ITERATIONS, backend: Backend = Backend.FIXED):
    """(cos, sin) for all 1024 phase codes, as read-only arrays.

    Fixed mode runs the shift-add CORDIC on each code; float mode evaluates
    library sine/cosine of the same quantised angle.
    """
    n = 1 << CORDIC_PHASE_BITS
    if backend is Backend.FLOAT:
        theta = 2 * np.pi * np.arange(n) / n
        c, s = np.cos(theta), np.sin(theta)
    else:
        quarter = n // 4
        base = [_cordic_first_quadrant(r, iterations) for r in range(quarter)]
        c = np.empty(n, np.int64)
        s = np.empty(n, np.int64)
        for code in range(n):
            quad, r = divmod(code, quarter)
            bc, bs = base[r]
            # rotate the first-quadrant result by quad * 90 degrees
            c[code], s[code] = ((bc, bs), (-bs, bc), (-bc, -bs), (bs, -bc))[quad]
    c.setflags(write=False)
    s.setflags(write=False)
    return c, s


def cordic_sincos(phase10: int, iterations: int = CORDIC_ITERATIONS,
                  backend: Backend = Backend.FIXED) -> ComplexSample:
    if not 0 <= phase10 < 1 << CORDIC_PHASE_BITS:
        raise ValueError("phase10 must be a 10-bit code")
    c, s = cordic_table(iterations, backend)
    if backend is Backend.FLOAT:
        return ComplexSample(float(c[phase10]), float(s[phase10]))
    return ComplexSample(FixedSample(int(c[phase10])), FixedSample(int(s[phase10])))


class ToneSource:
    """Streaming tone generator addressed by global sample index."""

    def __init__(self, cfg: ToneConfig, backend: Backend = Backend.FIXED,
                 iterations: int = CORDIC_ITERATIONS):
        self.cfg = cfg
        self.backend = backend
        self.cos, self.sin = cordic_table(iterations, backend)

    def block(self, start: int, n: int) -> IqStream:
        codes = phase_to_cordic_input(phase_sequence(self.cfg, start, n), self.cfg.modulus_m)
        return IqStream(self.cos[codes], self.sin[codes], self.cfg.sample_rate, self.backend, start)


def generate_tone(cfg: ToneConfig, n_samples: int, backend: Backend = Backend.FIXED,
                  iterations: int = CORDIC_ITERATIONS, start: int = 0) -> IqStream:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    return ToneSource(cfg, backend, iterations).block(start, n_samples)


def cordic_max_error(iterations: int = CORDIC_ITERATIONS) -> float:
    """Worst-case |CORDIC - exact| over all codes, in Q1.15 LSBs."""
    c, s = cordic_table(iterations, Backend.FIXED)
    theta = 2 * np.pi * np.arange(len(c)) / len(c)
    full = (1 << IQ_FRAC) - 1
    return float(max(np.max(np.abs(c - full * np.cos(theta))), np.max(np.abs(s - full * np.sin(theta)))))
