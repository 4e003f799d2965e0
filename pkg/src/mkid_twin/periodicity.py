"""Exact period bookkeeping through the chain, and empirical checks of it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Backend, IqStream

KINDS = ("accumulator", "quarter_rate_shift", "interpolate", "phasor", "decimate", "boxcar_decimate")


@dataclass(frozen=True)
class StageDescriptor:
    kind: str
    param: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown stage kind {self.kind!r}")
        if not isinstance(self.param, (int, np.integer)) or self.param < 1:
            raise ValueError("stage parameters must be positive integers")

    def apply(self, p: int | None) -> int:
        k, v = self.kind, int(self.param)
        if k == "accumulator":
            return v if p is None else math.lcm(p, v)
        if p is None:
            raise ValueError(f"{k} stage needs a periodic input; start the chain with an accumulator")
        if k == "quarter_rate_shift":
            return math.lcm(p, 4)
        if k == "interpolate":
            return p * v
        if k == "phasor":
            return math.lcm(p, v)
        # sampling every v-th sample of a p-periodic sequence
        return p // math.gcd(p, v)


def Accumulator(m: int) -> StageDescriptor:
    return StageDescriptor("accumulator", m)


def QuarterRateShift() -> StageDescriptor:
    return StageDescriptor("quarter_rate_shift", 4)


def Interpolate(factor: int) -> StageDescriptor:
    return StageDescriptor("interpolate", factor)


def PhasorModulate(period: int) -> StageDescriptor:
    return StageDescriptor("phasor", period)


def Decimate(factor: int) -> StageDescriptor:
    return StageDescriptor("decimate", factor)


def BoxcarDecimate(window_len: int) -> StageDescriptor:
    return StageDescriptor("boxcar_decimate", window_len)


@dataclass
class PeriodicityReport:
    stages: list[StageDescriptor]
    periods: list[int]
    verified: list[bool | None] = field(default_factory=list)
    first_mismatch: list[int | None] = field(default_factory=list)

    @property
    def period(self) -> int:
        return self.periods[-1]

    def to_dict(self) -> dict:
        return {
            "stages": [[s.kind, int(s.param)] for s in self.stages],
            "periods": [int(p) for p in self.periods],
            "verified": list(self.verified),
            "first_mismatch": list(self.first_mismatch),
        }


def predict_period(chain) -> PeriodicityReport:
    """Fold stage periods left to right with exact integer LCM/GCD rules."""
    chain = list(chain)
    if not chain:
        raise ValueError("empty chain")
    periods = []
    p = None
    for stage in chain:
        p = stage.apply(p)
        periods.append(p)
    n = len(chain)
    return PeriodicityReport(chain, periods, [None] * n, [None] * n)


def legacy_chain(modulus: int = 1 << 16, window_len: int | None = None, band_phasor: int = 40,
                 interp: int = 8) -> list[StageDescriptor]:
    """Stage list of the closed loop, tone generator through DDC."""
    window_len = modulus if window_len is None else window_len
    return [
        Accumulator(modulus), QuarterRateShift(), Interpolate(interp), PhasorModulate(band_phasor),
        PhasorModulate(band_phasor), Decimate(interp), QuarterRateShift(), Accumulator(modulus),
        BoxcarDecimate(window_len),
    ]


def _as_array(stream) -> np.ndarray:
    if isinstance(stream, IqStream):
        return stream.i + 1j * stream.q if stream.backend is Backend.FLOAT else np.stack([stream.i, stream.q])
    return np.asarray(stream)


def verify_period(stream, period: int, n_periods: int = 2, tol: float | None = None):
    """Check x[n] == x[n + period] over n_periods comparisons of a full period.

    Exact equality for integer (fixed-mode) data. Float data is compared
    with an absolute tolerance of 1e-9 x RMS unless ``tol`` is given.
    Returns (verified, first_mismatch_index or None).
    """
    if period < 1 or n_periods < 1:
        raise ValueError("period and n_periods must be >= 1")
    x = _as_array(stream)
    n = x.shape[-1]
    need = (n_periods + 1) * period
    if n < need:
        raise ValueError(f"need {need} samples to test {n_periods} periods of {period}, have {n}")
    a, b = x[..., :n_periods * period], x[..., period:need]
    if np.iscomplexobj(x) or np.issubdtype(x.dtype, np.floating):
        if tol is None:
            rms = float(np.sqrt(np.mean(np.abs(x[..., :need]) ** 2)))
            tol = 1e-9 * rms
        bad = np.abs(a - b) > tol
    else:
        bad = a != b
    if bad.ndim > 1:
        bad = bad.any(axis=0)
    if not bad.any():
        return True, None
    return False, int(np.argmax(bad))


def smallest_period(x, max_period: int | None = None) -> int | None:
    """Brute-force smallest p with x[n] == x[n+p] over the whole sequence."""
    x = np.asarray(x)
    n = len(x)
    max_period = n // 2 if max_period is None else min(max_period, n - 1)
    # a period must reproduce the leading samples; prune on those first
    cand = np.arange(1, max_period + 1)
    for j in range(min(32, n - max_period)):
        cand = cand[x[cand + j] == x[j]]
    for p in cand:
        p = int(p)
        # chunked compare so that most candidates are rejected early
        if all(np.array_equal(x[a:min(a + 4096, n - p)], x[a + p:min(a + 4096, n - p) + p])
               for a in range(0, n - p, 4096)):
            return p
    return None


def spur_frequency_prediction(modulus: int, window_len: int, phasor_period: int = 40, interp: int = 8,
                              rate: float = 250e6, n_harmonics: int = 2) -> list[float]:
    """DDC-output spur lines implied by the band phasor stretching the period.

    r is how many accumulator periods the up-shifted stream needs to repeat;
    the DDC output then cycles every r windows, giving lines at k*f_out/r.
    """
    report = predict_period([Accumulator(modulus), QuarterRateShift(), Interpolate(interp),
                             PhasorModulate(phasor_period)])
    r = report.period // (interp * modulus)
    if r <= 1:
        return []
    f_out = rate / window_len
    return [k * f_out / r for k in range(1, n_harmonics + 1)]
