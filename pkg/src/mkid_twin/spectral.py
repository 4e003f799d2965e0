"""Spectra, noise extraction, PSD estimation and spur detection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .core import IqStream

FLOOR_DB = -400.0
ALIGN_NEIGHBOURHOOD = 10


@dataclass
class SpectrumReport:
    freqs: np.ndarray
    psd: np.ndarray
    sample_rate: float
    n_points: int
    detected_spurs: list[tuple[float, float]] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.freqs) != len(self.psd):
            raise ValueError("freqs and psd lengths differ")
        if len(self.freqs) > 1 and not np.all(np.diff(self.freqs) > 0):
            raise ValueError("freqs must be strictly increasing")

    @property
    def bin_width(self) -> float:
        return self.sample_rate / self.n_points


@dataclass
class NoiseStreams:
    amp_noise: np.ndarray
    phase_noise: np.ndarray
    rate: float


def _zero_mean(x: np.ndarray) -> np.ndarray:
    if np.all(x == x[0]):
        return np.zeros_like(x)
    return x - np.mean(x)


def amp_phase_noise(iq: IqStream) -> NoiseStreams:
    """Normalised amplitude fluctuation and unwrapped phase fluctuation."""
    if len(iq) == 0:
        raise ValueError("empty I/Q stream")
    i = iq.i.astype(np.float64) * iq.scale
    q = iq.q.astype(np.float64) * iq.scale
    dead = np.flatnonzero((iq.i == 0) & (iq.q == 0))
    if dead.size:
        raise ValueError(f"zero-magnitude sample at index {int(dead[0])}")
    amp = np.hypot(i, q)
    phase = np.unwrap(np.arctan2(q, i))
    if np.all(amp == amp[0]):
        amp_noise = np.zeros_like(amp)
    else:
        amp_noise = (amp - np.mean(amp)) / np.mean(amp)
    return NoiseStreams(amp_noise, _zero_mean(phase), iq.sample_rate)


def default_seg_len(n: int) -> int:
    """Largest power of two not exceeding n/4 (at least 1)."""
    return max(1, 1 << max(0, int(np.floor(np.log2(max(n // 4, 1))))))


def to_db(p, floor_db: float = FLOOR_DB):
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(p)
    return np.maximum(db, floor_db)


def estimate_psd(x, rate: float, seg_len: int | None = None, overlap: float = 0.5, window: str = "hann",
                 floor_db: float = FLOOR_DB) -> SpectrumReport:
    """One-sided averaged-periodogram PSD in dB/Hz.

    A white sequence of variance s2 gives a flat density of 2*s2/rate. No
    per-segment detrending. ``window="boxcar"`` gives the plain averaged
    periodogram.
    """
    x = np.asarray(x, dtype=np.float64)
    seg_len = default_seg_len(len(x)) if seg_len is None else int(seg_len)
    if seg_len < 2 or seg_len > len(x):
        raise ValueError(f"seg_len={seg_len} invalid for {len(x)} samples")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    noverlap = int(round(seg_len * overlap))
    f, p = signal.welch(x, fs=rate, window=window, nperseg=seg_len, noverlap=noverlap, detrend=False,
                        return_onesided=True, scaling="density")
    params = {"seg_len": seg_len, "overlap": overlap, "window": window, "floor_db": floor_db,
              "n_samples": len(x)}
    return SpectrumReport(f, to_db(p, floor_db), rate, seg_len, params=params)


def _sliding_median_floor(p_db: np.ndarray, k: int, half_window: int, guard: int) -> float:
    lo, hi = max(0, k - half_window), min(len(p_db), k + half_window + 1)
    idx = np.arange(lo, hi)
    idx = idx[np.abs(idx - k) > guard]
    if idx.size == 0:
        return float(np.median(p_db))
    return float(np.median(p_db[idx]))


def detect_spurs(report: SpectrumReport, min_prominence_db: float = 10.0, half_window: int = 16,
                 guard: int = 3) -> list[tuple[float, float]]:
    """Local maxima standing ``min_prominence_db`` above the local median floor.

    The floor at bin k is the median over k +- half_window with the
    peak's own +- guard bins left out. DC and the last bin are not
    candidates. Sorted by prominence, strongest first.
    """
    p = np.asarray(report.psd, dtype=np.float64)
    found = []
    for k in range(1, len(p) - 1):
        if not (p[k] > p[k - 1] and p[k] >= p[k + 1]):
            continue
        prom = p[k] - _sliding_median_floor(p, k, half_window, guard)
        if prom >= min_prominence_db:
            found.append((float(report.freqs[k]), float(prom)))
    found.sort(key=lambda t: -t[1])
    report.detected_spurs = found
    return found


def bin_alignment_metric(x, n_fft: int, near_bin: int | None = None, search: int = 50,
                         neighbourhood: int = ALIGN_NEIGHBOURHOOD) -> tuple[int, float]:
    """Peak bin of an n_fft-point DFT and the share of nearby power it holds.

    concentration = |X[k]|^2 / sum_{|d| <= 10} |X[k+d]|^2 (indices modulo
    n_fft). With ``near_bin`` the peak is searched within +- ``search``
    bins of it instead of over the whole spectrum.
    """
    x = np.asarray(x)
    if len(x) < n_fft:
        raise ValueError(f"need {n_fft} samples, have {len(x)}")
    p = np.abs(np.fft.fft(x[:n_fft])) ** 2
    if near_bin is None:
        k = int(np.argmax(p))
    else:
        cand = (np.arange(-search, search + 1) + near_bin) % n_fft
        k = int(cand[np.argmax(p[cand])])
    around = (np.arange(-neighbourhood, neighbourhood + 1) + k) % n_fft
    total = float(np.sum(p[around]))
    return k, (float(p[k]) / total if total > 0 else 0.0)


def signed_bin(k: int, n_fft: int) -> int:
    return k - n_fft if k > n_fft // 2 else k


def bin_of(freq: float, rate: float, n_fft: int) -> int:
    return int(round(freq / rate * n_fft)) % n_fft


def line_spectrum(x, rate: float, n_fft: int, floor_db: float = FLOOR_DB) -> SpectrumReport:
    """Two-sided rectangular-window power spectrum, dB relative to its peak."""
    x = np.asarray(x)
    X = np.fft.fftshift(np.fft.fft(x[:n_fft]))
    p = np.abs(X) ** 2
    peak = float(np.max(p)) or 1.0
    f = np.fft.fftshift(np.fft.fftfreq(n_fft, 1.0 / rate))
    return SpectrumReport(f, to_db(p / peak, floor_db), rate, n_fft, params={"kind": "dft", "n_fft": n_fft})


def top_peaks(report: SpectrumReport, n: int = 4, min_separation_bins: int = 20) -> list[tuple[float, float]]:
    """Strongest n bins, at least min_separation_bins apart."""
    order = np.argsort(report.psd)[::-1]
    picked: list[int] = []
    for k in order:
        if all(abs(int(k) - j) >= min_separation_bins for j in picked):
            picked.append(int(k))
        if len(picked) == n:
            break
    return [(float(report.freqs[k]), float(report.psd[k])) for k in picked]
