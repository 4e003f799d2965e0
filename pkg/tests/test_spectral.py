import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mkid_twin.core import Backend, IqStream
from mkid_twin.spectral import (FLOOR_DB, SpectrumReport, amp_phase_noise, bin_alignment_metric,
                                default_seg_len, detect_spurs, estimate_psd, line_spectrum, top_peaks)


def test_white_noise_level():
    rng = np.random.default_rng(12345)
    sigma2, rate = 0.3, 1000.0
    x = rng.normal(0, np.sqrt(sigma2), 1 << 16)
    rep = estimate_psd(x, rate)
    expected = 10 * np.log10(sigma2 * 2 / rate)
    interior = rep.psd[1:-1]
    assert abs(np.mean(interior) - expected) < 1.0
    assert rep.params["window"] == "hann" and rep.params["seg_len"] == default_seg_len(len(x))


def test_sinusoid_power():
    rate, n, seg = 1000.0, 1 << 14, 1024
    k = 100
    A = 0.7
    t = np.arange(n)
    x = A * np.cos(2 * np.pi * k / seg * t)
    rep = estimate_psd(x, rate, seg_len=seg)
    p = 10 ** (rep.psd / 10)
    band = slice(k - 3, k + 4)
    power = np.sum(p[band]) * rep.bin_width
    assert power == pytest.approx(A ** 2 / 2, rel=0.05)


def test_zero_sequence_reports_floor():
    rep = estimate_psd(np.zeros(1024), 1.0)
    assert np.all(rep.psd == FLOOR_DB)
    assert detect_spurs(rep) == []


def test_degenerate_segment_rejected():
    with pytest.raises(ValueError):
        estimate_psd(np.zeros(16), 1.0, seg_len=32)
    with pytest.raises(ValueError):
        estimate_psd(np.zeros(16), 1.0, seg_len=1)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.sampled_from([256, 512, 1024]), elements=st.floats(-1, 1)))
def test_parseval_boxcar(x):
    var = np.var(x)
    if var < 1e-12:
        return
    rep = estimate_psd(x - np.mean(x), 1.0, seg_len=len(x), overlap=0.0, window="boxcar")
    total = np.sum(10 ** (rep.psd / 10)) * rep.bin_width
    assert total == pytest.approx(var, rel=0.01)


@given(arrays(np.float64, st.integers(8, 300), elements=st.floats(-1e3, 1e3)))
def test_conjugate_symmetry(x):
    X = np.fft.fft(x)
    n = len(x)
    scale = max(1.0, float(np.max(np.abs(X))))
    assert np.allclose(X[1:], np.conj(X[1:][::-1]), atol=1e-9 * scale)
    assert np.allclose(X[(n - np.arange(n)) % n], np.conj(X), atol=1e-9 * scale)


def test_detect_spurs_finds_single_injected_line():
    f = np.linspace(0, 500, 257)
    psd = np.full(257, -100.0)
    psd[77] = -70.0
    rep = SpectrumReport(f, psd, 1000.0, 512)
    assert detect_spurs(rep) == [(f[77], 30.0)]
    assert rep.detected_spurs == [(f[77], 30.0)]
    # flat floor with small ripple stays clean
    rng = np.random.default_rng(3)
    rep2 = SpectrumReport(f, -100 + rng.uniform(-2, 2, 257), 1000.0, 512)
    assert detect_spurs(rep2) == []


def test_report_validation():
    with pytest.raises(ValueError):
        SpectrumReport(np.array([0.0, 1.0]), np.zeros(3), 1.0, 4)
    with pytest.raises(ValueError):
        SpectrumReport(np.array([1.0, 0.0]), np.zeros(2), 1.0, 4)


def test_amp_phase_noise_constant():
    s = IqStream(np.full(100, 3.0), np.full(100, 4.0), 1.0, Backend.FLOAT)
    nz = amp_phase_noise(s)
    assert not nz.amp_noise.any() and not nz.phase_noise.any()


def test_amp_phase_noise_ramp():
    eps = 1e-3
    n = np.arange(2000)
    s = IqStream(np.cos(eps * n), np.sin(eps * n), 1.0, Backend.FLOAT)
    nz = amp_phase_noise(s)
    assert np.max(np.abs(nz.amp_noise)) < 1e-12
    assert np.allclose(nz.phase_noise, eps * (n - n.mean()), atol=1e-12)
    # zero mean relative to own RMS
    rms = np.sqrt(np.mean(nz.phase_noise ** 2))
    assert abs(np.mean(nz.phase_noise)) <= 1e-12 * rms


def test_amp_phase_noise_unwraps():
    n = np.arange(1000)
    s = IqStream(np.cos(0.5 * n), np.sin(0.5 * n), 1.0, Backend.FLOAT)
    ph = amp_phase_noise(s).phase_noise
    assert np.allclose(np.diff(ph), 0.5)


def test_amp_phase_noise_zero_sample_named():
    s = IqStream(np.array([1, 0, 2], np.int64), np.array([0, 0, 1], np.int64), 1.0)
    with pytest.raises(ValueError, match="index 1"):
        amp_phase_noise(s)


def test_bin_alignment_on_and_off_grid():
    n = 4096
    x = np.exp(2j * np.pi * 100 * np.arange(n) / n)
    k, c = bin_alignment_metric(x, n)
    assert k == 100 and c > 0.999
    _, c_off = bin_alignment_metric(x, n - 1)
    assert c_off < 0.999
    y = np.exp(2j * np.pi * 100.5 * np.arange(n) / n)
    assert bin_alignment_metric(y, n)[1] < 0.9
    with pytest.raises(ValueError):
        bin_alignment_metric(x, n + 1)


def test_line_spectrum_and_top_peaks():
    n = 1024
    x = np.exp(2j * np.pi * 50 * np.arange(n) / n) + 0.01 * np.exp(-2j * np.pi * 200 * np.arange(n) / n)
    rep = line_spectrum(x, 1024.0, n)
    peaks = top_peaks(rep, 2)
    assert peaks[0] == (50.0, 0.0)
    assert peaks[1][0] == -200.0 and peaks[1][1] == pytest.approx(-40.0)
