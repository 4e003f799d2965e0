import math

import numpy as np
import pytest

from mkid_twin import periodicity as per
from mkid_twin.core import Backend, IqStream
from mkid_twin.excitation import (BandPhasorTable, Interpolator, band_shift_hz, band_upshift, combine,
                                  downshift_quarter_rate, interpolate, realize, upconvert_quarter_rate)
from mkid_twin.filters import channelizer_filter, interpolation_filter
from mkid_twin.pipeline import synthetic_tone_plan
from mkid_twin.tonegen import ToneConfig, generate_tone

FS = 250e6
ONE = (1 << 15) - 1


def peak_freq(x, rate):
    X = np.abs(np.fft.fft(x))
    k = int(np.argmax(X))
    n = len(x)
    return (k - n if k > n // 2 else k) * rate / n


def upshifted(cfg, n_in, backend=Backend.FIXED, start=0):
    tone = generate_tone(cfg, n_in, backend, start=start)
    return band_upshift(interpolate(downshift_quarter_rate(tone)), cfg.band)


def test_downshift_dc_gives_quarter_rate_phasor():
    s = IqStream(np.full(8, 7, np.int64), np.zeros(8, np.int64), FS)
    out = downshift_quarter_rate(s)
    assert list(zip(out.i, out.q)) == [(7, 0), (0, -7), (-7, 0), (0, 7)] * 2
    # the phase of the sequence follows the global index
    later = downshift_quarter_rate(s.replace(origin_index=1))
    assert np.array_equal(later.i, np.roll(out.i, -1)) and np.array_equal(later.q, np.roll(out.q, -1))


def test_up_and_down_quarter_rate_are_inverse():
    t = generate_tone(ToneConfig(1234), 1000)
    back = upconvert_quarter_rate(downshift_quarter_rate(t))
    assert np.array_equal(back.i, t.i) and np.array_equal(back.q, t.q)


def test_downshift_moves_tone_and_keeps_period():
    t = generate_tone(ToneConfig(4000), 2 * 65536)
    c = downshift_quarter_rate(t)
    assert peak_freq(c.to_complex()[:65536], FS) == pytest.approx(15.2587890625e6 - 62.5e6)
    assert round((15.2587890625e6 - 62.5e6) / 1e6, 2) == -47.24
    assert per.verify_period(c, 65536, 1) == (True, None)


def test_interpolation_of_zero_is_zero():
    out = interpolate(IqStream.zeros(100, FS))
    assert len(out) == 800 and out.sample_rate == 2e9
    assert not out.i.any() and not out.q.any()


def test_interpolation_factor_other_than_eight_rejected():
    with pytest.raises(ValueError):
        Interpolator(Backend.FIXED, factor=4)


def test_interpolator_block_invariance():
    t = downshift_quarter_rate(generate_tone(ToneConfig(4000), 5000))
    whole = interpolate(t)
    interp = Interpolator(Backend.FIXED)
    parts = [interp.process(t.slice(a, b)) for a, b in ((0, 1), (1, 999), (999, 5000))]
    assert np.array_equal(np.concatenate([p.i for p in parts]), whole.i)
    assert np.array_equal(np.concatenate([p.q for p in parts]), whole.q)
    with pytest.raises(ValueError):
        interp.process(t.slice(0, 10))


def test_interpolated_period():
    n = 3 * 65536
    up = interpolate(downshift_quarter_rate(generate_tone(ToneConfig(4000), n)))
    steady = up.slice(8 * 65536)
    assert per.verify_period(steady, 8 * 65536, 1) == (True, None)


def test_interpolation_images_below_80_db():
    n = 65536
    t = generate_tone(ToneConfig(4000), 2 * n, Backend.FLOAT)
    up = interpolate(downshift_quarter_rate(t)).slice(8 * n)
    X = np.abs(np.fft.fft(up.to_complex())) ** 2
    n_fft = 8 * n
    k0 = (4000 - n // 4) % n_fft
    assert int(np.argmax(X)) == k0
    images = [(k0 + j * n) % n_fft for j in range(1, 8)]
    worst = 10 * np.log10(max(X[k] for k in images) / X[k0])
    assert worst <= -80


def test_filter_specs():
    f = interpolation_filter()
    assert len(f) == 64 and f.stopband_attenuation_db(True, 8.0) >= 80
    assert f.passband_ripple_db(True) <= 0.01
    assert np.max(np.abs(f.int_taps)) < 1 << 17
    c = channelizer_filter()
    assert c.stopband_attenuation_db(True) >= 80
    assert np.max(np.abs(c.int_taps)) < 1 << 17


@pytest.mark.parametrize("band", range(10))
def test_phasor_table(band):
    for backend, tol in ((Backend.FIXED, 1.0), (Backend.FLOAT, 1e-12)):
        c, s = BandPhasorTable(band, backend).entries
        unit = 1 << 15 if backend is Backend.FIXED else 1.0
        mag = np.hypot(c.astype(float), s.astype(float))
        assert np.max(np.abs(mag - unit)) <= tol
        lc, ls = BandPhasorTable(band, backend).lookup(0, 120)
        assert np.array_equal(lc[:40], lc[40:80]) and np.array_equal(ls[40:80], ls[80:])
    assert band_shift_hz(band) == (2 * band + 1) * 50e6
    with pytest.raises(ValueError):
        BandPhasorTable(10)


def test_band6_shift_is_650_mhz():
    dc = IqStream.from_complex(np.ones(4000), 2e9)
    out = band_upshift(dc, 6)
    assert peak_freq(out.to_complex(), 2e9) == pytest.approx(650e6)
    assert band_shift_hz(6) == 13 / 40 * 2000e6


@pytest.mark.parametrize("m,band", [(1000, 0), (1004, 6), (1012, 9), (996, 3), (1001, 5)])
def test_upshift_period_matches_lcm(m, band):
    # short accumulators keep the brute-force search cheap
    cfg = ToneConfig(int(m * 0.37) | 1, m, band)
    while math.gcd(cfg.fcw, m) != 1:
        cfg = ToneConfig(cfg.fcw + 2, m, band)
    # an odd modulus also picks up the factor 4 of the quarter-rate shift
    predicted = math.lcm(8 * math.lcm(m, 4), 40)
    n_in = 3 * predicted // 8 + 16
    steady = upshifted(cfg, n_in).slice(128)
    x = steady.i + 1j * steady.q
    assert per.smallest_period(x, predicted) == predicted
    report = per.predict_period(per.legacy_chain(m)[:4])
    assert report.period == predicted


def test_combine_examples():
    t = generate_tone(ToneConfig(4000), 256)
    assert combine([t]) is t
    neg = t.replace(i=-t.i, q=-t.q)
    z = combine([t, neg])
    assert not z.i.any() and not z.q.any()
    with pytest.raises(ValueError):
        combine([t, t.slice(1)])
    with pytest.raises(ValueError):
        combine([t, t.replace(sample_rate=2e9)])


def test_400_tone_sum_bounded_by_triangle_inequality():
    plan = synthetic_tone_plan(1 << 16)
    tones = [generate_tone(ToneConfig(f, 1 << 16, bp.band), 2048) for bp in plan for f in bp.fcws]
    assert len(tones) == 400
    out = combine(tones)
    scale = 1 << math.ceil(math.log2(400))
    peak = np.max(np.abs(out.to_complex())) * scale
    bound = sum(np.max(np.abs(t.to_complex())) for t in tones)
    assert peak <= bound + scale * 2 ** -15
    # float path agrees with the exact sum
    fl = combine([t.replace(i=t.i * t.scale, q=t.q * t.scale, backend=Backend.FLOAT) for t in tones])
    assert np.max(np.abs(fl.to_complex() - out.to_complex())) <= 2 ** -15


def test_realize_examples():
    s = IqStream(np.array([3, -1], np.int64), np.array([7, 5], np.int64), FS)
    r = realize(s)
    assert r.i.tolist() == [3, -1] and r.q.tolist() == [0, 0] and r.is_real
    assert realize(s, "Q").i.tolist() == [7, 5]
    with pytest.raises(ValueError):
        realize(s, "X")


def test_realized_spectrum_symmetry_and_q_vs_i():
    n = 65536
    t = generate_tone(ToneConfig(4000), n, Backend.FLOAT)
    xi = np.fft.fft(realize(t, "I").i)
    xq = np.fft.fft(realize(t, "Q").i)
    assert np.allclose(xi[1:], np.conj(xi[1:][::-1]), atol=1e-9 * np.max(np.abs(xi)))
    peaks = sorted(np.argsort(np.abs(xi))[-2:].tolist())
    assert peaks == [4000, n - 4000]
    assert np.allclose(np.abs(xi), np.abs(xq), atol=1e-6 * np.max(np.abs(xi)))
