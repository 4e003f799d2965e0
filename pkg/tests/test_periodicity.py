import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mkid_twin import periodicity as per
from mkid_twin.periodicity import (Accumulator, BoxcarDecimate, Decimate, Interpolate, PhasorModulate,
                                   QuarterRateShift, StageDescriptor)


def test_predict_examples():
    legacy = [Accumulator(1 << 16), QuarterRateShift(), Interpolate(8), PhasorModulate(40)]
    assert per.predict_period(legacy).period == 5 * 2 ** 19
    assert per.predict_period(legacy).periods == [2 ** 16, 2 ** 16, 2 ** 19, 5 * 2 ** 19]
    mitigated = [Accumulator(65520), QuarterRateShift(), Interpolate(8), PhasorModulate(40)]
    assert per.predict_period(mitigated).period == 8 * 65520
    assert per.predict_period([Accumulator(1 << 16)]).period == 1 << 16


def test_full_chain_output_period():
    assert per.predict_period(per.legacy_chain(1 << 16)).period == 5
    assert per.predict_period(per.legacy_chain(65520)).period == 1
    assert per.predict_period(per.legacy_chain(1 << 16)).periods[5] == 5 * 2 ** 16


def test_invalid_chains():
    with pytest.raises(ValueError):
        per.predict_period([])
    with pytest.raises(ValueError):
        per.predict_period([QuarterRateShift()])
    with pytest.raises(ValueError):
        StageDescriptor("fft", 2)
    with pytest.raises(ValueError):
        Interpolate(0)


def test_verify_examples():
    assert per.verify_period(np.full(30, 7), 4) == (True, None)
    assert per.verify_period(np.ones(30) * 0.5, 9, 2) == (True, None)
    x = np.arange(20) % 5
    assert per.verify_period(x, 5, 3) == (True, None)
    assert per.verify_period(x, 4, 1) == (False, 0)
    y = np.arange(20) % 5
    y[13] = 99
    assert per.verify_period(y, 5, 3) == (False, 8)
    with pytest.raises(ValueError):
        per.verify_period(x, 10, 2)


def test_verify_float_tolerance():
    x = np.tile(np.linspace(-1, 1, 7), 4)
    assert per.verify_period(x + 1e-12 * np.arange(len(x)) / len(x), 7, 3)[0]
    assert not per.verify_period(x + 1e-6 * (np.arange(len(x)) > 10), 7, 3)[0]


def test_spur_prediction():
    lines = per.spur_frequency_prediction(1 << 16, 1 << 16)
    assert [round(f, 2) for f in lines] == [762.94, 1525.88]
    assert per.spur_frequency_prediction(65520, 65520) == []
    assert per.spur_frequency_prediction(1 << 16, 1 << 16, phasor_period=1) == []


def synth(chain_params, n_out):
    """Build a stream through concrete stage models for a chain spec."""
    m, fcw, stages = chain_params
    # enough input for n_out samples after every rate change
    grow = math.prod(v for k, v in stages if k == "interp")
    shrink = math.prod(v for k, v in stages if k == "decim")
    n = (n_out * shrink) // grow + 2
    idx = np.arange(n)
    x = ((fcw * idx) % m + 1).astype(np.complex128)
    for kind, v in stages:
        k = np.arange(len(x))
        if kind == "quarter":
            x = x * np.array([1, -1j, -1, 1j])[k % 4]
        elif kind == "interp":
            y = np.zeros(len(x) * v, np.complex128)
            y[::v] = x
            x = y
        elif kind == "phasor":
            table = np.exp(2j * np.pi * np.arange(v) / v)
            x = x * table[k % v]
        elif kind == "decim":
            x = x[::v]
    return x


def descriptors(chain_params):
    m, _, stages = chain_params
    make = {"quarter": lambda v: QuarterRateShift(), "interp": Interpolate, "phasor": PhasorModulate,
            "decim": Decimate}
    return [Accumulator(m)] + [make[k](v) for k, v in stages]


stage = st.one_of(st.tuples(st.just("quarter"), st.just(4)), st.tuples(st.just("interp"), st.integers(2, 4)),
                  st.tuples(st.just("phasor"), st.integers(2, 12)), st.tuples(st.just("decim"), st.integers(2, 3)))


@st.composite
def chains(draw):
    m = draw(st.integers(2, 40))
    fcw = draw(st.integers(1, m - 1))
    assume(math.gcd(fcw, m) == 1)
    return m, fcw, draw(st.lists(stage, max_size=4))


@settings(max_examples=150, deadline=None)
@given(chains())
def test_prediction_against_brute_force(params):
    predicted = per.predict_period(descriptors(params)).period
    x = synth(params, 3 * predicted + 40)
    assert per.verify_period(x, predicted, 2) == (True, None)
    found = per.smallest_period(x, predicted)
    assert found is not None and predicted % found == 0
    kinds = [k for k, _ in params[2]]
    if "decim" not in kinds and kinds.count("quarter") + kinds.count("phasor") <= 1:
        # modulators can cancel each other and decimation can drop the
        # distinguishing samples; otherwise the bound is tight
        assert found == predicted


def test_accumulator_alone_is_tight():
    for m, fcw in ((16, 3), (37, 5), (1000, 7)):
        x = ((fcw * np.arange(3 * m)) % m)
        assert per.smallest_period(x) == m == per.predict_period([Accumulator(m)]).period


def test_boxcar_decimate_rule():
    assert BoxcarDecimate(65536).apply(5 * 65536) == 5
    assert BoxcarDecimate(65520).apply(8 * 65520) == 8
    assert Decimate(8).apply(5 * 2 ** 19) == 5 * 2 ** 16
