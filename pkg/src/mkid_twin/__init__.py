"""Bit-accurate and floating-point model of an MKID readout DSP chain run in closed loop."""

from .core import Backend, ComplexSample, FixedSample, IqStream, complex_mul, fx_mul
from .pipeline import RunConfig, RunResult, run_closed_loop, run_stage_probe, single_tone_config
from .tonegen import ToneConfig, generate_tone

__all__ = [
    "Backend", "ComplexSample", "FixedSample", "IqStream", "complex_mul", "fx_mul",
    "RunConfig", "RunResult", "run_closed_loop", "run_stage_probe", "single_tone_config",
    "ToneConfig", "generate_tone",
]
