"""Link-level simulation of RIS-aided OTFS and OFDM under oscillator phase noise.

Modules: :mod:`~rislink.numerics` (unitary transforms and dense oracles),
:mod:`~rislink.waveform` (modulation chains and pilot layouts),
:mod:`~rislink.channel` (RIS cascade of doubly-selective links),
:mod:`~rislink.phase_noise` (free-running and PLL-locked oscillators),
:mod:`~rislink.estimation` (impulse-pilot snapshot + Wiener interpolation,
BEM/spline baselines), :mod:`~rislink.detection` (QAM, LSMR-IC equalizer,
convolutional coding), :mod:`~rislink.harness` (Monte Carlo runner) and
:mod:`~rislink.cli` (the ``sim`` command).
"""

from . import (channel, detection, estimation, harness, numerics, phase_noise,
               waveform)

__all__ = ["channel", "detection", "estimation", "harness", "numerics",
           "phase_noise", "waveform"]
__version__ = "0.1.0"
