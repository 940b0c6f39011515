"""Receiver-side oscillator phase noise.

Two oscillator models are supported:

* ``"fro"`` -- free-running oscillator. The phase is a random walk
  (Wiener process) with per-sample increment variance 4*pi*beta*T_s,
  where beta is the one-sided 3 dB linewidth of the Lorentzian spectrum.
* ``"cpll"`` -- oscillator locked by a first-order continuous-time PLL
  with loop-filter coefficient F. The phase is a mean-reverting
  (Ornstein-Uhlenbeck) process with stationary variance pi*beta/F.

Both models are characterised by their variogram (variance of the phase
increment over a lag) and the induced autocorrelation of exp(j*theta),
which for Gaussian increments is exp(-variogram/2):

    fro:   variogram(d) = 4*pi*beta*T_s*d
    cpll:  variogram(d) = (2*pi*beta/F) * (1 - exp(-d*F*T_s))

Traces are referenced to theta[0] = 0 (the absolute carrier phase is
unobservable). For the CPLL model the process is drawn stationary and then
shifted by its initial value, which keeps all increment statistics
stationary while honouring the reference convention.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

FRO = "fro"
CPLL = "cpll"


@dataclass(frozen=True)
class OscillatorModel:
    """Oscillator parameters: kind, 3 dB linewidth, sample period, loop gain."""

    kind: str
    beta_hz: float
    t_s: float
    f_pll_hz: float = 0.0

    def __post_init__(self):
        if self.kind not in (FRO, CPLL):
            raise ValueError(f"unknown oscillator kind {self.kind!r}")
        if self.beta_hz < 0:
            raise ValueError("linewidth beta_hz must be >= 0")
        if self.t_s <= 0:
            raise ValueError("sample period t_s must be > 0")
        if self.kind == CPLL and self.f_pll_hz <= 0:
            raise ValueError("cpll model needs f_pll_hz > 0")


def sample_traces(model: OscillatorModel, length: int, count: int, rng) -> np.ndarray:
    """Draw ``count`` independent phase traces, shape (count, length) radians."""
    if length < 1:
        raise ValueError("trace length must be >= 1")
    if model.beta_hz == 0.0:
        return np.zeros((count, length))
    if model.kind == FRO:
        var = 4.0 * np.pi * model.beta_hz * model.t_s
        theta = np.zeros((count, length))
        if length > 1:
            steps = rng.normal(0.0, np.sqrt(var), size=(count, length - 1))
            theta[:, 1:] = np.cumsum(steps, axis=1)
        return theta
    # cpll: exact AR(1) discretization of the OU process, drawn stationary
    rho = np.exp(-model.f_pll_hz * model.t_s)
    var_inf = np.pi * model.beta_hz / model.f_pll_hz
    w = rng.normal(0.0, 1.0, size=(count, length))
    w[:, 0] *= np.sqrt(var_inf)
    w[:, 1:] *= np.sqrt(var_inf * (1.0 - rho * rho))
    theta = lfilter([1.0], [1.0, -rho], w, axis=1)
    return theta - theta[:, :1]


def sample_trace(model: OscillatorModel, length: int, rng) -> np.ndarray:
    """Draw one phase trace of ``length`` samples, theta[0] = 0."""
    return sample_traces(model, length, 1, rng)[0]


def variogram(model: OscillatorModel, lag):
    """Variance of the phase increment over ``lag`` samples, in rad^2."""
    lag = np.abs(lag)
    if model.kind == FRO:
        out = 4.0 * np.pi * model.beta_hz * model.t_s * np.asarray(lag, dtype=np.float64)
    else:
        sat = 2.0 * np.pi * model.beta_hz / model.f_pll_hz
        out = sat * (1.0 - np.exp(-np.asarray(lag, dtype=np.float64) * model.f_pll_hz * model.t_s))
    return float(out) if np.ndim(lag) == 0 else out


def autocorrelation(model: OscillatorModel, lag):
    """E[exp(j*theta[m]) * conj(exp(j*theta[n]))] at lag m - n (real-valued)."""
    return np.exp(-0.5 * variogram(model, lag))


def apply_phase(samples, theta) -> np.ndarray:
    """Multiply a sample stream by exp(j*theta), element-wise."""
    samples = np.asarray(samples)
    theta = np.asarray(theta)
    if samples.shape != theta.shape:
        raise ValueError(f"length mismatch: {samples.shape} vs {theta.shape}")
    return samples * np.exp(1j * theta)
