"""Joint channel/phase-noise estimation from delay-time impulse pilots.

The estimator works in two stages. Stage 1 reads the received samples at
each pilot impulse and its L-1 trailing samples, giving a noisy snapshot of
every delay tap at every pilot instant; taps whose average snapshot power
falls below an amplitude threshold are declared inactive and zeroed.
Stage 2 fills the samples between pilots with a Wiener (LMMSE) interpolator
built from the joint second-order statistics of the two multiplicative
processes that make the effective channel vary sample-by-sample: the Jakes
Doppler process, with autocorrelation J0(2*pi*f_d*T_s*lag), and the
oscillator phase noise, with autocorrelation exp(-variogram(lag)/2). The
processes are independent, so the effective-channel autocorrelation is
their entrywise product. One filter serves every delay tap: the taps share
the same normalized statistics and differ only by their gain, which the
snapshot already carries.

Two reference interpolators used for comparison live here as well: a
complex-exponential basis-expansion (BEM) least-squares fit and a natural
cubic spline, both applied per active tap to the same stage-1 snapshot.

Filter banks can be persisted with :func:`save_wiener_bank` /
:func:`load_wiener_bank`; the format is a little-endian binary header
(dims and model parameters) followed by the row-major complex128 filter
matrix, so precomputation can be amortized across runs.
"""

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .numerics import bessel_j0
from .phase_noise import CPLL, FRO, OscillatorModel, autocorrelation
from .waveform import PilotPattern

DEFAULT_AMPLITUDE_THRESHOLD = 3.0


@dataclass
class SnapshotEstimate:
    """Stage-1 output: per-tap estimates at the pilot instants.

    ``taps`` has shape (l_taps, n_pilots); rows of inactive taps are zero.
    ``row_power`` keeps the pre-threshold mean power of every row, which
    for inactive rows is a noise-floor observation.
    """

    taps: np.ndarray
    pilot_indices: np.ndarray
    active: np.ndarray
    row_power: np.ndarray

    @property
    def l_taps(self) -> int:
        return self.taps.shape[0]

    @property
    def n_pilots(self) -> int:
        return self.taps.shape[1]


def snapshot_estimate(rx, pattern: PilotPattern, l_taps: int, noise_var: float,
                      threshold: float = DEFAULT_AMPLITUDE_THRESHOLD) -> SnapshotEstimate:
    """Estimate every delay tap at every pilot instant from the raw samples.

    Guard zeros around each pilot impulse make rx[m_p + l] = g[m_p + l, l]
    times the pilot amplitude, so the snapshot is a direct read-out. A tap
    is active when its mean snapshot power exceeds (threshold * sigma)^2,
    sigma being the per-sample noise level after pilot normalization.
    """
    rx = np.asarray(rx)
    if pattern.pilot_indices[-1] + l_taps > rx.size:
        raise ValueError("pilot indices plus channel length exceed the frame")
    amp = pattern.amplitude
    cols = pattern.pilot_indices[:, None] + np.arange(l_taps)[None, :]
    taps = (rx[cols] / amp).T.copy()
    power = np.mean(np.abs(taps) ** 2, axis=1)
    active = power > threshold ** 2 * noise_var / amp ** 2
    taps[~active] = 0.0
    return SnapshotEstimate(taps, pattern.pilot_indices.copy(), active, power)


# ---------------------------------------------------------------------------
# correlation models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationModel:
    """Second-order statistics of the effective channel: Doppler + oscillator."""

    f_d_hz: float
    osc: Optional[OscillatorModel]
    t_s: float

    def __post_init__(self):
        if self.f_d_hz < 0 or self.t_s <= 0:
            raise ValueError("need f_d_hz >= 0 and t_s > 0")
        if self.osc is not None and self.osc.t_s != self.t_s:
            raise ValueError("oscillator and correlation model disagree on t_s")

    def cache_key(self) -> tuple:
        osc = self.osc
        osc_key = None if osc is None else (osc.kind, osc.beta_hz, osc.f_pll_hz)
        return (self.f_d_hz, self.t_s, osc_key)


def doppler_autocorr(model: CorrelationModel, rows, cols) -> np.ndarray:
    """Jakes autocorrelation J0(2*pi*f_d*T_s*|m - n|) on an index grid."""
    rows = np.asarray(rows, dtype=np.float64)[:, None]
    cols = np.asarray(cols, dtype=np.float64)[None, :]
    return bessel_j0(2.0 * np.pi * model.f_d_hz * model.t_s * np.abs(rows - cols))


def phase_autocorr(model: CorrelationModel, rows, cols) -> np.ndarray:
    """Oscillator autocorrelation exp(-variogram(|m - n|)/2) on an index grid."""
    rows = np.asarray(rows, dtype=np.float64)[:, None]
    cols = np.asarray(cols, dtype=np.float64)[None, :]
    lags = np.abs(rows - cols)
    if model.osc is None:
        return np.ones_like(lags)
    return autocorrelation(model.osc, lags)


def effective_autocorr(model: CorrelationModel, rows, cols) -> np.ndarray:
    """Autocorrelation of the effective channel: entrywise product of the two.

    The Doppler fading and the oscillator phase are independent processes
    multiplying the same tap, so the product's autocorrelation is the
    entrywise (not matrix) product of their autocorrelations.
    """
    return phase_autocorr(model, rows, cols) * doppler_autocorr(model, rows, cols)


# ---------------------------------------------------------------------------
# Wiener interpolation
# ---------------------------------------------------------------------------

@dataclass
class WienerFilterBank:
    """Precomputed LMMSE interpolation matrix and the statistics behind it.

    ``weights`` has shape (n_samples, n_pilots); row n holds the estimator
    of channel sample n from the n_pilots snapshot values.
    """

    weights: np.ndarray
    pilot_indices: np.ndarray
    noise_var: float
    pilot_power: float
    model: CorrelationModel

    @property
    def n_samples(self) -> int:
        return self.weights.shape[0]


def build_wiener(model: CorrelationModel, pilot_indices, n_samples: int,
                 noise_var: float, pilot_power: float,
                 rcond: float = 1e-12) -> WienerFilterBank:
    """Solve the Wiener-Hopf equations for pilot-to-frame interpolation.

    With K the effective-channel autocorrelation, the filter is
    K[:, P] @ pinv(K[P, P] + (noise_var / pilot_power) * I); the
    pseudo-inverse drops eigenvalues below ``rcond`` times the largest,
    which keeps the statically degenerate cases (f_d = beta = 0) stable.
    """
    pilots = np.asarray(pilot_indices, dtype=np.int64)
    if pilots.size == 0:
        raise ValueError("need at least one pilot")
    if pilot_power <= 0:
        raise ValueError("pilot power must be > 0")
    rows = np.arange(n_samples)
    k_cross = effective_autocorr(model, rows, pilots)
    k_obs = effective_autocorr(model, pilots, pilots)
    k_obs = k_obs + (noise_var / pilot_power) * np.eye(pilots.size)
    weights = k_cross @ np.linalg.pinv(k_obs, rcond=rcond, hermitian=True)
    return WienerFilterBank(weights, pilots.copy(), noise_var, pilot_power, model)


def apply_wiener(bank: WienerFilterBank, snap: SnapshotEstimate) -> np.ndarray:
    """Interpolate the snapshot to every sample; shape (n_samples, l_taps)."""
    if bank.weights.shape[1] != snap.n_pilots:
        raise ValueError("filter bank and snapshot disagree on pilot count")
    out = np.zeros((bank.n_samples, snap.l_taps), dtype=np.complex128)
    for l in np.flatnonzero(snap.active):
        out[:, l] = bank.weights @ snap.taps[l]
    return out


_BANK_MAGIC = b"WFBK"
_BANK_VERSION = 1
_OSC_CODES = {None: 0, FRO: 1, CPLL: 2}


def save_wiener_bank(bank: WienerFilterBank, path) -> None:
    """Persist a filter bank: little-endian header, then row-major complex128."""
    osc = bank.model.osc
    kind = _OSC_CODES[None if osc is None else osc.kind]
    beta = 0.0 if osc is None else osc.beta_hz
    f_pll = 0.0 if osc is None else osc.f_pll_hz
    with open(path, "wb") as fh:
        fh.write(_BANK_MAGIC)
        fh.write(struct.pack("<IIIB", _BANK_VERSION, bank.n_samples,
                             len(bank.pilot_indices), kind))
        fh.write(struct.pack("<6d", bank.model.f_d_hz, beta, f_pll,
                             bank.model.t_s, bank.noise_var, bank.pilot_power))
        fh.write(np.ascontiguousarray(bank.pilot_indices, dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(bank.weights, dtype="<c16").tobytes())


def load_wiener_bank(path) -> WienerFilterBank:
    """Inverse of :func:`save_wiener_bank`."""
    with open(path, "rb") as fh:
        if fh.read(4) != _BANK_MAGIC:
            raise ValueError("not a wiener filter bank file")
        version, n_samples, n_pilots, kind = struct.unpack("<IIIB", fh.read(13))
        if version != _BANK_VERSION:
            raise ValueError(f"unsupported filter bank version {version}")
        f_d, beta, f_pll, t_s, noise_var, pilot_power = struct.unpack("<6d", fh.read(48))
        pilots = np.frombuffer(fh.read(8 * n_pilots), dtype="<u8").astype(np.int64)
        data = np.frombuffer(fh.read(16 * n_samples * n_pilots), dtype="<c16")
    weights = data.reshape(n_samples, n_pilots).copy()
    osc = None
    if kind == 1:
        osc = OscillatorModel(FRO, beta, t_s)
    elif kind == 2:
        osc = OscillatorModel(CPLL, beta, t_s, f_pll)
    model = CorrelationModel(f_d, osc, t_s)
    return WienerFilterBank(weights, pilots, noise_var, pilot_power, model)


# ---------------------------------------------------------------------------
# reference interpolators
# ---------------------------------------------------------------------------

def bem_order(f_d_hz: float, beta_hz: float, t_s: float, k_over: int,
              n_samples: int) -> int:
    """Number of complex-exponential basis functions for the BEM fit."""
    return int(np.ceil(2.0 * k_over * n_samples * (f_d_hz + beta_hz) * t_s)) + 1


def bem_estimate(snap: SnapshotEstimate, f_d_hz: float, beta_hz: float,
                 t_s: float, k_over: int, n_samples: int) -> np.ndarray:
    """Least-squares complex-exponential basis fit through the pilot snapshots.

    The basis spans frequencies centred on DC with resolution
    1/(k_over * n_samples); its order grows with the combined Doppler and
    phase-noise bandwidth. Raises when the fit would be underdetermined.
    """
    order = bem_order(f_d_hz, beta_hz, t_s, k_over, n_samples)
    if order > snap.n_pilots:
        raise ValueError(f"BEM order {order} exceeds pilot count {snap.n_pilots}")
    freqs = (np.arange(order) - (order - 1) / 2.0) / (k_over * n_samples)
    t = np.arange(n_samples)
    basis = np.exp(2j * np.pi * t[:, None] * freqs[None, :])
    basis_p = basis[snap.pilot_indices]
    out = np.zeros((n_samples, snap.l_taps), dtype=np.complex128)
    for l in np.flatnonzero(snap.active):
        coef, *_ = np.linalg.lstsq(basis_p, snap.taps[l], rcond=None)
        out[:, l] = basis @ coef
    return out


def spline_estimate(snap: SnapshotEstimate, n_samples: int) -> np.ndarray:
    """Natural cubic spline through the pilot snapshots, per active tap.

    Real and imaginary parts are splined separately; outside the pilot span
    the estimate is held constant at the end knots.
    """
    if snap.n_pilots < 4:
        raise ValueError("spline interpolation needs at least 4 pilots")
    t = np.arange(n_samples)
    lo, hi = snap.pilot_indices[0], snap.pilot_indices[-1]
    out = np.zeros((n_samples, snap.l_taps), dtype=np.complex128)
    for l in np.flatnonzero(snap.active):
        sp_re = CubicSpline(snap.pilot_indices, snap.taps[l].real, bc_type="natural")
        sp_im = CubicSpline(snap.pilot_indices, snap.taps[l].imag, bc_type="natural")
        vals = sp_re(t) + 1j * sp_im(t)
        vals[t < lo] = snap.taps[l, 0]
        vals[t > hi] = snap.taps[l, -1]
        out[:, l] = vals
    return out


def nmse(estimate, reference) -> float:
    """Squared-error energy of the estimate over the reference energy."""
    estimate = np.asarray(estimate)
    reference = np.asarray(reference)
    if estimate.shape != reference.shape:
        raise ValueError("estimate and reference shapes differ")
    ref_energy = np.sum(np.abs(reference) ** 2)
    if ref_energy == 0:
        raise ValueError("reference has zero energy")
    return float(np.sum(np.abs(estimate - reference) ** 2) / ref_energy)
