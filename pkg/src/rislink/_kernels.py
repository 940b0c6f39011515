"""Hot numeric kernels: time-varying tap convolutions and path-gain synthesis.

Every kernel exists as a pure-numpy implementation (``*_np``) and, when the
numba backend is enabled, an ``@njit``-compiled twin (``*_nb``). The plain
module-level names point at the selected backend; both variants stay
importable so tests and the benchmark can compare them directly.

Shapes: ``g`` is (n_samples, n_taps) complex128, signals are 1-D complex128
of length n_samples.
"""

import numpy as np

from . import _backend


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def tv_conv_linear_np(g, s):
    """r[i] = sum_l g[i, l] * s[i - l], with s[i < 0] = 0."""
    n, n_taps = g.shape
    out = np.zeros(n, dtype=np.complex128)
    for l in range(n_taps):
        out[l:] += g[l:, l] * s[: n - l]
    return out


def tv_conv_circular_np(g, s):
    """r[i] = sum_l g[i, l] * s[(i - l) mod n]."""
    out = np.zeros(g.shape[0], dtype=np.complex128)
    for l in range(g.shape[1]):
        out += g[:, l] * np.roll(s, l)
    return out


def tv_conv_circular_adj_np(g, y):
    """Adjoint of :func:`tv_conv_circular_np` in the Euclidean inner product."""
    out = np.zeros(g.shape[0], dtype=np.complex128)
    gy = np.conj(g) * y[:, None]
    for l in range(g.shape[1]):
        out += np.roll(gy[:, l], -l)
    return out


def synth_tap_gains_np(gains, delay_taps, dopplers_hz, n_samples, t_s, n_taps):
    """Accumulate per-path complex sinusoids into tap-gain columns."""
    out = np.zeros((n_samples, n_taps), dtype=np.complex128)
    t = np.arange(n_samples) * t_s
    for p in range(gains.shape[0]):
        out[:, delay_taps[p]] += gains[p] * np.exp(2j * np.pi * dopplers_hz[p] * t)
    return out


# ---------------------------------------------------------------------------
# loop bodies compiled by numba
# ---------------------------------------------------------------------------

def _tv_conv_linear_loops(g, s):
    n, n_taps = g.shape
    out = np.zeros(n, dtype=np.complex128)
    for i in range(n):
        lmax = n_taps if n_taps <= i + 1 else i + 1
        acc = 0.0 + 0.0j
        for l in range(lmax):
            acc += g[i, l] * s[i - l]
        out[i] = acc
    return out


def _tv_conv_circular_loops(g, s):
    n, n_taps = g.shape
    out = np.zeros(n, dtype=np.complex128)
    for i in range(n):
        acc = 0.0 + 0.0j
        for l in range(n_taps):
            j = i - l
            if j < 0:
                j += n
            acc += g[i, l] * s[j]
        out[i] = acc
    return out


def _tv_conv_circular_adj_loops(g, y):
    n, n_taps = g.shape
    out = np.zeros(n, dtype=np.complex128)
    for i in range(n):
        acc = 0.0 + 0.0j
        for l in range(n_taps):
            j = i + l
            if j >= n:
                j -= n
            acc += np.conj(g[j, l]) * y[j]
        out[i] = acc
    return out


def _synth_tap_gains_loops(gains, delay_taps, dopplers_hz, n_samples, t_s, n_taps):
    out = np.zeros((n_samples, n_taps), dtype=np.complex128)
    for p in range(gains.shape[0]):
        w = 2.0 * np.pi * dopplers_hz[p] * t_s
        # phasor recurrence: drift is ~n*eps, far below the channel's own noise
        rot = complex(np.cos(w), np.sin(w))
        tap = delay_taps[p]
        ph = gains[p]
        for i in range(n_samples):
            out[i, tap] += ph
            ph *= rot
    return out


if _backend.NUMBA_ENABLED:
    _njit = _backend.njit
    tv_conv_linear_nb = _njit(cache=True)(_tv_conv_linear_loops)
    tv_conv_circular_nb = _njit(cache=True)(_tv_conv_circular_loops)
    tv_conv_circular_adj_nb = _njit(cache=True)(_tv_conv_circular_adj_loops)
    synth_tap_gains_nb = _njit(cache=True)(_synth_tap_gains_loops)

    tv_conv_linear = tv_conv_linear_nb
    tv_conv_circular = tv_conv_circular_nb
    tv_conv_circular_adj = tv_conv_circular_adj_nb
    synth_tap_gains = synth_tap_gains_nb
else:
    tv_conv_linear = tv_conv_linear_np
    tv_conv_circular = tv_conv_circular_np
    tv_conv_circular_adj = tv_conv_circular_adj_np
    synth_tap_gains = synth_tap_gains_np
