"""Symbol mapping, iterative equalization and channel coding.

Equalization runs in the delay-time domain: the forward operator chains the
waveform's modulation transform with the (estimated) time-varying tap
convolution, and an LSMR least-squares solver inverts it. Interference
cancellation wraps the solver: after each solve the data cells are
hard-decided, their reconstructed contribution is removed from the
observation, and the residual system is re-solved, for a configured number
of passes. Pilot and guard cells are never decided; their known values are
subtracted up front and re-inserted at the end.

The codec is the de-facto rate-1/2 feedforward convolutional code with
constraint length 7 and generators (133, 171) octal, zero-terminated, with
a Viterbi decoder taking hard bits (Hamming metric) or LLRs (correlation
metric, positive LLR meaning bit 0).
"""

from dataclasses import dataclass

import numpy as np

from ._kernels import tv_conv_circular, tv_conv_circular_adj
from .numerics import doppler_block_transform
from .waveform import (CELL_DATA, FrameConfig, PilotPattern, otfs_layout,
                       ofdm_symbol_sample_indices)


# ---------------------------------------------------------------------------
# QAM
# ---------------------------------------------------------------------------

# Gray order along one 16-QAM axis: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3
_GRAY2 = {(0, 0): -3.0, (0, 1): -1.0, (1, 1): 1.0, (1, 0): 3.0}


@dataclass(frozen=True)
class QamConstellation:
    """Gray-labelled unit-energy QAM constellation."""

    order: int
    points: np.ndarray
    bits_per_symbol: int


def make_constellation(order: int) -> QamConstellation:
    """4-QAM or 16-QAM with Gray labelling and unit average energy."""
    if order == 4:
        pts = np.empty(4, dtype=np.complex128)
        for b in range(4):
            b0, b1 = (b >> 1) & 1, b & 1
            pts[b] = ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2.0)
        return QamConstellation(4, pts, 2)
    if order == 16:
        pts = np.empty(16, dtype=np.complex128)
        for b in range(16):
            b0, b1, b2, b3 = (b >> 3) & 1, (b >> 2) & 1, (b >> 1) & 1, b & 1
            pts[b] = (_GRAY2[(b0, b1)] + 1j * _GRAY2[(b2, b3)]) / np.sqrt(10.0)
        return QamConstellation(16, pts, 4)
    raise ValueError(f"unsupported QAM order {order}")


def qam_map(bits, constellation: QamConstellation) -> np.ndarray:
    """Bits -> symbols; bit count must divide by bits_per_symbol."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = constellation.bits_per_symbol
    if bits.size % k:
        raise ValueError(f"bit count {bits.size} not divisible by {k}")
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = bits.reshape(-1, k) @ weights
    return constellation.points[labels]


def qam_hard_decide(symbols, constellation: QamConstellation) -> np.ndarray:
    """Nearest constellation point for each symbol."""
    symbols = np.asarray(symbols)
    d2 = np.abs(symbols[:, None] - constellation.points[None, :]) ** 2
    return constellation.points[np.argmin(d2, axis=1)]


def qam_demap(symbols, constellation: QamConstellation, soft: bool = False,
              noise_var: float = 1.0):
    """Symbols -> hard bits, or max-log LLRs when ``soft`` (LLR > 0: bit 0)."""
    symbols = np.asarray(symbols).ravel()
    k = constellation.bits_per_symbol
    d2 = np.abs(symbols[:, None] - constellation.points[None, :]) ** 2
    if not soft:
        labels = np.argmin(d2, axis=1)
        out = np.empty(symbols.size * k, dtype=np.int64)
        for i in range(k):
            out[i::k] = (labels >> (k - 1 - i)) & 1
        return out
    labels = np.arange(constellation.order)
    llrs = np.empty(symbols.size * k)
    for i in range(k):
        bit = (labels >> (k - 1 - i)) & 1
        d0 = d2[:, bit == 0].min(axis=1)
        d1 = d2[:, bit == 1].min(axis=1)
        llrs[i::k] = (d1 - d0) / max(noise_var, 1e-30)
    return llrs


def ber(tx_bits, rx_bits) -> float:
    """Fraction of differing bits."""
    tx_bits = np.asarray(tx_bits)
    rx_bits = np.asarray(rx_bits)
    if tx_bits.shape != rx_bits.shape:
        raise ValueError("bit streams differ in length")
    return float(np.mean(tx_bits != rx_bits))


# ---------------------------------------------------------------------------
# LSMR
# ---------------------------------------------------------------------------

def _sym_ortho(a, b):
    c, s, r = 0.0, 0.0, 0.0
    if b == 0.0:
        return np.sign(a) if a != 0 else 1.0, 0.0, abs(a)
    if a == 0.0:
        return 0.0, np.sign(b), abs(b)
    if abs(b) > abs(a):
        tau = a / b
        s = np.sign(b) / np.sqrt(1.0 + tau * tau)
        c = s * tau
        r = b / s
    else:
        tau = b / a
        c = np.sign(a) / np.sqrt(1.0 + tau * tau)
        s = c * tau
        r = a / c
    return c, s, r


class AdjointError(ValueError):
    """Raised when the supplied operator pair fails the adjoint dot-test."""


def _adjoint_dot_test(apply_a, apply_ah, m: int, n: int, tol: float = 1e-6):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    ax = apply_a(x)
    ahw = apply_ah(w)
    lhs = np.vdot(w, ax)
    rhs = np.vdot(ahw, x)
    scale = np.linalg.norm(ax) * np.linalg.norm(w) \
        + np.linalg.norm(x) * np.linalg.norm(ahw) + 1e-30
    if abs(lhs - rhs) > tol * scale:
        raise AdjointError(f"adjoint dot-test failed: |{lhs} - {rhs}| > {tol}*{scale}")


def lsmr_solve(apply_a, apply_ah, y, iters: int, damping: float = 0.0, *,
               atol: float = 1e-8, dot_test: bool = True,
               return_history: bool = False):
    """Iterative least-squares solve of min ||y - A x||^2 + damping^2 ||x||^2.

    Golub-Kahan bidiagonalization with the LSMR recurrences; stops at
    ``iters`` iterations or when the estimated residual drops below
    ``atol`` relative to ||y||. ``return_history`` additionally returns the
    per-iteration residual-norm estimates.
    """
    y = np.asarray(y, dtype=np.complex128)
    m = y.shape[0]
    u = y.copy()
    beta = np.linalg.norm(u)
    v0 = apply_ah(y)
    n = v0.shape[0]
    if dot_test:
        _adjoint_dot_test(apply_a, apply_ah, m, n)

    x = np.zeros(n, dtype=np.complex128)
    history = []
    if beta > 0:
        u /= beta
        v = v0 / beta
        alpha = np.linalg.norm(v)
    else:
        v = np.zeros(n, dtype=np.complex128)
        alpha = 0.0
    if alpha > 0:
        v /= alpha
    if alpha * beta == 0:
        return (x, history) if return_history else x

    zetabar = alpha * beta
    alphabar = alpha
    rho = rhobar = cbar = 1.0
    sbar = 0.0
    h = v.copy()
    hbar = np.zeros(n, dtype=np.complex128)
    betadd = beta
    betad = 0.0
    rhodold = 1.0
    tautildeold = 0.0
    thetatilde = 0.0
    zeta = 0.0
    d = 0.0
    norma2 = alpha * alpha
    normb = beta
    normr = beta

    for _ in range(iters):
        u = apply_a(v) - alpha * u
        beta = np.linalg.norm(u)
        if beta > 0:
            u /= beta
            v = apply_ah(u) - beta * v
            alpha = np.linalg.norm(v)
            if alpha > 0:
                v /= alpha

        chat, shat, alphahat = _sym_ortho(alphabar, damping)
        rhoold = rho
        c, s, rho = _sym_ortho(alphahat, beta)
        thetanew = s * alpha
        alphabar = c * alpha

        rhobarold = rhobar
        zetaold = zeta
        thetabar = sbar * rho
        cbar, sbar, rhobar = _sym_ortho(cbar * rho, thetanew)
        zeta = cbar * zetabar
        zetabar = -sbar * zetabar

        hbar = h - (thetabar * rho / (rhoold * rhobarold)) * hbar
        x = x + (zeta / (rho * rhobar)) * hbar
        h = v - (thetanew / rho) * h

        # residual-norm recurrences
        betaacute = chat * betadd
        betacheck = -shat * betadd
        betahat = c * betaacute
        betadd = -s * betaacute
        thetatildeold = thetatilde
        ctildeold, stildeold, rhotildeold = _sym_ortho(rhodold, thetabar)
        thetatilde = stildeold * rhobar
        rhodold = ctildeold * rhobar
        betad = -stildeold * betad + ctildeold * betahat
        tautildeold = (zetaold - thetatildeold * tautildeold) / rhotildeold
        taud = (zeta - thetatilde * tautildeold) / rhodold
        d = d + betacheck * betacheck
        normr = np.sqrt(d + (betad - taud) ** 2 + betadd * betadd)
        norma2 += beta * beta
        normar = abs(zetabar)
        norma2 += alpha * alpha
        history.append(float(normr))

        if normr <= atol * normb:
            break
        if normar <= atol * np.sqrt(norma2) * normr:
            break

    return (x, history) if return_history else x


# ---------------------------------------------------------------------------
# LSMR-IC equalizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EqualizerConfig:
    """Interference-cancellation passes, inner LSMR iterations, damping."""

    ic_iters: int = 5
    lsmr_iters: int = 10
    damping: float = 0.0

    def __post_init__(self):
        if self.ic_iters < 1 or self.lsmr_iters < 1 or self.damping < 0:
            raise ValueError("bad equalizer configuration")


def otfs_frame_operator(gains, cfg: FrameConfig):
    """Forward/adjoint maps between the DD grid (vec) and the delay-time frame.

    ``gains`` is the effective (n = M*N, L) tap matrix acting circularly on
    the CP-stripped frame; the reduced CP turns the physical linear
    convolution into exactly this circular one.
    """
    g = np.ascontiguousarray(gains, dtype=np.complex128)
    m, n = cfg.m, cfg.n

    def apply_a(x):
        s = doppler_block_transform(x, m, n, inverse=True)
        return tv_conv_circular(g, np.ascontiguousarray(s))

    def apply_ah(r):
        s = tv_conv_circular_adj(g, np.ascontiguousarray(r, dtype=np.complex128))
        return doppler_block_transform(s, m, n, inverse=False)

    return apply_a, apply_ah


def ofdm_frame_operator(gains, cfg: FrameConfig):
    """Forward/adjoint maps between the TF grid (vec) and the symbol samples.

    ``gains`` covers the full serial frame; each symbol sees the slice of it
    behind its own CP, acting circularly over the M symbol samples.
    """
    n_sym = cfg.n_ofdm_symbols
    m = cfg.m
    sym_idx = ofdm_symbol_sample_indices(cfg)
    g_sym = [np.ascontiguousarray(np.asarray(gains)[sym_idx[q]], dtype=np.complex128)
             for q in range(n_sym)]

    def apply_a(x):
        grid = x.reshape((m, n_sym), order="F")
        out = np.empty((m, n_sym), dtype=np.complex128)
        for q in range(n_sym):
            b = np.fft.ifft(grid[:, q], norm="ortho")
            out[:, q] = tv_conv_circular(g_sym[q], np.ascontiguousarray(b))
        return out.ravel(order="F")

    def apply_ah(r):
        rg = r.reshape((m, n_sym), order="F")
        out = np.empty((m, n_sym), dtype=np.complex128)
        for q in range(n_sym):
            b = tv_conv_circular_adj(g_sym[q], np.ascontiguousarray(rg[:, q],
                                                                    dtype=np.complex128))
            out[:, q] = np.fft.fft(b, norm="ortho")
        return out.ravel(order="F")

    return apply_a, apply_ah


def _masked_operator(apply_a, apply_ah, mask):
    idx = np.flatnonzero(mask)
    size = mask.size

    def a_data(xd):
        x = np.zeros(size, dtype=np.complex128)
        x[idx] = xd
        return apply_a(x)

    def ah_data(r):
        return apply_ah(r)[idx]

    return a_data, ah_data


def lsmr_ic_equalize(y, gains, kind: str, cfg: FrameConfig, pattern: PilotPattern,
                     eq: EqualizerConfig, constellation: QamConstellation) -> np.ndarray:
    """Equalize one frame; returns the symbol-domain grid estimate.

    ``y`` is the CP-stripped delay-time frame for OTFS or the full serial
    frame for OFDM; ``gains`` the matching effective tap estimate. Known
    pilot/guard cells are cancelled before the first solve and re-inserted
    in the returned grid.
    """
    if kind == "otfs":
        apply_a, apply_ah = otfs_frame_operator(gains, cfg)
        layout = otfs_layout(cfg)
        known = np.zeros((cfg.m, cfg.n), dtype=np.complex128)
        known[0, 0] = np.sqrt(cfg.n) * pattern.amplitude
        known_vec = known.ravel(order="F")
        data_mask = (layout == CELL_DATA).ravel(order="F")
        y_obs = np.asarray(y, dtype=np.complex128)
        shape = (cfg.m, cfg.n)
    elif kind == "ofdm":
        apply_a, apply_ah = ofdm_frame_operator(gains, cfg)
        n_sym = cfg.n_ofdm_symbols
        known_vec = np.zeros(cfg.m * n_sym, dtype=np.complex128)
        data_mask = np.ones(cfg.m * n_sym, dtype=bool)
        y_obs = np.asarray(y, dtype=np.complex128)[ofdm_symbol_sample_indices(cfg)]
        y_obs = np.ascontiguousarray(y_obs.T).ravel(order="F")
        shape = (cfg.m, n_sym)
    else:
        raise ValueError(f"unknown waveform kind {kind!r}")

    a_data, ah_data = _masked_operator(apply_a, apply_ah, data_mask)
    y_eff = y_obs - apply_a(known_vec) if np.any(known_vec) else y_obs

    x = lsmr_solve(a_data, ah_data, y_eff, eq.lsmr_iters, eq.damping)
    for _ in range(eq.ic_iters - 1):
        decided = qam_hard_decide(x, constellation)
        resid = y_eff - a_data(decided)
        x = decided + lsmr_solve(a_data, ah_data, resid, eq.lsmr_iters, eq.damping,
                                 dot_test=False)

    full = known_vec.copy()
    full[data_mask] = x
    return full.reshape(shape, order="F")


# ---------------------------------------------------------------------------
# convolutional code
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CodecConfig:
    """Rate-1/2 feedforward convolutional code, zero-terminated."""

    constraint_length: int = 7
    generators: tuple = (0o133, 0o171)
    soft: bool = True

    def __post_init__(self):
        for g in self.generators:
            if g >> (self.constraint_length - 1) != 1:
                raise ValueError("generator degree must equal constraint_length - 1")

    @property
    def n_states(self) -> int:
        return 1 << (self.constraint_length - 1)


def _gen_taps(g: int, k: int) -> np.ndarray:
    return np.array([(g >> (k - 1 - i)) & 1 for i in range(k)], dtype=np.int64)


def conv_encode(bits, codec: CodecConfig) -> np.ndarray:
    """Encode and zero-terminate; output length 2*(len(bits) + K - 1)."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = codec.constraint_length
    out = np.empty(2 * (bits.size + k - 1), dtype=np.int64)
    for j, g in enumerate(codec.generators):
        coded = np.convolve(bits, _gen_taps(g, k)) % 2
        out[j::2] = coded
    return out


def _trellis(codec: CodecConfig):
    k = codec.constraint_length
    n_states = codec.n_states
    pred_state = np.empty((n_states, 2), dtype=np.int64)
    pred_bit = np.empty((n_states, 2), dtype=np.int64)
    pred_sign = np.empty((n_states, 2, 2))  # +1 for coded bit 0, -1 for 1
    seen = np.zeros(n_states, dtype=np.int64)
    for s in range(n_states):
        for b in range(2):
            reg = (b << (k - 1)) | s
            nxt = reg >> 1
            slot = seen[nxt]
            pred_state[nxt, slot] = s
            pred_bit[nxt, slot] = b
            for j, g in enumerate(codec.generators):
                c = bin(reg & g).count("1") & 1
                pred_sign[nxt, slot, j] = 1.0 - 2.0 * c
            seen[nxt] += 1
    return pred_state, pred_bit, pred_sign


def viterbi_decode(observations, codec: CodecConfig, soft: bool = False) -> np.ndarray:
    """Maximum-likelihood decode of a zero-terminated stream.

    ``observations`` holds 2 values per trellis step: hard bits in {0, 1},
    or LLRs when ``soft`` (positive favouring bit 0). Returns the info bits
    (termination stripped).
    """
    obs = np.asarray(observations, dtype=np.float64).ravel()
    if obs.size % 2:
        raise ValueError("observation count must be even")
    steps = obs.size // 2
    k = codec.constraint_length
    if steps < k:
        raise ValueError("stream shorter than the termination tail")
    metric_in = obs.reshape(steps, 2)
    if not soft:
        metric_in = 1.0 - 2.0 * metric_in  # bits -> +-1 correlation

    pred_state, pred_bit, pred_sign = _trellis(codec)
    n_states = codec.n_states
    metrics = np.full(n_states, -np.inf)
    metrics[0] = 0.0
    choice = np.empty((steps, n_states), dtype=np.int8)
    for t in range(steps):
        branch = pred_sign @ metric_in[t]  # (n_states, 2)
        cand = metrics[pred_state] + branch
        best = np.argmax(cand, axis=1)
        choice[t] = best
        metrics = cand[np.arange(n_states), best]

    state = 0
    bits = np.empty(steps, dtype=np.int64)
    for t in range(steps - 1, -1, -1):
        slot = choice[t, state]
        bits[t] = pred_bit[state, slot]
        state = pred_state[state, slot]
    return bits[: steps - (k - 1)]
