"""Complex transform kernels shared by the OTFS and OFDM chains.

All DFTs here are unitary (1/sqrt(N) scaling in both directions), so every
transform preserves the 2-norm. The delay-Doppler phase matrices at the
bottom of the module are dense test oracles and refuse to build anything
bigger than 4096 x 4096.
"""

import numpy as np
from scipy.special import j0 as _scipy_j0

_DENSE_LIMIT = 4096


def dft(v, inverse: bool = False) -> np.ndarray:
    """Unitary DFT (or inverse DFT) of a 1-D vector."""
    v = np.asarray(v, dtype=np.complex128)
    if v.size == 0:
        raise ValueError("dft of an empty vector")
    if inverse:
        return np.fft.ifft(v, norm="ortho")
    return np.fft.fft(v, norm="ortho")


def dft_matrix(n: int) -> np.ndarray:
    """Dense n-point unitary DFT matrix, entries exp(-2j*pi*l*k/n)/sqrt(n)."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def bessel_j0(x):
    """Zeroth-order Bessel function of the first kind, J0(x)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.isnan(x)):
        raise ValueError("bessel_j0: NaN input")
    out = _scipy_j0(x)
    return float(out) if out.ndim == 0 else out


def doppler_block_transform(frame, m: int, n: int, inverse: bool = False) -> np.ndarray:
    """Apply the n-point unitary DFT across length-m blocks of a frame.

    The frame is read as n consecutive blocks of m samples; sample
    ``frame[k*m + i]`` sits at intra-block offset i of block k. The DFT
    runs over the block index k at fixed offset i, which is the action of
    the Kronecker-structured operator (DFT_n x I_m) without materializing
    it. ``inverse=True`` applies the Hermitian (IDFT) version.
    """
    frame = np.asarray(frame, dtype=np.complex128)
    if frame.size != m * n:
        raise ValueError(f"frame length {frame.size} != m*n = {m * n}")
    blocks = frame.reshape(n, m)
    if inverse:
        out = np.fft.ifft(blocks, axis=0, norm="ortho")
    else:
        out = np.fft.fft(blocks, axis=0, norm="ortho")
    return out.reshape(m * n)


def dd_phase_matrix(theta, m: int, n: int) -> np.ndarray:
    """Delay-Doppler domain matrix of a per-sample phase rotation (fast path).

    For a sample-wise rotation diag(exp(j*theta)) acting on a delay-time
    frame, the delay-Doppler representation is block circulant with
    diagonal m x m blocks. Block (p, q) carries on its diagonal the
    coefficients

        c[(p - q) mod n, i] = (1/n) * sum_k exp(j*theta[i + k*m])
                                            * exp(-2j*pi*(p-q)*k/n),

    computed here with one FFT per intra-block offset instead of the two
    dense Kronecker-product multiplies.
    """
    mn = _check_dense_size(theta, m, n)
    psi = np.exp(1j * np.asarray(theta[:mn], dtype=np.float64)).reshape(n, m)
    coef = np.fft.fft(psi, axis=0) / n
    out = np.zeros((mn, mn), dtype=np.complex128)
    idx = np.arange(m)
    for p in range(n):
        for q in range(n):
            out[p * m + idx, q * m + idx] = coef[(p - q) % n]
    return out


def dd_phase_matrix_dense(theta, m: int, n: int) -> np.ndarray:
    """Dense oracle for :func:`dd_phase_matrix` via explicit Kronecker products."""
    mn = _check_dense_size(theta, m, n)
    fwd = np.kron(dft_matrix(n), np.eye(m))
    return fwd @ np.diag(np.exp(1j * np.asarray(theta[:mn]))) @ fwd.conj().T


def _check_dense_size(theta, m: int, n: int) -> int:
    mn = m * n
    if mn > _DENSE_LIMIT:
        raise ValueError(f"dense phase matrix limited to {_DENSE_LIMIT} samples, got {mn}")
    if len(theta) < mn:
        raise ValueError(f"phase trace too short: {len(theta)} < {mn}")
    return mn
