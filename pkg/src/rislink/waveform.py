"""OTFS and OFDM modulation chains, frame budgets and pilot layouts.

OTFS places QAM data on an M x N delay-Doppler grid, transforms to delay-
time with an inverse DFT along the Doppler axis, and prepends one reduced
cyclic prefix per frame. OFDM fills an M x N' time-frequency grid, takes a
per-symbol IDFT, prepends a CP to each symbol and appends a time-domain
impulse-pilot segment (an impulse flanked by L-1 zero guards on each side)
after every symbol. N' is chosen so both frames occupy the same sample
budget once CP and pilot overheads are counted.

Impulse pilots live in the delay-time domain for both waveforms: the OTFS
pilot is a delay-Doppler cell at (0, 0) of amplitude sqrt(N * pilot_power),
which lands as one amplitude-sqrt(pilot_power) sample at the head of every
time block; the OFDM pilot is the centre of each inter-symbol segment.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import doppler_block_transform

CELL_DATA = 0
CELL_PILOT = 1
CELL_GUARD = 2


@dataclass(frozen=True)
class FrameConfig:
    """Frame geometry: grid size, CP length, subcarrier spacing, channel budget.

    ``l_taps`` is the cascade channel length the frame is provisioned for;
    it sizes pilot guards and must satisfy n_cp >= l_taps - 1.
    """

    m: int
    n: int
    n_cp: int
    delta_f_hz: float
    l_taps: int

    def __post_init__(self):
        if min(self.m, self.n, self.l_taps) < 1 or self.n_cp < 0:
            raise ValueError("frame dimensions must be positive")
        if self.delta_f_hz <= 0:
            raise ValueError("subcarrier spacing must be > 0")
        if self.n_cp < self.l_taps - 1:
            raise ValueError("cyclic prefix shorter than channel: n_cp < l_taps - 1")
        if self.n_cp > self.m:
            raise ValueError("cyclic prefix longer than one symbol: n_cp > m")

    @property
    def t_s(self) -> float:
        return 1.0 / (self.m * self.delta_f_hz)

    @property
    def otfs_frame_len(self) -> int:
        return self.m * self.n + self.n_cp

    @property
    def ofdm_symbol_stride(self) -> int:
        # CP + symbol + pilot segment
        return self.m + self.n_cp + 2 * self.l_taps - 1

    @property
    def n_ofdm_symbols(self) -> int:
        return ofdm_symbol_count(self.m, self.n, self.n_cp, self.l_taps)

    @property
    def ofdm_frame_len(self) -> int:
        return self.n_ofdm_symbols * self.ofdm_symbol_stride

    def frame_len(self, kind: str) -> int:
        return self.otfs_frame_len if kind == "otfs" else self.ofdm_frame_len


def ofdm_symbol_count(m: int, n: int, n_cp: int, l_taps: int) -> int:
    """Symbols N' that keep the OFDM frame budget matched to the OTFS frame."""
    total = m * n + n_cp
    stride = m + n_cp + 2 * l_taps - 1
    return -(-total // stride)


@dataclass(frozen=True)
class PilotPattern:
    """Impulse-pilot placement in the estimation sample axis.

    ``pilot_indices`` are the delay-time sample positions of the pilot
    impulses (for OTFS: within the CP-stripped frame; for OFDM: within the
    full serial frame). ``guard_len`` zeros flank each pilot on each side.
    """

    kind: str
    pilot_indices: np.ndarray
    guard_len: int
    amplitude: float
    l_taps: int

    @property
    def n_pilots(self) -> int:
        return len(self.pilot_indices)


def build_pilot_pattern(kind: str, cfg: FrameConfig, pilot_power: float) -> PilotPattern:
    """Pilot positions and amplitude for one waveform.

    OTFS: one pilot at the head of each of the N time blocks, realized as a
    delay-Doppler pilot at (0, 0); rows 1..L-1 and M-L+1..M-1 of the grid
    are guards. OFDM: one pilot in the segment after each symbol.
    """
    if pilot_power <= 0:
        raise ValueError("pilot power must be > 0")
    amp = float(np.sqrt(pilot_power))
    if kind == "otfs":
        if cfg.m < 2 * (2 * cfg.l_taps - 1):
            raise ValueError("delay axis too short for pilot plus guards: "
                             f"m={cfg.m} < {2 * (2 * cfg.l_taps - 1)}")
        idx = np.arange(cfg.n, dtype=np.int64) * cfg.m
    elif kind == "ofdm":
        stride = cfg.ofdm_symbol_stride
        base = cfg.n_cp + cfg.m + cfg.l_taps - 1
        idx = base + stride * np.arange(cfg.n_ofdm_symbols, dtype=np.int64)
    else:
        raise ValueError(f"unknown waveform kind {kind!r}")
    return PilotPattern(kind, idx, cfg.l_taps - 1, amp, cfg.l_taps)


# ---------------------------------------------------------------------------
# grid construction
# ---------------------------------------------------------------------------

@dataclass
class DelayDopplerGrid:
    """M x N delay-Doppler symbols plus per-cell data/pilot/guard tags."""

    m: int
    n: int
    symbols: np.ndarray
    layout: np.ndarray


@dataclass
class TimeFrequencyGrid:
    """M x N' subcarrier-by-symbol grid; every cell carries data."""

    m: int
    n_symbols: int
    symbols: np.ndarray
    layout: np.ndarray


def otfs_layout(cfg: FrameConfig) -> np.ndarray:
    """Cell tags of the OTFS grid: pilot at (0, 0), guard rows around it."""
    layout = np.full((cfg.m, cfg.n), CELL_DATA, dtype=np.uint8)
    layout[0, :] = CELL_GUARD
    layout[0, 0] = CELL_PILOT
    g = cfg.l_taps - 1
    if g > 0:
        layout[1:1 + g, :] = CELL_GUARD
        layout[cfg.m - g:, :] = CELL_GUARD
    return layout


def otfs_data_capacity(cfg: FrameConfig) -> int:
    return (cfg.m - (2 * cfg.l_taps - 1)) * cfg.n


def ofdm_data_capacity(cfg: FrameConfig) -> int:
    return cfg.m * cfg.n_ofdm_symbols


def make_otfs_grid(cfg: FrameConfig, pattern: PilotPattern, data) -> DelayDopplerGrid:
    """Fill the delay-Doppler grid with data symbols, pilot and guards."""
    data = np.asarray(data, dtype=np.complex128)
    layout = otfs_layout(cfg)
    if data.size != int(np.sum(layout == CELL_DATA)):
        raise ValueError(f"expected {otfs_data_capacity(cfg)} data symbols, got {data.size}")
    symbols = np.zeros((cfg.m, cfg.n), dtype=np.complex128)
    symbols[layout == CELL_DATA] = data
    symbols[0, 0] = np.sqrt(cfg.n) * pattern.amplitude
    return DelayDopplerGrid(cfg.m, cfg.n, symbols, layout)


def make_ofdm_grid(cfg: FrameConfig, data) -> TimeFrequencyGrid:
    """Fill the time-frequency grid column-by-column with data symbols."""
    data = np.asarray(data, dtype=np.complex128)
    n_sym = cfg.n_ofdm_symbols
    if data.size != cfg.m * n_sym:
        raise ValueError(f"expected {cfg.m * n_sym} data symbols, got {data.size}")
    symbols = data.reshape((cfg.m, n_sym), order="F")
    layout = np.full((cfg.m, n_sym), CELL_DATA, dtype=np.uint8)
    return TimeFrequencyGrid(cfg.m, n_sym, symbols, layout)


# ---------------------------------------------------------------------------
# modulation / demodulation
# ---------------------------------------------------------------------------

def otfs_modulate(grid: DelayDopplerGrid, cfg: FrameConfig) -> np.ndarray:
    """Delay-Doppler grid -> CP-prefixed delay-time frame of MN + n_cp samples."""
    if (grid.m, grid.n) != (cfg.m, cfg.n):
        raise ValueError("grid dimensions do not match the frame config")
    x = grid.symbols.ravel(order="F")
    s = doppler_block_transform(x, cfg.m, cfg.n, inverse=True)
    if cfg.n_cp == 0:
        return s
    return np.concatenate([s[-cfg.n_cp:], s])


def otfs_demodulate(samples, cfg: FrameConfig) -> np.ndarray:
    """CP-prefixed delay-time frame -> M x N delay-Doppler samples."""
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.size != cfg.otfs_frame_len:
        raise ValueError(f"expected {cfg.otfs_frame_len} samples, got {samples.size}")
    y = doppler_block_transform(samples[cfg.n_cp:], cfg.m, cfg.n, inverse=False)
    return y.reshape((cfg.m, cfg.n), order="F")


def ofdm_modulate(grid: TimeFrequencyGrid, cfg: FrameConfig,
                  pattern: PilotPattern) -> np.ndarray:
    """Time-frequency grid -> serial frame of N' * (M + n_cp + 2L - 1) samples."""
    if (grid.m, grid.n_symbols) != (cfg.m, cfg.n_ofdm_symbols):
        raise ValueError("grid dimensions do not match the frame config")
    if pattern.kind != "ofdm":
        raise ValueError("need an ofdm pilot pattern")
    segment = np.zeros(2 * cfg.l_taps - 1, dtype=np.complex128)
    segment[cfg.l_taps - 1] = pattern.amplitude
    blocks = []
    for q in range(grid.n_symbols):
        b = np.fft.ifft(grid.symbols[:, q], norm="ortho")
        blocks.append(b[cfg.m - cfg.n_cp:])
        blocks.append(b)
        blocks.append(segment)
    return np.concatenate(blocks)


def ofdm_demodulate(samples, cfg: FrameConfig, pattern: PilotPattern) -> np.ndarray:
    """Serial OFDM frame -> M x N' subcarrier samples (pilot segments skipped)."""
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.size != cfg.ofdm_frame_len:
        raise ValueError(f"expected {cfg.ofdm_frame_len} samples, got {samples.size}")
    stride = cfg.ofdm_symbol_stride
    out = np.empty((cfg.m, cfg.n_ofdm_symbols), dtype=np.complex128)
    for q in range(cfg.n_ofdm_symbols):
        start = q * stride + cfg.n_cp
        out[:, q] = np.fft.fft(samples[start:start + cfg.m], norm="ortho")
    return out


def ofdm_symbol_sample_indices(cfg: FrameConfig) -> np.ndarray:
    """Frame indices of the post-CP symbol samples, shape (N', M)."""
    stride = cfg.ofdm_symbol_stride
    starts = cfg.n_cp + stride * np.arange(cfg.n_ofdm_symbols)
    return starts[:, None] + np.arange(cfg.m)[None, :]
