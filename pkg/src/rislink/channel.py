"""Doubly-selective channels for the RIS cascade.

Each reflecting element sees two independent tapped-delay-line links
(transmitter-to-element and element-to-receiver). Tap delays come from the
TDL-C power-delay profile scaled to a target delay spread and rounded to
integer sample taps; every path carries its own Jakes-model Doppler shift,
so tap gains evolve as sums of complex sinusoids. The cascade of the two
hops through element i with reflection coefficient phi_i, summed over
elements, yields the effective tap-gain process g[n, l] of length
L = L_up + L_down - 1.
"""

from dataclasses import dataclass, replace

import numpy as np

from ._kernels import synth_tap_gains, tv_conv_linear

# TDL-C power-delay profile: normalized delays (unit delay spread) and
# per-tap powers in dB, 24 NLOS taps.
TDLC_DELAYS = np.array([
    0.0000, 0.2099, 0.2219, 0.2329, 0.2176, 0.6366, 0.6448, 0.6560,
    0.6584, 0.7935, 0.8213, 0.9336, 1.2285, 1.3083, 2.1704, 2.7105,
    4.2589, 4.6003, 5.4902, 5.6077, 6.3065, 6.6374, 7.0427, 8.6523,
])
TDLC_POWERS_DB = np.array([
    -4.4, -1.2, -3.5, -5.2, -2.5, 0.0, -2.2, -3.9,
    -7.4, -7.1, -10.7, -11.1, -5.1, -6.8, -8.7, -13.2,
    -13.9, -13.9, -15.8, -17.1, -16.0, -15.7, -21.6, -22.8,
])

PROFILES = {"tdl-c": (TDLC_DELAYS, TDLC_POWERS_DB)}

RIS_STRATEGIES = ("statistical_align", "random", "all_ones")


@dataclass
class PathSet:
    """One link as a list of paths: complex gain, integer delay tap, Doppler."""

    gains: np.ndarray       # complex128, per path
    delay_taps: np.ndarray  # int64, per path
    dopplers_hz: np.ndarray  # float64, per path

    @property
    def n_taps(self) -> int:
        return int(self.delay_taps.max()) + 1


@dataclass
class RisChannel:
    """Per-element uplink/downlink path sets plus reflection coefficients."""

    uplinks: list
    downlinks: list
    phases: np.ndarray  # unit-modulus complex, one per element

    @property
    def n_elements(self) -> int:
        return len(self.uplinks)


def profile_tap_count(delay_spread_s: float, t_s: float, profile: str = "tdl-c") -> int:
    """Number of sample taps a link spans at the given delay spread."""
    delays, _ = PROFILES[profile]
    return int(np.rint(delays.max() * delay_spread_s / t_s)) + 1


def sample_jakes_dopplers(count: int, f_d_hz: float, rng) -> np.ndarray:
    """Doppler shifts f_d*cos(alpha) with alpha uniform on [0, 2*pi)."""
    if f_d_hz < 0:
        raise ValueError("max Doppler must be >= 0")
    return f_d_hz * np.cos(rng.uniform(0.0, 2.0 * np.pi, size=count))


def sample_tdl_paths(delay_spread_s: float, t_s: float, rng,
                     profile: str = "tdl-c", sinusoids_per_tap: int = 1) -> PathSet:
    """Draw one link from a tapped-delay-line profile.

    Profile delays are scaled by the delay spread and rounded to integer
    sample taps. Each profile tap spawns ``sinusoids_per_tap`` paths with
    independent complex Gaussian gains splitting the tap power; total link
    power is normalized to 1. Doppler shifts are left at zero, assign them
    with :func:`sample_jakes_dopplers`.
    """
    if delay_spread_s < 0:
        raise ValueError("delay spread must be >= 0")
    delays, powers_db = PROFILES[profile]
    taps = np.rint(delays * delay_spread_s / t_s).astype(np.int64)
    powers = 10.0 ** (powers_db / 10.0)
    powers = powers / powers.sum()
    k = int(sinusoids_per_tap)
    gains = []
    out_taps = []
    for tap, p in zip(taps, powers):
        sigma = np.sqrt(p / k / 2.0)
        g = rng.normal(0.0, sigma, size=k) + 1j * rng.normal(0.0, sigma, size=k)
        gains.append(g)
        out_taps.append(np.full(k, tap, dtype=np.int64))
    return PathSet(
        gains=np.concatenate(gains),
        delay_taps=np.concatenate(out_taps),
        dopplers_hz=np.zeros(len(taps) * k),
    )


def sample_link(delay_spread_s: float, t_s: float, f_d_hz: float, rng,
                profile: str = "tdl-c", sinusoids_per_tap: int = 1) -> PathSet:
    """TDL link with an independent Jakes Doppler per path."""
    ps = sample_tdl_paths(delay_spread_s, t_s, rng, profile, sinusoids_per_tap)
    ps.dopplers_hz = sample_jakes_dopplers(len(ps.gains), f_d_hz, rng)
    return ps


def sample_ris_channel(n_elements: int, delay_spread_s: float, t_s: float,
                       f_d_hz: float, rng, profile: str = "tdl-c",
                       sinusoids_per_tap: int = 1) -> RisChannel:
    """Independent uplink and downlink per element, coefficients all ones."""
    ups = [sample_link(delay_spread_s, t_s, f_d_hz, rng, profile, sinusoids_per_tap)
           for _ in range(n_elements)]
    downs = [sample_link(delay_spread_s, t_s, f_d_hz, rng, profile, sinusoids_per_tap)
             for _ in range(n_elements)]
    return RisChannel(ups, downs, np.ones(n_elements, dtype=np.complex128))


def _static_taps(ps: PathSet) -> np.ndarray:
    """Per-tap gain with all Doppler phases at their n=0 value."""
    out = np.zeros(ps.n_taps, dtype=np.complex128)
    np.add.at(out, ps.delay_taps, ps.gains)
    return out


def design_ris_phases(ris: RisChannel, strategy: str, rng=None) -> RisChannel:
    """Return a copy of ``ris`` with reflection coefficients set by ``strategy``.

    ``statistical_align`` rotates each element so its strongest cascade tap
    (evaluated at time 0) combines coherently across the surface; ``random``
    draws uniform phases; ``all_ones`` leaves the coefficients at 1.
    """
    q = ris.n_elements
    if strategy == "all_ones":
        phases = np.ones(q, dtype=np.complex128)
    elif strategy == "random":
        if rng is None:
            raise ValueError("random strategy needs an rng")
        phases = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=q))
    elif strategy == "statistical_align":
        phases = np.empty(q, dtype=np.complex128)
        for i in range(q):
            cascade = np.convolve(_static_taps(ris.downlinks[i]),
                                  _static_taps(ris.uplinks[i]))
            dominant = cascade[np.argmax(np.abs(cascade))]
            phases[i] = np.exp(-1j * np.angle(dominant))
    else:
        raise ValueError(f"unknown RIS strategy {strategy!r}")
    return replace(ris, phases=phases)


def cascade_ris_channel(ris: RisChannel, n_samples: int, t_s: float,
                        normalize: bool = True) -> np.ndarray:
    """Effective tap gains g[n, l] of the full RIS cascade.

    Per element the two hops are synthesized sample-by-sample from their
    path sinusoids and convolved along the tap axis (both hops evaluated at
    the same time index), then the reflection-weighted elements are summed.
    With ``normalize`` the result is scaled to unit mean total tap power
    over the frame.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    l_up = max(ps.n_taps for ps in ris.uplinks)
    l_down = max(ps.n_taps for ps in ris.downlinks)
    n_taps = l_up + l_down - 1
    g = np.zeros((n_samples, n_taps), dtype=np.complex128)
    for i in range(ris.n_elements):
        up = ris.uplinks[i]
        down = ris.downlinks[i]
        u = synth_tap_gains(up.gains, up.delay_taps, up.dopplers_hz,
                            n_samples, t_s, l_up)
        v = synth_tap_gains(down.gains, down.delay_taps, down.dopplers_hz,
                            n_samples, t_s, l_down)
        phi = ris.phases[i]
        for lv in range(l_down):
            for lu in range(l_up):
                g[:, lv + lu] += phi * v[:, lv] * u[:, lu]
    if normalize:
        power = np.mean(np.sum(np.abs(g) ** 2, axis=1))
        if power > 0:
            g /= np.sqrt(power)
    return g


def apply_channel(s, g) -> np.ndarray:
    """Time-varying convolution r[n] = sum_l g[n, l] * s[n - l], s[n<0] = 0."""
    s = np.ascontiguousarray(s, dtype=np.complex128)
    g = np.ascontiguousarray(g, dtype=np.complex128)
    if g.shape[0] != s.shape[0]:
        raise ValueError(f"tap gains cover {g.shape[0]} samples, frame has {s.shape[0]}")
    return tv_conv_linear(g, s)


def add_awgn(s, noise_var: float, rng) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise of total variance noise_var."""
    if noise_var < 0:
        raise ValueError("noise variance must be >= 0")
    s = np.asarray(s)
    if noise_var == 0.0:
        return s.copy()
    sigma = np.sqrt(noise_var / 2.0)
    return s + rng.normal(0.0, sigma, s.shape) + 1j * rng.normal(0.0, sigma, s.shape)
