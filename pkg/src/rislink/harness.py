"""Seeded Monte Carlo execution of full link simulations.

A :class:`SimConfig` describes one operating point: waveform, frame
geometry, RIS channel, oscillator, estimator, equalizer, coding and SNR.
:func:`run_frame` executes a single frame deterministically from
(config, frame_seed); :func:`run_point` averages a batch of frames with
per-frame seeds ``base_seed + index``, optionally across a process pool
(results are identical for any worker count); :func:`run_sweep` walks the
Cartesian product of one or more config axes. Records serialize to CSV or
JSONL with a deterministic column order.

Configs load from TOML (or JSON with the same structure); see
``configs/desk.toml`` for the reference desk-scale profile.
"""

import hashlib
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel as ch
from . import detection as det
from . import estimation as est
from . import phase_noise as pn
from . import waveform as wf

SPEED_OF_LIGHT = 299792458.0

ESTIMATORS = ("proposed", "bem", "spline", "perfect_csi")
WAVEFORMS = ("otfs", "ofdm")

_CHUNK = 25  # frames per worker task; fixed so results don't depend on pool size


class ConfigError(ValueError):
    """Invalid simulation configuration."""


@dataclass(frozen=True)
class ChannelConfig:
    profile: str = "tdl-c"
    delay_spread_s: float = 80e-9
    doppler_hz: float = 0.0
    velocity_kmh: float = None
    carrier_hz: float = None
    q_elements: int = 8
    ris_strategy: str = "statistical_align"
    sinusoids_per_tap: int = 1

    def max_doppler_hz(self) -> float:
        if self.velocity_kmh is not None:
            if self.carrier_hz is None:
                raise ConfigError("velocity_kmh needs carrier_hz")
            return self.velocity_kmh / 3.6 * self.carrier_hz / SPEED_OF_LIGHT
        return self.doppler_hz


@dataclass(frozen=True)
class OscConfig:
    kind: str = "none"  # none | fro | cpll
    beta_pn_hz: float = 0.0
    f_pll_hz: float = 0.0

    def model(self, t_s: float):
        if self.kind == "none":
            return None
        return pn.OscillatorModel(self.kind, self.beta_pn_hz, t_s, self.f_pll_hz)


@dataclass(frozen=True)
class CodingConfig:
    enabled: bool = False
    constraint_length: int = 7
    generators: tuple = (0o133, 0o171)
    soft: bool = True

    def codec(self) -> det.CodecConfig:
        return det.CodecConfig(self.constraint_length, tuple(self.generators), self.soft)


@dataclass(frozen=True)
class SimConfig:
    waveform: str = "otfs"
    frame: wf.FrameConfig = field(default_factory=lambda: wf.FrameConfig(32, 8, 8, 60e3, 4))
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    osc: OscConfig = field(default_factory=OscConfig)
    estimator: str = "proposed"
    k_over: int = 1
    equalizer: det.EqualizerConfig = field(default_factory=det.EqualizerConfig)
    coding: CodingConfig = field(default_factory=CodingConfig)
    qam_order: int = 4
    snr_db: float = 10.0
    pilot_boost: float = 10.0  # pilot power = boost * (2L - 1) * data power
    frames: int = 1
    base_seed: int = 0

    def pilot_power(self) -> float:
        return self.pilot_boost * (2 * self.frame.l_taps - 1)

    def noise_var(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)

    def validate(self) -> "SimConfig":
        if self.waveform not in WAVEFORMS:
            raise ConfigError(f"waveform must be one of {WAVEFORMS}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if self.qam_order not in (4, 16):
            raise ConfigError("qam_order must be 4 or 16")
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")
        if self.channel.ris_strategy not in ch.RIS_STRATEGIES:
            raise ConfigError(f"ris_strategy must be one of {ch.RIS_STRATEGIES}")
        if self.channel.q_elements < 1:
            raise ConfigError("q_elements must be >= 1")
        if self.osc.kind not in ("none", pn.FRO, pn.CPLL):
            raise ConfigError("oscillator kind must be none, fro or cpll")
        if self.osc.kind == pn.CPLL and self.osc.f_pll_hz <= 0:
            raise ConfigError("cpll oscillator needs f_pll_hz > 0")
        self.channel.max_doppler_hz()
        if self.channel.profile not in ch.PROFILES:
            raise ConfigError(f"unknown channel profile {self.channel.profile!r}")
        hop = ch.profile_tap_count(self.channel.delay_spread_s, self.frame.t_s,
                                   self.channel.profile)
        cascade = 2 * hop - 1
        if cascade > self.frame.l_taps:
            raise ConfigError(
                f"cascade channel spans {cascade} taps, frame budget is {self.frame.l_taps}")
        try:
            wf.build_pilot_pattern(self.waveform, self.frame, self.pilot_power())
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.coding.enabled:
            bits = self.data_bit_capacity()
            k = self.coding.constraint_length
            if bits % 2 or bits // 2 <= k - 1:
                raise ConfigError("frame too small for the coded chain")
        return self

    def data_capacity(self) -> int:
        if self.waveform == "otfs":
            return wf.otfs_data_capacity(self.frame)
        return wf.ofdm_data_capacity(self.frame)

    def data_bit_capacity(self) -> int:
        return self.data_capacity() * (2 if self.qam_order == 4 else 4)


# ---------------------------------------------------------------------------
# config loading
# ---------------------------------------------------------------------------

def config_from_dict(raw: dict) -> SimConfig:
    raw = dict(raw)

    def section(name):
        value = raw.pop(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"section [{name}] must be a table")
        return value

    try:
        frame_raw = section("frame")
        frame = wf.FrameConfig(**frame_raw) if frame_raw else wf.FrameConfig(32, 8, 8, 60e3, 4)
        chan = ChannelConfig(**section("channel"))
        osc = OscConfig(**section("oscillator"))
        eq = det.EqualizerConfig(**section("equalizer"))
        coding_raw = section("coding")
        if "generators" in coding_raw:
            coding_raw["generators"] = tuple(coding_raw["generators"])
        coding = CodingConfig(**coding_raw)
        run = section("run")
        cfg = SimConfig(frame=frame, channel=chan, osc=osc, equalizer=eq,
                        coding=coding, **run, **raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path) -> SimConfig:
    path = str(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if path.endswith(".json"):
        raw = json.loads(blob.decode())
    else:
        try:
            import tomllib as toml
        except ImportError:
            import tomli as toml
        raw = toml.loads(blob.decode())
    return config_from_dict(raw)


_OVERRIDE_SECTIONS = {
    "frame": ("frame", wf.FrameConfig),
    "channel": ("channel", ChannelConfig),
    "oscillator": ("osc", OscConfig),
    "equalizer": ("equalizer", det.EqualizerConfig),
    "coding": ("coding", CodingConfig),
}


def apply_override(cfg: SimConfig, key: str, value: str) -> SimConfig:
    """Apply one ``section.field=value`` (or top-level ``field=value``) override."""
    parts = key.split(".")
    try:
        if len(parts) == 1:
            current = getattr(cfg, parts[0])
            return replace(cfg, **{parts[0]: _coerce(value, current)}).validate()
        if len(parts) == 2 and parts[0] in _OVERRIDE_SECTIONS:
            attr, _ = _OVERRIDE_SECTIONS[parts[0]]
            sub = getattr(cfg, attr)
            current = getattr(sub, parts[1])
            sub = replace(sub, **{parts[1]: _coerce(value, current)})
            return replace(cfg, **{attr: sub}).validate()
    except (AttributeError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad override {key}={value}: {exc}") from exc
    raise ConfigError(f"unknown override key {key!r}")


def _coerce(text: str, current):
    if isinstance(current, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(text)
    if isinstance(current, float) or current is None:
        return float(text)
    if isinstance(current, tuple):
        return tuple(int(v, 0) for v in text.split(","))
    return text


# ---------------------------------------------------------------------------
# single frame
# ---------------------------------------------------------------------------

@dataclass
class FrameResult:
    nmse: float
    bit_errors: int
    bit_count: int
    coded_errors: int
    coded_count: int


_BANK_CACHE: dict = {}


def _wiener_bank(model: est.CorrelationModel, pilots, n_samples, noise_var,
                 pilot_power) -> est.WienerFilterBank:
    key = (model.cache_key(), tuple(int(p) for p in pilots), int(n_samples),
           float(noise_var), float(pilot_power))
    bank = _BANK_CACHE.get(key)
    if bank is None:
        bank = est.build_wiener(model, pilots, n_samples, noise_var, pilot_power)
        _BANK_CACHE[key] = bank
    return bank


def run_frame(cfg: SimConfig, frame_seed: int) -> FrameResult:
    """Simulate one frame end to end; deterministic in (cfg, frame_seed)."""
    rng = np.random.default_rng(frame_seed)
    frame = cfg.frame
    kind = cfg.waveform
    t_s = frame.t_s
    l_taps = frame.l_taps
    noise_var = cfg.noise_var()
    constellation = det.make_constellation(cfg.qam_order)
    pattern = wf.build_pilot_pattern(kind, frame, cfg.pilot_power())

    # bits -> (coded) -> interleaved -> symbols
    n_cells = cfg.data_capacity()
    n_bits = n_cells * constellation.bits_per_symbol
    if cfg.coding.enabled:
        codec = cfg.coding.codec()
        info_len = n_bits // 2 - (codec.constraint_length - 1)
        info_bits = rng.integers(0, 2, size=info_len)
        coded = det.conv_encode(info_bits, codec)
        perm = rng.permutation(n_bits)
        tx_bits = coded[perm]
    else:
        info_bits = None
        perm = None
        tx_bits = rng.integers(0, 2, size=n_bits)
    data_syms = det.qam_map(tx_bits, constellation)

    if kind == "otfs":
        grid = wf.make_otfs_grid(frame, pattern, data_syms)
        tx = wf.otfs_modulate(grid, frame)
    else:
        grid = wf.make_ofdm_grid(frame, data_syms)
        tx = wf.ofdm_modulate(grid, frame, pattern)
    frame_len = tx.size

    # channel + phase noise + AWGN
    f_d = cfg.channel.max_doppler_hz()
    ris = ch.sample_ris_channel(cfg.channel.q_elements, cfg.channel.delay_spread_s,
                                t_s, f_d, rng, cfg.channel.profile,
                                cfg.channel.sinusoids_per_tap)
    ris = ch.design_ris_phases(ris, cfg.channel.ris_strategy, rng)
    g_phys = ch.cascade_ris_channel(ris, frame_len, t_s)
    if g_phys.shape[1] < l_taps:
        g_phys = np.pad(g_phys, ((0, 0), (0, l_taps - g_phys.shape[1])))

    osc = cfg.osc.model(t_s)
    theta = pn.sample_trace(osc, frame_len, rng) if osc is not None else np.zeros(frame_len)
    rx = ch.apply_channel(tx, g_phys)
    rx = pn.apply_phase(rx, theta)
    rx = ch.add_awgn(rx, noise_var, rng)

    # estimation axis: CP-stripped frame for OTFS, full serial frame for OFDM
    if kind == "otfs":
        y_est = rx[frame.n_cp:]
        offset = frame.n_cp
    else:
        y_est = rx
        offset = 0
    n_est = y_est.size
    g_true = np.exp(1j * theta[offset:, None]) * g_phys[offset:]

    if cfg.estimator == "perfect_csi":
        g_hat = g_true
        frame_nmse = 0.0
        snap = None
    else:
        snap = est.snapshot_estimate(y_est, pattern, l_taps, noise_var)
        if cfg.estimator == "proposed":
            model = est.CorrelationModel(f_d, osc, t_s)
            bank = _wiener_bank(model, pattern.pilot_indices, n_est, noise_var,
                                cfg.pilot_power())
            g_hat = est.apply_wiener(bank, snap)
        elif cfg.estimator == "bem":
            g_hat = est.bem_estimate(snap, f_d, cfg.osc.beta_pn_hz, t_s,
                                     cfg.k_over, n_est)
        else:
            g_hat = est.spline_estimate(snap, n_est)
        frame_nmse = est.nmse(g_hat, g_true)

    grid_hat = det.lsmr_ic_equalize(y_est, g_hat, kind, frame, pattern,
                                    cfg.equalizer, constellation)
    if kind == "otfs":
        data_hat = grid_hat[wf.otfs_layout(frame) == wf.CELL_DATA]
    else:
        data_hat = grid_hat.ravel(order="F")

    rx_bits = det.qam_demap(data_hat, constellation)
    bit_errors = int(np.sum(rx_bits != tx_bits))
    if cfg.coding.enabled:
        post_eq_var = _pilot_residual_noise_var(snap, cfg) if snap is not None else noise_var
        llrs = det.qam_demap(data_hat, constellation, soft=True, noise_var=post_eq_var)
        deint = np.empty_like(llrs)
        deint[perm] = llrs
        decoded = det.viterbi_decode(deint if codec.soft else (deint < 0).astype(np.int64),
                                     codec, soft=codec.soft)
        coded_errors = int(np.sum(decoded != info_bits))
        coded_count = info_bits.size
    else:
        coded_errors = 0
        coded_count = 0
    return FrameResult(frame_nmse, bit_errors, n_bits, coded_errors, coded_count)


def _pilot_residual_noise_var(snap: est.SnapshotEstimate, cfg: SimConfig) -> float:
    """Noise-power estimate from snapshot rows the threshold declared empty."""
    inactive = ~snap.active
    if np.any(inactive):
        resid = float(np.mean(snap.row_power[inactive])) * cfg.pilot_power()
        if resid > 0:
            return resid
    return cfg.noise_var()


# ---------------------------------------------------------------------------
# batched execution
# ---------------------------------------------------------------------------

@dataclass
class MetricsRecord:
    config: dict
    nmse_mean: float
    ber: float
    coded_ber: float
    frames_run: int
    wall_time_s: float
    seed_digest: str


def flatten_config(cfg: SimConfig) -> dict:
    """Deterministic flat view of a config for record emission."""
    c, o, f, e, cod = cfg.channel, cfg.osc, cfg.frame, cfg.equalizer, cfg.coding
    return {
        "waveform": cfg.waveform,
        "frame.m": f.m, "frame.n": f.n, "frame.n_cp": f.n_cp,
        "frame.delta_f_hz": f.delta_f_hz, "frame.l_taps": f.l_taps,
        "channel.profile": c.profile,
        "channel.delay_spread_s": c.delay_spread_s,
        "channel.doppler_hz": c.max_doppler_hz(),
        "channel.q_elements": c.q_elements,
        "channel.ris_strategy": c.ris_strategy,
        "channel.sinusoids_per_tap": c.sinusoids_per_tap,
        "oscillator.kind": o.kind,
        "oscillator.beta_pn_hz": o.beta_pn_hz,
        "oscillator.f_pll_hz": o.f_pll_hz,
        "estimator": cfg.estimator,
        "k_over": cfg.k_over,
        "equalizer.ic_iters": e.ic_iters,
        "equalizer.lsmr_iters": e.lsmr_iters,
        "equalizer.damping": e.damping,
        "coding.enabled": cod.enabled,
        "coding.soft": cod.soft,
        "qam_order": cfg.qam_order,
        "snr_db": cfg.snr_db,
        "pilot_boost": cfg.pilot_boost,
        "frames": cfg.frames,
        "base_seed": cfg.base_seed,
    }


METRIC_COLUMNS = ("nmse_mean", "ber", "coded_ber", "frames_run", "seed_digest")


def _run_chunk(cfg: SimConfig, seeds) -> list:
    out = []
    for s in seeds:
        r = run_frame(cfg, s)
        out.append((r.nmse, r.bit_errors, r.bit_count, r.coded_errors, r.coded_count))
    return out


def default_workers() -> int:
    env = os.environ.get("SIM_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_point(cfg: SimConfig, workers: int = 1) -> MetricsRecord:
    """Run ``cfg.frames`` frames and aggregate; identical for any worker count."""
    cfg.validate()
    t0 = time.perf_counter()
    seeds = [cfg.base_seed + i for i in range(cfg.frames)]
    chunks = [seeds[i:i + _CHUNK] for i in range(0, len(seeds), _CHUNK)]
    results = []
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, itertools.repeat(cfg), chunks):
                results.extend(part)
    else:
        for chunk in chunks:
            results.extend(_run_chunk(cfg, chunk))
    arr = np.asarray(results, dtype=np.float64)
    errors, bits = arr[:, 1].sum(), arr[:, 2].sum()
    cerrors, cbits = arr[:, 3].sum(), arr[:, 4].sum()
    digest = hashlib.sha256(
        b"".join(int(s).to_bytes(8, "little") for s in seeds)).hexdigest()[:16]
    return MetricsRecord(
        config=flatten_config(cfg),
        nmse_mean=float(arr[:, 0].mean()),
        ber=float(errors / bits),
        coded_ber=float(cerrors / cbits) if cbits else float("nan"),
        frames_run=len(seeds),
        wall_time_s=time.perf_counter() - t0,
        seed_digest=digest,
    )


# axis name -> config mutator
def _set_axis(cfg: SimConfig, name: str, value) -> SimConfig:
    if name in ("snr", "snr_db"):
        return replace(cfg, snr_db=float(value))
    if name in ("beta_pn", "beta_pn_hz"):
        return replace(cfg, osc=replace(cfg.osc, beta_pn_hz=float(value)))
    if name in ("q", "q_elements"):
        return replace(cfg, channel=replace(cfg.channel, q_elements=int(value)))
    if name == "estimator":
        return replace(cfg, estimator=str(value))
    if name == "waveform":
        return replace(cfg, waveform=str(value))
    if name == "qam_order":
        return replace(cfg, qam_order=int(value))
    if name == "frames":
        return replace(cfg, frames=int(value))
    return apply_override(cfg, name, str(value))


def run_sweep(cfg: SimConfig, axes: dict, workers: int = 1) -> list:
    """Cartesian product of the axis values, one record per point."""
    if not axes or any(len(v) == 0 for v in axes.values()):
        raise ConfigError("sweep needs at least one non-empty axis")
    names = list(axes)
    records = []
    for combo in itertools.product(*(axes[n] for n in names)):
        point = cfg
        for name, value in zip(names, combo):
            point = _set_axis(point, name, value)
        records.append(run_point(point.validate(), workers))
    return records


# ---------------------------------------------------------------------------
# result emission
# ---------------------------------------------------------------------------

def record_row(rec: MetricsRecord, include_timing: bool = False) -> dict:
    row = dict(rec.config)
    row["nmse_mean"] = rec.nmse_mean
    row["ber"] = rec.ber
    row["coded_ber"] = rec.coded_ber
    row["frames_run"] = rec.frames_run
    row["seed_digest"] = rec.seed_digest
    if include_timing:
        row["wall_time_s"] = rec.wall_time_s
    return row


def emit_results(records, fmt: str, path, include_timing: bool = False) -> None:
    """Write records as CSV or JSONL with a fixed column order.

    Timing is excluded unless asked for, so identical (config, seed) runs
    produce byte-identical files regardless of worker count.
    """
    rows = [record_row(r, include_timing) for r in records]
    if fmt == "csv":
        import csv
        header = list(rows[0]) if rows else _default_header(include_timing)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=header)
            writer.writeheader()
            writer.writerows(rows)
    elif fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _default_header(include_timing: bool) -> list:
    cols = list(flatten_config(SimConfig())) + list(METRIC_COLUMNS)
    if include_timing:
        cols.append("wall_time_s")
    return cols


def read_records(path, fmt: str) -> list:
    """Parse a results file back into row dictionaries."""
    if fmt == "jsonl":
        with open(path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]
    import csv
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
