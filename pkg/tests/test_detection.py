"""Detection tests: QAM mapping, LSMR, the IC equalizer, convolutional code."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rislink import channel as ch
from rislink import detection as det
from rislink import waveform as wf

DESK = wf.FrameConfig(32, 8, 8, 60e3, 4)


class TestQam:
    def test_qpsk_zero_bits(self):
        const = det.make_constellation(4)
        sym = det.qam_map([0, 0], const)
        assert_allclose(sym, [(1 + 1j) / np.sqrt(2)], atol=1e-15)

    @pytest.mark.parametrize("order", [4, 16])
    def test_roundtrip(self, order):
        const = det.make_constellation(order)
        rng = np.random.default_rng(order)
        bits = rng.integers(0, 2, size=10_000 * const.bits_per_symbol // 2 * 2)
        bits = bits[: bits.size - bits.size % const.bits_per_symbol]
        out = det.qam_demap(det.qam_map(bits, const), const)
        assert np.array_equal(out, bits)

    @pytest.mark.parametrize("order", [4, 16])
    def test_unit_energy(self, order):
        const = det.make_constellation(order)
        assert np.mean(np.abs(const.points) ** 2) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("order", [4, 16])
    def test_gray_adjacency(self, order):
        const = det.make_constellation(order)
        pts = const.points
        dmin = np.min(np.abs(pts[:, None] - pts[None, :])[~np.eye(order, dtype=bool)])
        for a in range(order):
            for b in range(order):
                if a < b and abs(pts[a] - pts[b]) < dmin * 1.01:
                    assert bin(a ^ b).count("1") == 1

    def test_bad_length(self):
        with pytest.raises(ValueError):
            det.qam_map([0, 1, 0], det.make_constellation(4))

    def test_soft_llr_signs(self):
        const = det.make_constellation(4)
        llrs = det.qam_demap(np.array([(1 + 1j) / np.sqrt(2)]), const,
                             soft=True, noise_var=0.1)
        assert np.all(llrs > 0)  # bits 00 -> both LLRs favour 0
        llrs = det.qam_demap(np.array([(-1 - 1j) / np.sqrt(2)]), const,
                             soft=True, noise_var=0.1)
        assert np.all(llrs < 0)

    def test_unsupported_order(self):
        with pytest.raises(ValueError):
            det.make_constellation(64)


class TestBer:
    def test_identical(self):
        assert det.ber([0, 1, 1], [0, 1, 1]) == 0.0

    def test_complement(self):
        assert det.ber([0, 1, 1, 0], [1, 0, 0, 1]) == 1.0

    def test_half(self):
        assert det.ber([0, 0, 1, 1], [0, 0, 0, 0]) == 0.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            det.ber([0], [0, 1])


def dense_operator(n, rng, diag_boost=4.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    a += diag_boost * np.eye(n)
    return a


class TestLsmr:
    def test_identity_single_iteration(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        x = det.lsmr_solve(lambda v: v, lambda v: v, y, iters=1)
        assert_allclose(x, y, atol=1e-12)

    def test_matches_dense_solve(self):
        # well-conditioned random system built from its SVD (cond <= 3)
        rng = np.random.default_rng(1)
        q1, _ = np.linalg.qr(rng.standard_normal((64, 64))
                             + 1j * rng.standard_normal((64, 64)))
        q2, _ = np.linalg.qr(rng.standard_normal((64, 64))
                             + 1j * rng.standard_normal((64, 64)))
        a = q1 @ np.diag(rng.uniform(1.0, 3.0, 64)) @ q2.conj().T
        y = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        x = det.lsmr_solve(lambda v: a @ v, lambda v: a.conj().T @ v, y, iters=64)
        assert np.linalg.norm(x - np.linalg.solve(a, y)) < 1e-6 * np.linalg.norm(x)

    def test_heavy_damping_shrinks_solution(self):
        rng = np.random.default_rng(2)
        a = dense_operator(16, rng)
        y = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        x = det.lsmr_solve(lambda v: a @ v, lambda v: a.conj().T @ v, y,
                           iters=32, damping=1e6)
        assert np.linalg.norm(x) < 1e-9

    def test_residual_monotone(self):
        rng = np.random.default_rng(3)
        for trial in range(5):
            a = dense_operator(32, rng, diag_boost=1.0 + trial)
            y = rng.standard_normal(32) + 1j * rng.standard_normal(32)
            _, hist = det.lsmr_solve(lambda v: a @ v, lambda v: a.conj().T @ v, y,
                                     iters=32, return_history=True)
            assert np.all(np.diff(hist) <= 1e-9)

    def test_adjoint_mismatch_detected(self):
        rng = np.random.default_rng(4)
        a = dense_operator(8, rng)
        b = dense_operator(8, rng)  # wrong adjoint
        y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        with pytest.raises(det.AdjointError):
            det.lsmr_solve(lambda v: a @ v, lambda v: b @ v, y, iters=4)


def random_gains(n, l, rng, dominant=2.0):
    g = (rng.standard_normal((n, l)) + 1j * rng.standard_normal((n, l))) / 4
    g[:, 0] += dominant
    return g


class TestFrameOperators:
    def test_otfs_adjoint_dot_test(self):
        rng = np.random.default_rng(5)
        g = random_gains(DESK.m * DESK.n, 4, rng)
        apply_a, apply_ah = det.otfs_frame_operator(g, DESK)
        x = rng.standard_normal(256) + 1j * rng.standard_normal(256)
        y = rng.standard_normal(256) + 1j * rng.standard_normal(256)
        lhs = np.vdot(y, apply_a(x))
        rhs = np.vdot(apply_ah(y), x)
        assert abs(lhs - rhs) < 1e-8 * (abs(lhs) + abs(rhs))

    def test_ofdm_adjoint_dot_test(self):
        rng = np.random.default_rng(6)
        g = random_gains(DESK.ofdm_frame_len, 4, rng)
        apply_a, apply_ah = det.ofdm_frame_operator(g, DESK)
        size = DESK.m * DESK.n_ofdm_symbols
        x = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        y = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        lhs = np.vdot(y, apply_a(x))
        rhs = np.vdot(apply_ah(y), x)
        assert abs(lhs - rhs) < 1e-8 * (abs(lhs) + abs(rhs))

    def test_otfs_operator_matches_physical_chain(self):
        # forward operator reproduces modulate -> time-varying channel -> strip
        rng = np.random.default_rng(7)
        pattern = wf.build_pilot_pattern("otfs", DESK, 70.0)
        data = det.qam_map(rng.integers(0, 2, 400), det.make_constellation(4))
        grid = wf.make_otfs_grid(DESK, pattern, data)
        tx = wf.otfs_modulate(grid, DESK)
        g_full = random_gains(tx.size, 4, rng)
        rx = ch.apply_channel(tx, g_full)[DESK.n_cp:]
        apply_a, _ = det.otfs_frame_operator(g_full[DESK.n_cp:], DESK)
        assert_allclose(apply_a(grid.symbols.ravel(order="F")), rx, atol=1e-10)


def equalize_and_count_errors(kind, cfg, g_eff, tx_syms, y, eq, const, pattern):
    grid_hat = det.lsmr_ic_equalize(y, g_eff, kind, cfg, pattern, eq, const)
    if kind == "otfs":
        data_hat = grid_hat[wf.otfs_layout(cfg) == wf.CELL_DATA]
    else:
        data_hat = grid_hat.ravel(order="F")
    decided = det.qam_hard_decide(data_hat, const)
    return int(np.sum(np.abs(decided - tx_syms) > 1e-9)), data_hat


class TestIcEqualizer:
    def test_identity_channel_exact(self):
        rng = np.random.default_rng(8)
        const = det.make_constellation(4)
        pattern = wf.build_pilot_pattern("otfs", DESK, 70.0)
        tx_syms = det.qam_map(rng.integers(0, 2, 400), const)
        grid = wf.make_otfs_grid(DESK, pattern, tx_syms)
        tx = wf.otfs_modulate(grid, DESK)
        g = np.zeros((256, 4), dtype=complex)
        g[:, 0] = 1.0
        errs, data_hat = equalize_and_count_errors(
            "otfs", DESK, g, tx_syms, tx[DESK.n_cp:],
            det.EqualizerConfig(1, 8, 0.0), const, pattern)
        assert errs == 0
        assert_allclose(data_hat, tx_syms, atol=1e-6)

    def test_static_two_tap_noiseless(self):
        rng = np.random.default_rng(9)
        const = det.make_constellation(4)
        pattern = wf.build_pilot_pattern("otfs", DESK, 70.0)
        tx_syms = det.qam_map(rng.integers(0, 2, 400), const)
        grid = wf.make_otfs_grid(DESK, pattern, tx_syms)
        tx = wf.otfs_modulate(grid, DESK)
        g_full = np.zeros((tx.size, 4), dtype=complex)
        g_full[:, 0] = 1.0
        g_full[:, 1] = 0.5j
        rx = ch.apply_channel(tx, g_full)[DESK.n_cp:]
        errs, _ = equalize_and_count_errors(
            "otfs", DESK, g_full[DESK.n_cp:], tx_syms, rx,
            det.EqualizerConfig(3, 64, 0.0), const, pattern)
        assert errs == 0

    def test_ofdm_noiseless(self):
        rng = np.random.default_rng(10)
        const = det.make_constellation(4)
        pattern = wf.build_pilot_pattern("ofdm", DESK, 70.0)
        tx_syms = det.qam_map(rng.integers(0, 2, 2 * wf.ofdm_data_capacity(DESK)), const)
        grid = wf.make_ofdm_grid(DESK, tx_syms)
        tx = wf.ofdm_modulate(grid, DESK, pattern)
        g_full = np.zeros((tx.size, 4), dtype=complex)
        g_full[:, 0] = 1.0
        g_full[:, 2] = 0.4
        rx = ch.apply_channel(tx, g_full)
        errs, _ = equalize_and_count_errors(
            "ofdm", DESK, g_full, tx_syms, rx,
            det.EqualizerConfig(3, 64, 0.0), const, pattern)
        assert errs == 0

    def test_matches_dense_pinv_oracle(self):
        # small instance: LSMR pushed to convergence equals a dense
        # pseudo-inverse equalizer run through the same cancellation schedule
        cfg = wf.FrameConfig(8, 4, 4, 60e3, 2)
        rng = np.random.default_rng(11)
        const = det.make_constellation(4)
        pattern = wf.build_pilot_pattern("otfs", cfg, 70.0)
        tx_syms = det.qam_map(rng.integers(0, 2, 2 * wf.otfs_data_capacity(cfg)), const)
        grid = wf.make_otfs_grid(cfg, pattern, tx_syms)
        tx = wf.otfs_modulate(grid, cfg)
        g_full = random_gains(tx.size, 2, rng)
        rx = ch.apply_channel(tx, g_full)[cfg.n_cp:]
        rx += 0.05 * (rng.standard_normal(rx.size) + 1j * rng.standard_normal(rx.size))
        g_eff = g_full[cfg.n_cp:]

        apply_a, _ = det.otfs_frame_operator(g_eff, cfg)
        layout = wf.otfs_layout(cfg).ravel(order="F")
        data_mask = layout == wf.CELL_DATA
        known = np.zeros(cfg.m * cfg.n, dtype=complex)
        known[np.flatnonzero(layout == wf.CELL_PILOT)] = np.sqrt(cfg.n) * pattern.amplitude
        basis = np.eye(cfg.m * cfg.n, dtype=complex)
        a_dense = np.column_stack([apply_a(basis[:, i]) for i in range(cfg.m * cfg.n)])
        a_data = a_dense[:, data_mask]
        y_eff = rx - a_dense @ known
        a_pinv = np.linalg.pinv(a_data)

        for passes in (1, 2, 3):
            x = a_pinv @ y_eff
            for _ in range(passes - 1):
                decided = det.qam_hard_decide(x, const)
                x = decided + a_pinv @ (y_eff - a_data @ decided)
            grid_hat = det.lsmr_ic_equalize(rx, g_eff, "otfs", cfg, pattern,
                                            det.EqualizerConfig(passes, 400, 0.0), const)
            lsmr_x = grid_hat.ravel(order="F")[data_mask]
            assert np.max(np.abs(lsmr_x - x)) < 1e-6

    def test_cancellation_never_hurts_noiseless(self):
        rng = np.random.default_rng(12)
        const = det.make_constellation(4)
        pattern = wf.build_pilot_pattern("otfs", DESK, 70.0)
        for seed in range(3):
            frng = np.random.default_rng(100 + seed)
            tx_syms = det.qam_map(frng.integers(0, 2, 400), const)
            grid = wf.make_otfs_grid(DESK, pattern, tx_syms)
            tx = wf.otfs_modulate(grid, DESK)
            g_full = random_gains(tx.size, 4, frng, dominant=1.2)
            rx = ch.apply_channel(tx, g_full)[DESK.n_cp:]
            errs = []
            for passes in (1, 2, 3, 4):
                e, _ = equalize_and_count_errors(
                    "otfs", DESK, g_full[DESK.n_cp:], tx_syms, rx,
                    det.EqualizerConfig(passes, 3, 0.0), const, pattern)
                errs.append(e)
            assert np.all(np.diff(errs) <= 0)


class TestConvCode:
    CODEC = det.CodecConfig()

    def test_all_zero_input(self):
        out = det.conv_encode(np.zeros(50, dtype=int), self.CODEC)
        assert out.size == 2 * (50 + 6)
        assert np.all(out == 0)

    def test_impulse_response_is_generators(self):
        out = det.conv_encode(np.array([1]), self.CODEC)
        # taps of 133 and 171 octal, MSB first
        g0 = [1, 0, 1, 1, 0, 1, 1]
        g1 = [1, 1, 1, 1, 0, 0, 1]
        assert list(out[0::2]) == g0
        assert list(out[1::2]) == g1

    def test_decode_roundtrip_hard(self):
        rng = np.random.default_rng(13)
        bits = rng.integers(0, 2, size=10_000)
        coded = det.conv_encode(bits, self.CODEC)
        decoded = det.viterbi_decode(coded, self.CODEC, soft=False)
        assert np.array_equal(decoded, bits)

    def test_decode_roundtrip_soft(self):
        rng = np.random.default_rng(14)
        bits = rng.integers(0, 2, size=2_000)
        coded = det.conv_encode(bits, self.CODEC)
        llrs = (1.0 - 2.0 * coded) * 4.0
        decoded = det.viterbi_decode(llrs, self.CODEC, soft=True)
        assert np.array_equal(decoded, bits)

    def test_corrects_sparse_errors(self):
        rng = np.random.default_rng(15)
        bits = rng.integers(0, 2, size=5_000)
        coded = det.conv_encode(bits, self.CODEC)
        corrupted = coded.copy()
        flip = rng.choice(corrupted.size, size=corrupted.size // 50, replace=False)
        corrupted[flip] ^= 1
        decoded = det.viterbi_decode(corrupted, self.CODEC, soft=False)
        assert np.array_equal(decoded, bits)

    def test_coded_beats_uncoded_at_moderate_ber(self):
        # hard-decision channel with 5% raw bit errors, 1e5 coded bits
        rng = np.random.default_rng(16)
        bits = rng.integers(0, 2, size=50_000 - 6)
        coded = det.conv_encode(bits, self.CODEC)
        noisy = coded ^ (rng.random(coded.size) < 0.05).astype(np.int64)
        pre_ber = det.ber(coded, noisy)
        assert pre_ber <= 0.08
        decoded = det.viterbi_decode(noisy, self.CODEC, soft=False)
        post_ber = det.ber(bits, decoded)
        assert post_ber < pre_ber

    def test_odd_length_raises(self):
        with pytest.raises(ValueError):
            det.viterbi_decode(np.zeros(13), self.CODEC)

    def test_bad_generator_degree(self):
        with pytest.raises(ValueError):
            det.CodecConfig(generators=(0o33, 0o171))
