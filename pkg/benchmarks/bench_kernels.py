"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run as:  python benchmarks/bench_kernels.py

Times the four hot kernels on desk-scale and full-scale shapes, then times
one simulated frame per backend in a subprocess (the backend is chosen at
import via RISLINK_NUMBA, so a fresh interpreter is needed per mode).
"""

import os
import subprocess
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from rislink import _backend, _kernels as K  # noqa: E402


def timeit(fn, *args, repeat=50):
    fn(*args)  # warm-up / JIT
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def bench_kernels():
    rng = np.random.default_rng(0)
    shapes = {"desk (264 x 4)": (264, 4), "full (4138 x 21)": (4138, 21)}
    pairs = [
        ("tv_conv_linear", K.tv_conv_linear_np,
         getattr(K, "tv_conv_linear_nb", None)),
        ("tv_conv_circular", K.tv_conv_circular_np,
         getattr(K, "tv_conv_circular_nb", None)),
        ("tv_conv_circular_adj", K.tv_conv_circular_adj_np,
         getattr(K, "tv_conv_circular_adj_nb", None)),
    ]
    print(f"{'kernel':<28}{'shape':<20}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for label, (n, l) in shapes.items():
        g = rng.standard_normal((n, l)) + 1j * rng.standard_normal((n, l))
        s = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        for name, np_fn, nb_fn in pairs:
            t_np = timeit(np_fn, g, s)
            if nb_fn is None:
                print(f"{name:<28}{label:<20}{t_np * 1e6:>10.1f}us{'-':>12}{'-':>10}")
                continue
            t_nb = timeit(nb_fn, g, s)
            print(f"{name:<28}{label:<20}{t_np * 1e6:>10.1f}us"
                  f"{t_nb * 1e6:>10.1f}us{t_np / t_nb:>9.1f}x")
        p = 48
        gains = rng.standard_normal(p) + 1j * rng.standard_normal(p)
        taps = rng.integers(0, l, p).astype(np.int64)
        dops = rng.uniform(-3000, 3000, p)
        t_np = timeit(K.synth_tap_gains_np, gains, taps, dops, n, 5e-7, l)
        if hasattr(K, "synth_tap_gains_nb"):
            t_nb = timeit(K.synth_tap_gains_nb, gains, taps, dops, n, 5e-7, l)
            print(f"{'synth_tap_gains':<28}{label:<20}{t_np * 1e6:>10.1f}us"
                  f"{t_nb * 1e6:>10.1f}us{t_np / t_nb:>9.1f}x")
        else:
            print(f"{'synth_tap_gains':<28}{label:<20}{t_np * 1e6:>10.1f}us"
                  f"{'-':>12}{'-':>10}")


_FRAME_SNIPPET = """
import time
from rislink.harness import SimConfig, ChannelConfig, OscConfig, run_frame
cfg = SimConfig(channel=ChannelConfig(doppler_hz=683.0), osc=OscConfig("fro", 500.0))
run_frame(cfg, 0)  # warm-up
t0 = time.perf_counter()
n = 100
for i in range(n):
    run_frame(cfg, i)
print((time.perf_counter() - t0) / n * 1e3)
"""


def bench_frame():
    print("\nfull frame (desk profile, OTFS, proposed estimator):")
    for mode, flag in (("numpy", "0"), ("numba", "1")):
        env = dict(os.environ, RISLINK_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", _FRAME_SNIPPET],
                             capture_output=True, text=True, env=env)
        if out.returncode != 0:
            print(f"  {mode:<8} failed: {out.stderr.strip().splitlines()[-1]}")
            continue
        print(f"  {mode:<8} {float(out.stdout.strip()):8.2f} ms/frame")


if __name__ == "__main__":
    if not _backend.NUMBA_ENABLED:
        print("note: numba backend disabled (RISLINK_NUMBA=0 or numba missing)\n")
    bench_kernels()
    bench_frame()
