#!/usr/bin/env python3
"""Time the numba @njit kernels against the pure-numpy fallbacks.

The two hot paths are dense same-size convolution (the network forward pass)
and bilinear gathering (per-step trajectory warping).  Also times a full
two-branch forward pass under whichever backend is active, so run it twice to
compare end to end:

    python benchmarks/bench_backends.py
    MOTCLUST_BACKEND=numpy python benchmarks/bench_backends.py
"""

import time

import numpy as np

from motclust import _kernels
from motclust.backend import HAVE_NUMBA, backend_name


def timeit(fn, *args, repeat=20):
    fn(*args)  # warm up (jit compilation, cache effects)
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_conv():
    rng = np.random.default_rng(0)
    print("conv2d (H x W x Cin -> Cout, 3x3 kernel)")
    for h, w, cin, cout in [(32, 48, 16, 16), (56, 100, 32, 32), (112, 200, 16, 32)]:
        x = rng.normal(size=(h, w, cin))
        k = rng.normal(size=(3, 3, cin, cout))
        b = rng.normal(size=cout)
        t_np = timeit(_kernels.conv2d_numpy, x, k, b)
        line = f"  {h:4d}x{w:<4d} {cin:3d}->{cout:<3d}  numpy {t_np * 1e3:8.2f} ms"
        if HAVE_NUMBA:
            t_nb = timeit(_kernels.conv2d_numba, x, k, b)
            line += f"  numba {t_nb * 1e3:8.2f} ms  speedup {t_np / t_nb:5.2f}x"
        print(line)


def bench_gather():
    rng = np.random.default_rng(1)
    print("bilinear gather (N samples from H x W x C)")
    for h, w, c, n in [(32, 48, 16, 32 * 48), (224, 400, 32, 224 * 400)]:
        values = rng.normal(size=(h, w, c))
        cols = rng.uniform(-2, w + 2, size=n)
        rows = rng.uniform(-2, h + 2, size=n)
        t_np = timeit(_kernels.bilinear_gather_numpy, values, cols, rows)
        line = f"  {h:4d}x{w:<4d} C={c:<3d} N={n:<6d} numpy {t_np * 1e3:8.2f} ms"
        if HAVE_NUMBA:
            t_nb = timeit(_kernels.bilinear_gather_numba, values, cols, rows)
            line += f"  numba {t_nb * 1e3:8.2f} ms  speedup {t_np / t_nb:5.2f}x"
        print(line)


def bench_forward():
    from motclust.ynet import init_ynet_params, ynet_forward

    rng = np.random.default_rng(2)
    params = init_ynet_params(rng)
    rgb = rng.random((32, 48, 3))
    flow = rng.normal(size=(32, 48, 2))
    t = timeit(lambda: ynet_forward(rgb, flow, params), repeat=5)
    print(f"full forward pass 32x48 ({backend_name()} backend): {t * 1e3:.1f} ms")


if __name__ == "__main__":
    print(f"active backend: {backend_name()}  (numba installed: {HAVE_NUMBA})")
    bench_conv()
    bench_gather()
    bench_forward()
