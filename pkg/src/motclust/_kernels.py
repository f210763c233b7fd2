"""Dual-path hot kernels: numba @njit loops and pure-numpy equivalents.

Both paths compute identical math; accumulation order differs, so results may
disagree in the last few ulps.  Everything runs in float64.  The exported
`conv2d_kernel` / `bilinear_gather_kernel` names follow the backend selected
in `backend.py`; the per-path implementations stay importable for the
benchmark in benchmarks/bench_backends.py.
"""

import numpy as np

from .backend import HAVE_NUMBA, USE_NUMBA


def conv2d_numpy(x, kernel, bias):
    """Same-size 2-D convolution with zero padding (im2col + tensordot)."""
    kh, kw, cin, cout = kernel.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    h, w = x.shape[:2]
    s0, s1, s2 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(h, w, kh, kw, cin), strides=(s0, s1, s0, s1, s2), writeable=False
    )
    return np.tensordot(windows, kernel, axes=([2, 3, 4], [0, 1, 2])) + bias


def bilinear_gather_numpy(values, cols, rows):
    """Bilinear samples of an (H, W, C) grid at flat coordinate arrays.

    Out-of-range corner taps contribute zero (zero padding).
    Returns an (N, C) array for N coordinates.
    """
    h, w, c = values.shape
    c0 = np.floor(cols)
    r0 = np.floor(rows)
    fc = cols - c0
    fr = rows - r0
    out = np.zeros((cols.shape[0], c))
    for dr in (0, 1):
        for dc in (0, 1):
            ci = (c0 + dc).astype(np.int64)
            ri = (r0 + dr).astype(np.int64)
            weight = (fc if dc else 1.0 - fc) * (fr if dr else 1.0 - fr)
            inside = (ci >= 0) & (ci < w) & (ri >= 0) & (ri < h)
            cc = np.clip(ci, 0, w - 1)
            rc = np.clip(ri, 0, h - 1)
            out += (weight * inside)[:, None] * values[rc, cc, :]
    return out


if HAVE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _conv2d_njit(x, k2d, bias, kh, kw, out):
        # explicit patch extraction, then one blas matmul over all pixels
        h, w, cin = x.shape
        cout = k2d.shape[1]
        ph = (kh - 1) // 2
        pw = (kw - 1) // 2
        patches = np.zeros((h * w, kh * kw * cin))
        for i in range(h):
            for j in range(w):
                row = i * w + j
                for di in range(kh):
                    si = i + di - ph
                    if si < 0 or si >= h:
                        continue
                    for dj in range(kw):
                        sj = j + dj - pw
                        if sj < 0 or sj >= w:
                            continue
                        base = (di * kw + dj) * cin
                        for ci in range(cin):
                            patches[row, base + ci] = x[si, sj, ci]
        res = patches @ k2d
        for i in range(h):
            for j in range(w):
                for co in range(cout):
                    out[i, j, co] = res[i * w + j, co] + bias[co]
        return out

    @njit(cache=True)
    def _bilinear_gather_njit(values, cols, rows, out):
        h, w, c = values.shape
        n = cols.shape[0]
        for k in range(n):
            c0 = np.floor(cols[k])
            r0 = np.floor(rows[k])
            fc = cols[k] - c0
            fr = rows[k] - r0
            for dr in range(2):
                ri = int(r0) + dr
                if ri < 0 or ri >= h:
                    continue
                wr = fr if dr == 1 else 1.0 - fr
                for dc in range(2):
                    ci = int(c0) + dc
                    if ci < 0 or ci >= w:
                        continue
                    wc = fc if dc == 1 else 1.0 - fc
                    wgt = wr * wc
                    for ch in range(c):
                        out[k, ch] += wgt * values[ri, ci, ch]
        return out

    def conv2d_numba(x, kernel, bias):
        kh, kw, _, cout = kernel.shape
        k2d = np.ascontiguousarray(kernel.reshape(-1, cout))
        out = np.empty((x.shape[0], x.shape[1], cout))
        return _conv2d_njit(x, k2d, bias, kh, kw, out)

    def bilinear_gather_numba(values, cols, rows):
        out = np.zeros((cols.shape[0], values.shape[2]))
        return _bilinear_gather_njit(values, cols, rows, out)


if USE_NUMBA:
    conv2d_kernel = conv2d_numba
    bilinear_gather_kernel = bilinear_gather_numba
else:
    conv2d_kernel = conv2d_numpy
    bilinear_gather_kernel = bilinear_gather_numpy
