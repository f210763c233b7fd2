"""Dense (H, W, C) grid primitives.

Grids are plain float64 numpy arrays in (row, column, channel) order.  All
operations are pure; border policy is zero padding for convolution and
out-of-range bilinear samples, edge clamping for resizing.
"""

import numpy as np

from ._kernels import bilinear_gather_kernel, conv2d_kernel
from .errors import ShapeError


def as_grid(a, channels=None, check_finite=True):
    """Validate and return `a` as an (H, W, C) float64 grid."""
    g = np.asarray(a, dtype=np.float64)
    if g.ndim == 2:
        g = g[:, :, None]
    if g.ndim != 3:
        raise ShapeError(f"grid must be (H, W, C), got shape {g.shape}")
    if g.shape[0] < 1 or g.shape[1] < 1 or g.shape[2] < 1:
        raise ShapeError(f"grid dimensions must be >= 1, got {g.shape}")
    if channels is not None and g.shape[2] != channels:
        raise ShapeError(f"expected {channels} channels, got {g.shape[2]}")
    if check_finite and not np.all(np.isfinite(g)):
        raise ValueError("grid contains non-finite values")
    return g


def bilinear_sample(grid, x, y):
    """Bilinear sample at column coordinate x, row coordinate y.

    Coordinates outside [0, W-1] x [0, H-1] read zeros for the out-of-range
    corner taps.  Returns a (C,) vector.
    """
    if not (np.isfinite(x) and np.isfinite(y)):
        raise ValueError(f"sample coordinates must be finite, got ({x}, {y})")
    out = bilinear_gather_kernel(
        grid, np.asarray([x], dtype=np.float64), np.asarray([y], dtype=np.float64)
    )
    return out[0]


def bilinear_sample_map(grid, cols, rows):
    """Bilinear samples at arrays of coordinates; output shape cols.shape + (C,)."""
    cols = np.asarray(cols, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.float64)
    if cols.shape != rows.shape:
        raise ShapeError("coordinate arrays must have identical shapes")
    if not (np.all(np.isfinite(cols)) and np.all(np.isfinite(rows))):
        raise ValueError("sample coordinates must be finite")
    flat = bilinear_gather_kernel(grid, cols.ravel(), rows.ravel())
    return flat.reshape(cols.shape + (grid.shape[2],))


def conv2d(grid, kernel, bias=None):
    """Same-size convolution with an odd (k, k, Cin, Cout) kernel, zero padding."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4:
        raise ShapeError(f"kernel must be (k, k, Cin, Cout), got shape {kernel.shape}")
    kh, kw, cin, cout = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"kernel spatial size must be odd, got {kh}x{kw}")
    if grid.shape[2] != cin:
        raise ShapeError(f"input has {grid.shape[2]} channels, kernel expects {cin}")
    if bias is None:
        bias = np.zeros(cout)
    bias = np.asarray(bias, dtype=np.float64)
    if bias.shape != (cout,):
        raise ShapeError(f"bias must have shape ({cout},), got {bias.shape}")
    return conv2d_kernel(np.ascontiguousarray(grid, dtype=np.float64), kernel, bias)


def maxpool2(grid):
    """2x2 max pooling; H and W must be even."""
    h, w, c = grid.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 requires even H and W, got {h}x{w}")
    return grid.reshape(h // 2, 2, w // 2, 2, c).max(axis=(1, 3))


def group_norm(grid, groups, gamma, beta, eps=1e-5):
    """Normalize to zero mean / unit variance per channel group over (H, W, group)."""
    h, w, c = grid.shape
    if c % groups:
        raise ShapeError(f"{c} channels not divisible into {groups} groups")
    if eps <= 0:
        raise ValueError("eps must be positive")
    gamma = np.asarray(gamma, dtype=np.float64).reshape(c)
    beta = np.asarray(beta, dtype=np.float64).reshape(c)
    x = grid.reshape(h, w, groups, c // groups)
    mean = x.mean(axis=(0, 1, 3), keepdims=True)
    var = x.var(axis=(0, 1, 3), keepdims=True)
    x = (x - mean) / np.sqrt(var + eps)
    return x.reshape(h, w, c) * gamma + beta


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    # branch on sign to avoid overflow in exp
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation(kind, grid):
    if kind == "relu":
        return relu(grid)
    if kind == "sigmoid":
        return sigmoid(grid)
    raise ValueError(f"unknown activation kind {kind!r}")


def _expand2_axis(x, axis):
    # dst index 2m reads src m; 2m+1 reads the midpoint of m and m+1 (edge clamped)
    n = x.shape[axis]
    a = np.take(x, np.arange(n), axis=axis)
    nxt = np.minimum(np.arange(n) + 1, n - 1)
    b = np.take(x, nxt, axis=axis)
    out_shape = list(x.shape)
    out_shape[axis] = 2 * n
    out = np.empty(out_shape, dtype=x.dtype)
    even = [slice(None)] * x.ndim
    odd = [slice(None)] * x.ndim
    even[axis] = slice(0, None, 2)
    odd[axis] = slice(1, None, 2)
    out[tuple(even)] = a
    out[tuple(odd)] = 0.5 * (a + b)
    return out


def upsample2_bilinear(grid):
    """Double H and W; source coordinate is dst/2 with edge clamping, so even
    output rows/columns reproduce the input lattice exactly."""
    return _expand2_axis(_expand2_axis(grid, 0), 1)


def resize_bilinear(grid, out_h, out_w):
    """Resize to (out_h, out_w) with the same dst*scale mapping as upsample2
    (edge clamped, not zero padded)."""
    h, w, c = grid.shape
    if out_h < 1 or out_w < 1:
        raise ShapeError("output dimensions must be >= 1")
    rows = np.minimum(np.arange(out_h) * (h / out_h), h - 1.0)
    cols = np.minimum(np.arange(out_w) * (w / out_w), w - 1.0)
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = (rows - r0)[:, None, None]
    fc = (cols - c0)[None, :, None]
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    top = grid[r0][:, c0] * (1 - fc) + grid[r0][:, c1] * fc
    bot = grid[r1][:, c0] * (1 - fc) + grid[r1][:, c1] * fc
    return top * (1 - fr) + bot * fr
