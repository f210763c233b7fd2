import numpy as np
import pytest

from motclust.errors import ShapeError
from motclust.grid import (
    activation,
    as_grid,
    bilinear_sample,
    bilinear_sample_map,
    conv2d,
    group_norm,
    maxpool2,
    relu,
    resize_bilinear,
    sigmoid,
    upsample2_bilinear,
)


def test_as_grid_validates():
    with pytest.raises(ShapeError):
        as_grid(np.zeros((0, 3, 1)))
    with pytest.raises(ShapeError):
        as_grid(np.zeros((3, 3, 2)), channels=1)
    with pytest.raises(ValueError):
        as_grid(np.full((2, 2, 1), np.nan))


def test_bilinear_sample_exact_at_lattice():
    rng = np.random.default_rng(0)
    g = rng.random((5, 7, 3))
    for i, j in [(0, 0), (2, 3), (4, 6)]:
        assert np.array_equal(bilinear_sample(g, float(j), float(i)), g[i, j])


def test_bilinear_sample_midpoint():
    g = np.zeros((1, 2, 1))
    g[0, 1, 0] = 1.0
    assert bilinear_sample(g, 0.5, 0.0)[0] == pytest.approx(0.5)


def test_bilinear_sample_zero_padding_outside():
    rng = np.random.default_rng(1)
    g = rng.random((4, 4, 2))
    assert np.array_equal(bilinear_sample(g, -5.0, -5.0), np.zeros(2))
    assert np.array_equal(bilinear_sample(g, 100.0, 1.0), np.zeros(2))


def test_bilinear_sample_rejects_nonfinite():
    g = np.zeros((2, 2, 1))
    with pytest.raises(ValueError):
        bilinear_sample(g, np.nan, 0.0)
    with pytest.raises(ValueError):
        bilinear_sample(g, 0.0, np.inf)


def test_bilinear_sample_continuity():
    rng = np.random.default_rng(2)
    g = rng.random((6, 6, 1))
    local_range = g.max() - g.min()
    for x, y in [(2.3, 1.7), (0.0, 0.0), (4.99, 4.99)]:
        a = bilinear_sample(g, x, y)
        b = bilinear_sample(g, x + 1e-9, y + 1e-9)
        assert abs(a[0] - b[0]) < 1e-6 * local_range


def test_bilinear_sample_map_shape():
    rng = np.random.default_rng(3)
    g = rng.random((4, 5, 3))
    cols, rows = np.meshgrid(np.linspace(0, 4, 7), np.linspace(0, 3, 6))
    out = bilinear_sample_map(g, cols, rows)
    assert out.shape == (6, 7, 3)


def test_conv2d_identity_kernel():
    rng = np.random.default_rng(4)
    g = rng.random((5, 5, 3))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0] = np.eye(3)
    assert np.allclose(conv2d(g, k), g)


def test_conv2d_ones_kernel_interior():
    v = 1.7
    g = np.full((5, 5, 1), v)
    k = np.ones((3, 3, 1, 1))
    out = conv2d(g, k)
    assert out[2, 2, 0] == pytest.approx(9 * v)
    # border pixels see zero padding
    assert out[0, 0, 0] == pytest.approx(4 * v)


def test_conv2d_zero_kernel_bias():
    g = np.ones((3, 3, 2))
    k = np.zeros((3, 3, 2, 4))
    b = np.array([0.5, -1.0, 2.0, 0.0])
    out = conv2d(g, k, b)
    assert np.allclose(out, np.broadcast_to(b, (3, 3, 4)))


def test_conv2d_shape_errors():
    g = np.ones((4, 4, 2))
    with pytest.raises(ShapeError):
        conv2d(g, np.zeros((2, 2, 2, 1)))  # even kernel
    with pytest.raises(ShapeError):
        conv2d(g, np.zeros((3, 3, 3, 1)))  # channel mismatch


def test_conv2d_linearity():
    rng = np.random.default_rng(5)
    u = rng.normal(size=(6, 6, 2))
    v = rng.normal(size=(6, 6, 2))
    k = rng.normal(size=(3, 3, 2, 3))
    a, b = 0.7, -1.3
    lhs = conv2d(a * u + b * v, k)
    rhs = a * conv2d(u, k) + b * conv2d(v, k)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_maxpool2():
    g = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1)
    assert maxpool2(g)[0, 0, 0] == 4.0
    const = np.full((4, 4, 2), 3.3)
    assert np.allclose(maxpool2(maxpool2(const)), 3.3)
    with pytest.raises(ShapeError):
        maxpool2(np.zeros((5, 4, 1)))


def test_group_norm_constant_input():
    g = np.full((4, 4, 8), 2.5)
    out = group_norm(g, 4, np.ones(8), np.zeros(8))
    assert np.allclose(out, 0.0)
    out = group_norm(g, 4, np.ones(8), np.full(8, 0.7))
    assert np.allclose(out, 0.7)


def test_group_norm_two_value():
    g = np.empty((2, 1, 1))
    g[0, 0, 0], g[1, 0, 0] = -1.0, 1.0
    out = group_norm(g, 1, np.ones(1), np.zeros(1), eps=1e-12)
    assert out[0, 0, 0] == pytest.approx(-1.0, abs=1e-5)
    assert out[1, 0, 0] == pytest.approx(1.0, abs=1e-5)


def test_group_norm_moments():
    rng = np.random.default_rng(6)
    g = rng.normal(0.0, 3.0, size=(8, 8, 8))
    eps = 1e-5
    out = group_norm(g, 4, np.ones(8), np.zeros(8), eps=eps)
    x = out.reshape(8, 8, 4, 2)
    means = x.mean(axis=(0, 1, 3))
    var_in = g.reshape(8, 8, 4, 2).var(axis=(0, 1, 3))
    assert np.all(np.abs(means) < 1e-8)
    assert np.all(np.abs(x.var(axis=(0, 1, 3)) - 1.0) < 2 * eps / var_in)


def test_group_norm_indivisible():
    with pytest.raises(ShapeError):
        group_norm(np.zeros((2, 2, 6)), 4, np.ones(6), np.zeros(6))


def test_activation():
    g = np.array([[-1.0, 0.0, 20.0]]).reshape(1, 3, 1)
    assert activation("relu", g)[0, 0, 0] == 0.0
    assert activation("sigmoid", g)[0, 1, 0] == pytest.approx(0.5)
    assert activation("sigmoid", g)[0, 2, 0] == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        activation("tanh", g)
    assert relu(np.array([-2.0]))[0] == 0.0
    assert sigmoid(np.array([-800.0]))[0] == 0.0  # no overflow


def test_upsample2_bilinear():
    const = np.full((3, 2, 2), 1.25)
    up = upsample2_bilinear(const)
    assert up.shape == (6, 4, 2)
    assert np.allclose(up, 1.25)

    one = np.array([[[3.0]]])
    assert np.allclose(upsample2_bilinear(one), np.full((2, 2, 1), 3.0))

    ramp = np.arange(5.0).reshape(1, 5, 1)
    up = upsample2_bilinear(ramp)
    assert np.allclose(up[0, ::2, 0], ramp[0, :, 0])
    assert np.allclose(up[0, 1:-1:2, 0], ramp[0, :-1, 0] + 0.5)


def test_resize_bilinear_matches_upsample2():
    rng = np.random.default_rng(7)
    g = rng.random((4, 6, 2))
    assert np.allclose(resize_bilinear(g, 8, 12), upsample2_bilinear(g))
    assert np.allclose(resize_bilinear(g, 4, 6), g)
