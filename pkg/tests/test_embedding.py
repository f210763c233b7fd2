import numpy as np
import pytest

from motclust.embedding import (
    LossConfig,
    cosine_distance,
    embedding_loss,
    loss_fg,
    loss_gradients,
    loss_inter,
    loss_intra,
    loss_total,
    pairwise_cosine_distance,
    spherical_mean,
    sphere_optimize,
)
from motclust.errors import DegenerateError
from motclust.oracles import (
    finite_difference_gradients,
    mean_cosine_objective,
    probe_spherical_mean,
    random_margin_safe_groups,
)


def unit_rows(rng, n, c):
    m = rng.normal(size=(n, c))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def test_cosine_distance_cases():
    x = np.array([1.0, 0.0])
    y = np.array([0.0, 1.0])
    assert cosine_distance(x, x) == 0.0
    assert cosine_distance(x, -x) == 1.0
    assert cosine_distance(x, y) == 0.5


def test_cosine_distance_range_and_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(100):
        x, y = unit_rows(rng, 2, 5)
        d = cosine_distance(x, y)
        assert 0.0 <= d <= 1.0
        assert d == cosine_distance(y, x)


def test_cosine_distance_rejects_non_unit():
    with pytest.raises(ValueError):
        cosine_distance(np.array([2.0, 0.0]), np.array([1.0, 0.0]))


def test_spherical_mean_cases():
    assert np.allclose(spherical_mean([[1.0, 0.0]]), [1.0, 0.0])
    m = spherical_mean([[1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(m, [1 / np.sqrt(2), 1 / np.sqrt(2)])
    with pytest.raises(DegenerateError):
        spherical_mean([[1.0, 0.0], [-1.0, 0.0]])


def test_spherical_mean_beats_probes():
    rng = np.random.default_rng(1)
    vecs = unit_rows(rng, 5, 4)
    analytic = spherical_mean(vecs)
    obj = mean_cosine_objective(analytic, vecs)
    probes = unit_rows(rng, 200_000, 4)
    probe_objs = 0.5 * (1.0 - probes @ vecs.mean(axis=0))
    assert obj <= probe_objs.min() + 1e-9


def test_spherical_mean_matches_refined_probe():
    rng = np.random.default_rng(2)
    vecs = unit_rows(rng, 5, 4)
    analytic_obj = mean_cosine_objective(spherical_mean(vecs), vecs)
    _, probe_obj = probe_spherical_mean(vecs, n_probes=200_000, seed=7)
    assert analytic_obj <= probe_obj + 1e-4


def test_loss_fg_saturated():
    logits = np.array([[50.0, -50.0]]).reshape(1, 2, 1)
    labels = np.array([[1.0, 0.0]]).reshape(1, 2, 1)
    assert loss_fg(logits, labels) == pytest.approx(0.0, abs=1e-8)


def test_loss_fg_zero_logits():
    logits = np.zeros((3, 3, 1))
    labels = np.ones((3, 3, 1))
    assert loss_fg(logits, labels) == pytest.approx(np.log(2.0))


def test_loss_fg_confident_wrong():
    assert loss_fg(np.array([-50.0]), np.array([1.0])) == pytest.approx(50.0, abs=1e-8)


def test_loss_intra_identical_members():
    cfg = LossConfig()
    groups = [np.tile([1.0, 0.0, 0.0], (4, 1)), np.tile([0.0, 1.0, 0.0], (3, 1))]
    assert loss_intra(groups, cfg) == 0.0


def test_loss_intra_hand_value():
    # two unit vectors each at distance 0.1 from their spherical mean
    cfg = LossConfig()
    cos_theta = 0.8  # d = (1 - 0.8) / 2 = 0.1
    sin_theta = np.sqrt(1 - cos_theta**2)
    group = np.array([[cos_theta, sin_theta], [cos_theta, -sin_theta]])
    assert loss_intra([group], cfg) == pytest.approx((0.01 + 0.01) / 50)


def test_loss_intra_all_within_margin():
    cfg = LossConfig(alpha=0.2)
    rng = np.random.default_rng(3)
    base = np.array([1.0, 0.0, 0.0])
    # small perturbations keep every member within the margin
    group = np.stack([base, [0.999, 0.0447, 0.0], [0.999, -0.0447, 0.0]])
    group /= np.linalg.norm(group, axis=1, keepdims=True)
    assert loss_intra([group], cfg) == 0.0


def test_loss_inter_cases():
    cfg = LossConfig()
    orth = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert loss_inter(orth, cfg) == 0.0
    same = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert loss_inter(same, cfg) == pytest.approx(0.25)
    assert loss_inter(np.array([[1.0, 0.0]]), cfg) == 0.0


def test_loss_inter_zero_iff_separated():
    cfg = LossConfig()
    rng = np.random.default_rng(4)
    for _ in range(50):
        means = unit_rows(rng, 3, 6)
        d = pairwise_cosine_distance(means, means)
        pairs = d[np.triu_indices(3, 1)]
        value = loss_inter(means, cfg)
        if np.all(pairs >= cfg.delta):
            assert value == 0.0
        else:
            assert value > 0.0


def test_loss_total_breakdown():
    cfg = LossConfig()
    logits = np.zeros((2, 2, 1))
    labels = np.ones((2, 2, 1))
    groups = [np.tile([1.0, 0.0], (60, 1)), np.tile([0.0, 1.0], (60, 1))]
    total, parts = loss_total(logits, labels, groups, cfg)
    assert total == pytest.approx(parts["fg"] + parts["intra"] + parts["inter"])
    assert parts["intra"] == 0.0 and parts["inter"] == 0.0

    cfg0 = LossConfig(lambda_intra=0.0)
    total0, _ = loss_total(logits, labels, groups, cfg0)
    assert total0 == pytest.approx(parts["fg"])


def test_losses_rotation_invariant():
    cfg = LossConfig()
    rng = np.random.default_rng(5)
    groups = [unit_rows(rng, 6, 8) for _ in range(3)]
    q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    rotated = [g @ q.T for g in groups]
    a = embedding_loss(groups, cfg)
    b = embedding_loss(rotated, cfg)
    assert abs(a - b) < 1e-10


def test_gradients_zero_when_loss_locally_zero():
    cfg = LossConfig()
    # tight orthogonal clusters: both terms vanish on a neighborhood
    groups = [np.tile([1.0, 0.0, 0.0, 0.0], (3, 1)), np.tile([0.0, 1.0, 0.0, 0.0], (3, 1))]
    grads = loss_gradients(groups, cfg, warn_boundary=False)
    for g in grads:
        assert np.all(g == 0.0)


def test_gradients_match_finite_differences():
    cfg = LossConfig()
    rng = np.random.default_rng(6)
    groups = random_margin_safe_groups(rng, 3, (3, 5), 8, cfg)
    analytic = loss_gradients(groups, cfg, warn_boundary=False)
    numeric = finite_difference_gradients(groups, cfg)
    for a, f in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-6)
        assert np.max(np.abs(a - f) / denom) < 1e-4


def test_gradient_tangent_component_drives_loss():
    # moving against the tangent-projected gradient decreases the loss to
    # first order on the sphere
    cfg = LossConfig()
    rng = np.random.default_rng(7)
    groups = random_margin_safe_groups(rng, 2, (3, 4), 6, cfg)
    grads = loss_gradients(groups, cfg, warn_boundary=False)
    base = embedding_loss(groups, cfg)
    step = 1e-7
    moved = [g.copy() for g in groups]
    norm_sq = 0.0
    for g, grad in zip(moved, grads):
        tangent = grad - g * np.sum(grad * g, axis=1, keepdims=True)
        norm_sq += float(np.sum(tangent**2))
        g -= step * tangent
        g /= np.linalg.norm(g, axis=1, keepdims=True)
    dropped = base - embedding_loss(moved, cfg)
    assert dropped == pytest.approx(step * norm_sq, rel=1e-3)


def test_boundary_warning():
    cfg = LossConfig(alpha=0.1)
    cos_theta = 1.0 - 2 * cfg.alpha  # members exactly on the indicator margin
    sin_theta = np.sqrt(1 - cos_theta**2)
    group = np.array([[cos_theta, sin_theta], [cos_theta, -sin_theta]])
    with pytest.warns(RuntimeWarning):
        loss_gradients([group], cfg)


def test_sphere_optimize_keeps_optimal_configuration():
    cfg = LossConfig()
    groups = [
        np.tile([1.0, 0.0, 0.0], (4, 1)),
        np.tile([0.0, 1.0, 0.0], (4, 1)),
        np.tile([0.0, 0.0, 1.0], (4, 1)),
    ]
    start = embedding_loss(groups, cfg)
    _, trace = sphere_optimize(groups, cfg, 50, 1.0)
    assert trace[-1] <= start + 1e-12


def test_sphere_optimize_converges():
    cfg = LossConfig()
    rng = np.random.default_rng(8)
    groups = [unit_rows(rng, 12, 16) for _ in range(3)]
    final, trace = sphere_optimize(groups, cfg, 2000, 5.0)
    assert trace[-1] < 1e-3
    means = np.stack([spherical_mean(g) for g in final])
    d = pairwise_cosine_distance(means, means)
    assert np.all(d[np.triu_indices(3, 1)] >= cfg.delta)


def test_sphere_optimize_best_so_far_non_increasing():
    cfg = LossConfig()
    rng = np.random.default_rng(9)
    groups = [unit_rows(rng, 5, 8) for _ in range(2)]
    _, trace = sphere_optimize(groups, cfg, 200, 2.0)
    best = np.minimum.accumulate(trace)
    assert np.all(np.diff(best) <= 0.0 + 1e-15)
