"""Unit-sphere geometry, the three-term training loss, analytic gradients of
the embedding terms, and a projected-gradient optimizer that exercises them.

Cosine distance d(x, y) = (1 - x.y) / 2 ranges over [0, 1] for unit vectors.
The spherical mean of a set of unit vectors (the unit vector minimizing mean
cosine distance to the set) is their normalized sum.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, ShapeError

UNIT_NORM_TOL = 1e-5
BOUNDARY_EPS = 1e-7


@dataclass
class LossConfig:
    alpha: float = 0.02  # intra margin (cosine distance)
    delta: float = 0.5  # inter margin
    lambda_fg: float = 1.0
    lambda_intra: float = 1.0
    lambda_inter: float = 1.0
    denom_floor: int = 50

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.denom_floor < 1:
            raise ValueError(f"denom_floor must be >= 1, got {self.denom_floor}")


def _check_unit(x, name="vector"):
    norms = np.linalg.norm(np.atleast_2d(x), axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ValueError(f"{name} must be unit length (off by {worst:.2e})")


def cosine_distance(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_unit(x, "x")
    _check_unit(y, "y")
    return 0.5 * (1.0 - float(x @ y))


def pairwise_cosine_distance(a, b):
    """Distance matrix between rows of a and rows of b."""
    return 0.5 * (1.0 - np.asarray(a) @ np.asarray(b).T)


def spherical_mean(vectors):
    """Normalized vector sum; the minimizer of mean cosine distance."""
    arr = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    s = arr.sum(axis=0)
    norm = np.linalg.norm(s)
    if norm < 1e-12:
        raise DegenerateError("vector sum is (numerically) zero; spherical mean undefined")
    return s / norm


def loss_fg(logits, labels):
    """Pixel-mean binary cross-entropy on foreground logits, stabilized."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if z.shape != y.shape:
        raise ShapeError(f"logits and labels sizes differ: {z.shape} vs {y.shape}")
    # max(z,0) - z*y + log(1 + exp(-|z|))
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def _group_arrays(groups):
    out = [np.atleast_2d(np.asarray(g, dtype=np.float64)) for g in groups]
    if not out:
        raise ValueError("need at least one group")
    for g in out:
        if g.shape[0] < 1:
            raise ValueError("groups must be non-empty")
        _check_unit(g, "group embedding")
    return out


def loss_intra(groups, cfg):
    """Mean over groups of the margin-filtered squared distance to the group's
    spherical mean, with the denominator floored to avoid tiny counts."""
    arrs = _group_arrays(groups)
    total = 0.0
    for g in arrs:
        mu = spherical_mean(g)
        d = 0.5 * (1.0 - g @ mu)
        active = d - cfg.alpha >= 0.0
        num = float(np.sum(active * d**2))
        den = max(int(np.sum(active)), cfg.denom_floor)
        total += num / den
    return total / len(arrs)


def loss_inter(means, cfg):
    """Mean squared hinge pushing group means at least delta apart; zero for a
    single group."""
    mu = np.atleast_2d(np.asarray(means, dtype=np.float64))
    k = mu.shape[0]
    if k < 2:
        return 0.0
    total = 0.0
    for a in range(k):
        for b in range(a + 1, k):
            d = 0.5 * (1.0 - float(mu[a] @ mu[b]))
            total += max(cfg.delta - d, 0.0) ** 2
    return 2.0 * total / (k * (k - 1))


def loss_total(logits, labels, groups, cfg):
    """Weighted sum of the three terms; returns (total, breakdown dict)."""
    fg = loss_fg(logits, labels)
    arrs = _group_arrays(groups)
    intra = loss_intra(arrs, cfg)
    means = np.stack([spherical_mean(g) for g in arrs])
    inter = loss_inter(means, cfg)
    total = cfg.lambda_fg * fg + cfg.lambda_intra * intra + cfg.lambda_inter * inter
    return total, {"fg": fg, "intra": intra, "inter": inter}


def embedding_loss(groups, cfg):
    """The two terms that depend on the embeddings alone: intra + inter."""
    arrs = _group_arrays(groups)
    means = np.stack([spherical_mean(g) for g in arrs])
    return loss_intra(arrs, cfg) + loss_inter(means, cfg)


def loss_gradients(groups, cfg, warn_boundary=True):
    """Exact gradients of intra + inter with respect to every embedding.

    The group means are treated as functions of the embeddings (chain rule
    through the normalized sum); indicator and hinge factors are held locally
    constant.  Proximity of any distance to the margin within 1e-7 triggers a
    RuntimeWarning since the composite is not differentiable there.

    Returns a list of (N_k, C) gradient arrays matching the group layout.
    """
    arrs = _group_arrays(groups)
    k_count = len(arrs)
    sums = [g.sum(axis=0) for g in arrs]
    norms = [np.linalg.norm(s) for s in sums]
    for n in norms:
        if n < 1e-12:
            raise DegenerateError("degenerate group mean")
    means = [s / n for s, n in zip(sums, norms)]

    grads = [np.zeros_like(g) for g in arrs]

    for k, g in enumerate(arrs):
        mu, norm = means[k], norms[k]
        d = 0.5 * (1.0 - g @ mu)
        if warn_boundary and np.any(np.abs(d - cfg.alpha) < BOUNDARY_EPS):
            warnings.warn(
                f"group {k}: distance within {BOUNDARY_EPS} of the intra margin; "
                "gradient is one-sided there",
                RuntimeWarning,
            )
        active = d - cfg.alpha >= 0.0
        den = max(int(np.sum(active)), cfg.denom_floor)
        # d(dist_i)/d(x_j) = -(mu 1{i=j} + (x_i - mu (mu.x_i)) / |S|) / 2
        shared = (active * d) @ (g - np.outer(g @ mu, mu))  # sum_i 1_i d_i (x_i - mu mu^T x_i)
        grads[k] += -(np.outer(active * d, mu) + shared / norm) / (k_count * den)

    if k_count > 1:
        scale = 2.0 / (k_count * (k_count - 1))
        for a in range(k_count):
            for b in range(k_count):
                if a == b:
                    continue
                dab = 0.5 * (1.0 - float(means[a] @ means[b]))
                hinge = cfg.delta - dab
                if warn_boundary and abs(hinge) < BOUNDARY_EPS:
                    warnings.warn(
                        f"mean pair ({a}, {b}) within {BOUNDARY_EPS} of the inter margin",
                        RuntimeWarning,
                    )
                if hinge <= 0.0:
                    continue
                proj = means[b] - means[a] * float(means[a] @ means[b])
                grads[a] += scale * hinge * proj[None, :] / norms[a]
    return grads


def sphere_optimize(groups, cfg, steps, rate):
    """Projected gradient descent of intra + inter on the product of spheres.

    Each step removes the radial component of the gradient, takes a step, and
    renormalizes.  Returns (final_groups, loss_trace) with the trace holding
    the loss before each step plus the final loss.  A degenerate group mean
    aborts with the partial trace attached to the error.
    """
    arrs = [g.copy() for g in _group_arrays(groups)]
    trace = []
    for _ in range(steps):
        try:
            trace.append(embedding_loss(arrs, cfg))
            grads = loss_gradients(arrs, cfg, warn_boundary=False)
        except DegenerateError as e:
            raise DegenerateError(str(e), trace=trace) from e
        for g, grad in zip(arrs, grads):
            tangent = grad - g * np.sum(grad * g, axis=1, keepdims=True)
            g -= rate * tangent
            g /= np.linalg.norm(g, axis=1, keepdims=True)
    trace.append(embedding_loss(arrs, cfg))
    return arrs, trace
