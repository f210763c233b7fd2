"""Mode seeking on the unit sphere with an exponential (von Mises-Fisher)
kernel, plus seed selection, mode merging, assignment, and cross-window
identity matching.

The kernel normalization constant is never evaluated: mean shift only uses
relative weights exp(kappa * m.x).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .embedding import pairwise_cosine_distance, spherical_mean
from .errors import DegenerateError

DEFAULT_MATCH_THRESHOLD = 0.2
DEFAULT_WINDOW = 5


@dataclass
class VMFConfig:
    kappa: float = 10.0
    n_seeds: int = 10
    seed_min_dist: float = 0.1
    tol: float = 1e-6
    max_iter: int = 100
    merge_dist: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.n_seeds < 1:
            raise ValueError(f"n_seeds must be >= 1, got {self.n_seeds}")
        for name in ("seed_min_dist", "tol", "merge_dist"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


@dataclass
class ClusterResult:
    means: np.ndarray  # (K, C) unit vectors
    assignments: np.ndarray  # (N,) cluster index per embedding
    k: int = field(init=False)

    def __post_init__(self):
        self.k = self.means.shape[0]


def select_seeds(embeddings, cfg):
    """Greedy farthest-point seed selection, deterministic given rng_seed.

    The first seed is drawn uniformly; each subsequent seed maximizes the
    minimum cosine distance to the chosen set (ties to the lowest index) and
    selection stops once no candidate exceeds seed_min_dist.
    """
    x = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot select seeds from an empty embedding set")
    rng = np.random.default_rng(cfg.rng_seed)
    chosen = [int(rng.integers(n))]
    min_dist = pairwise_cosine_distance(x, x[chosen[-1]][None, :])[:, 0]
    while len(chosen) < cfg.n_seeds:
        best = int(np.argmax(min_dist))
        if min_dist[best] <= cfg.seed_min_dist:
            break
        chosen.append(best)
        min_dist = np.minimum(min_dist, pairwise_cosine_distance(x, x[best][None, :])[:, 0])
    return x[chosen]


def vmf_mean_shift(embeddings, seed, cfg):
    """Iterate m <- normalize(sum_i exp(kappa m.x_i) x_i) to a kernel mode."""
    x = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    m = np.asarray(seed, dtype=np.float64)
    for _ in range(cfg.max_iter):
        w = np.exp(cfg.kappa * (x @ m))
        update = w @ x
        norm = np.linalg.norm(update)
        if norm < 1e-12:
            raise DegenerateError("mean-shift update vector is zero")
        m_new = update / norm
        if 0.5 * (1.0 - m_new @ m) < cfg.tol:
            return m_new
        m = m_new
    return m


def kernel_density(embeddings, m, kappa):
    """Unnormalized kernel density sum_i exp(kappa m.x_i)."""
    x = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    return float(np.sum(np.exp(kappa * (x @ m))))


def _merge_modes(modes, merge_dist):
    """Union modes closer than merge_dist (transitively) into their spherical
    means; groups keep the order of their lowest member index."""
    n = modes.shape[0]
    d = pairwise_cosine_distance(modes, modes)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        for b in range(a + 1, n):
            if d[a, b] < merge_dist:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    groups = {}
    for a in range(n):
        groups.setdefault(find(a), []).append(a)
    merged = [spherical_mean(modes[idx]) for _, idx in sorted(groups.items())]
    return np.stack(merged)


def cluster_embeddings(embeddings, cfg):
    """Full clustering: seeds -> mean shift -> mode merge -> nearest-mean
    assignment (ties to the lower cluster index)."""
    x = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    seeds = select_seeds(x, cfg)
    modes = np.stack([vmf_mean_shift(x, s, cfg) for s in seeds])
    means = _merge_modes(modes, cfg.merge_dist)
    assignments = np.argmin(pairwise_cosine_distance(x, means), axis=1)
    return ClusterResult(means=means, assignments=assignments)


def hungarian(cost):
    """Optimal one-to-one partial assignment of min(K, K') pairs minimizing
    total cost.  Returns a list of (row, col) pairs sorted by row."""
    cost = np.atleast_2d(np.asarray(cost, dtype=np.float64))
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    return sorted(zip(rows.tolist(), cols.tolist()))


def match_windows(prev_means, prev_ids, cur_means, threshold=DEFAULT_MATCH_THRESHOLD, next_id=None):
    """Carry object identities from the previous window's cluster means.

    Hungarian matching on pairwise cosine distance; matches at or beyond the
    threshold are voided.  Matched means inherit the previous id, unmatched
    means receive fresh ids.  Returns (ids_for_cur, next_fresh_id).
    """
    cur = np.atleast_2d(np.asarray(cur_means, dtype=np.float64))
    prev = np.atleast_2d(np.asarray(prev_means, dtype=np.float64)) if len(prev_means) else None
    if next_id is None:
        next_id = (max(prev_ids) + 1) if len(prev_ids) else 1
    ids = [None] * cur.shape[0]
    if prev is not None and prev.shape[0] > 0:
        d = pairwise_cosine_distance(prev, cur)
        for r, c in hungarian(d):
            if d[r, c] < threshold:
                ids[c] = prev_ids[r]
    for c in range(cur.shape[0]):
        if ids[c] is None:
            ids[c] = next_id
            next_id += 1
    return ids, next_id
