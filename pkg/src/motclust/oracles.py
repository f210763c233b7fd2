"""Independent oracles for the library's load-bearing math.

Each oracle re-derives a result along a different computational path than the
implementation it checks: trajectory embeddings by explicit chain summation
instead of dense warping, the spherical mean by brute-force probing instead
of the closed form, loss gradients by central finite differences, and
clustering against planted ground truth.  The `check` CLI subcommand runs
these suites with fixed seeds.
"""

import time

import numpy as np

from .cluster import VMFConfig, cluster_embeddings
from .embedding import LossConfig, embedding_loss, loss_gradients, spherical_mean
from .errors import ConfigError
from .ptrnn import run_ptrnn, init_ptrnn_params
from .trajectory import FlowPair, enumerate_trajectories


# ---------------------------------------------------------------------------
# direct (chain-based) trajectory embedding evaluation


def _conv_shift_add(x, kernel):
    """Zero-padded convolution composed from shifted slices; written
    independently of the production kernels."""
    kh, kw, cin, cout = kernel.shape
    h, w = x.shape[:2]
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((h, w, cout))
    for di in range(kh):
        for dj in range(kw):
            oi = di - ph
            oj = dj - pw
            dst_r = slice(max(0, -oi), min(h, h - oi))
            src_r = slice(max(0, oi), min(h, h + oi))
            dst_c = slice(max(0, -oj), min(w, w - oj))
            src_c = slice(max(0, oj), min(w, w + oj))
            out[dst_r, dst_c] += x[src_r, src_c] @ kernel[di, dj]
    return out


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def _oracle_weights(ratio, x, c_prev, params, override):
    t = params.tensors
    c = params.embed_dim
    rx = np.concatenate([ratio, x], axis=2)
    if params.variant == "standard":
        hidden = np.maximum(rx @ t["w_c"], 0.0)
        w = np.repeat(_sigmoid(hidden * t["w_w"].sum())[:, :, None], c, axis=2)
        c_new = np.zeros_like(x)
    elif params.variant == "conv":
        hidden = np.maximum(_conv_shift_add(rx, t["w_c"]), 0.0)
        w = _sigmoid(_conv_shift_add(hidden, t["w_w"]))
        c_new = np.zeros_like(x)
    else:
        z = _sigmoid(_conv_shift_add(rx, t["w_z"]))
        r = _sigmoid(_conv_shift_add(rx, t["w_r"]))
        chat = np.maximum(_conv_shift_add(np.concatenate([r * ratio, x], axis=2), t["w_chat"]), 0.0)
        c_new = (1.0 - z) * c_prev + z * chat
        w = _sigmoid(_conv_shift_add(c_new, t["w_w"]))
    if override is not None:
        w = np.broadcast_to(np.asarray(override, dtype=np.float64), w.shape).copy()
    return w, c_new


def direct_trajectory_embeddings(x_maps, fg_masks, pairs, params, weight_override=None):
    """Evaluate the weighted-mean trajectory embedding by explicit summation
    over enumerated trajectories.

    Returns {(end_frame, end_pixel): record} with the raw weighted mean, the
    final unit embedding, the length, and the position stats.
    """
    trajs = enumerate_trajectories(fg_masks, pairs)
    t_count = len(x_maps)
    h, w = np.asarray(x_maps[0]).shape[:2]
    c = params.embed_dim
    t_param = params.tensors

    by_frame = [[] for _ in range(t_count)]
    for idx, traj in enumerate(trajs):
        for pos, (t, i, j) in enumerate(traj.points):
            by_frame[t].append((idx, pos, i, j))

    acc_h = [np.zeros(c) for _ in trajs]
    acc_w = [np.zeros(c) for _ in trajs]
    acc_c = [np.zeros(c) for _ in trajs]

    for t in range(t_count):
        ratio = np.zeros((h, w, c))
        c_prev = np.zeros((h, w, c))
        for idx, pos, i, j in by_frame[t]:
            if pos > 0:
                ratio[i, j] = acc_h[idx] / acc_w[idx]
                c_prev[i, j] = acc_c[idx]
        w_map, c_map = _oracle_weights(ratio, np.asarray(x_maps[t], dtype=np.float64), c_prev, params, weight_override)
        for idx, pos, i, j in by_frame[t]:
            wt = w_map[i, j]
            acc_h[idx] = acc_h[idx] + wt * np.asarray(x_maps[t], dtype=np.float64)[i, j]
            acc_w[idx] = acc_w[idx] + wt
            acc_c[idx] = c_map[i, j]

    out = {}
    for idx, traj in enumerate(trajs):
        t_end, i, j = traj.points[-1]
        raw = acc_h[idx] / acc_w[idx]
        cols = np.array([p[2] for p in traj.points], dtype=np.float64)
        rows = np.array([p[1] for p in traj.points], dtype=np.float64)
        half_w = max((w - 1) / 2.0, 1.0)
        half_h = max((h - 1) / 2.0, 1.0)
        stats = np.array(
            [
                (cols.mean() - (w - 1) / 2.0) / half_w,
                (rows.mean() - (h - 1) / 2.0) / half_h,
                (cols[-1] - cols[0]) / half_w,
                (rows[-1] - rows[0]) / half_h,
            ]
        )
        hidden = np.maximum(stats @ t_param["scm.fc1.weight"] + t_param["scm.fc1.bias"], 0.0)
        vec = raw + hidden @ t_param["scm.fc2.weight"] + t_param["scm.fc2.bias"]
        norm = np.linalg.norm(vec)
        out[(t_end, (i, j))] = {
            "raw": raw,
            "embedding": vec / norm if norm >= 1e-12 else None,
            "length": len(traj.points),
            "stats": stats,
        }
    return out


def random_linked_sequence(rng, height=16, width=16, t_frames=5, channels=6, max_flow=2,
                           fg_prob=0.6, link_prob=0.7):
    """Random foreground masks, embeddings, and integer flows with a tunable
    fraction of mutually consistent links.

    Returns (x_maps, fg_masks, pairs).
    """
    fg_masks = [(rng.random((height, width, 1)) < fg_prob).astype(np.float64) for _ in range(t_frames)]
    x_maps = [rng.normal(size=(height, width, channels)) for _ in range(t_frames)]
    pairs = []
    for _ in range(t_frames - 1):
        backward = rng.integers(-max_flow, max_flow + 1, size=(height, width, 2)).astype(np.float64)
        forward = rng.integers(-max_flow, max_flow + 1, size=(height, width, 2)).astype(np.float64)
        for i in range(height):
            for j in range(width):
                si = i + int(backward[i, j, 1])
                sj = j + int(backward[i, j, 0])
                if 0 <= si < height and 0 <= sj < width and rng.random() < link_prob:
                    forward[si, sj] = -backward[i, j]
        pairs.append(FlowPair(forward=forward, backward=backward))
    return x_maps, fg_masks, pairs


# ---------------------------------------------------------------------------
# brute-force spherical mean


def mean_cosine_objective(w, vectors):
    return float(np.mean(0.5 * (1.0 - np.asarray(vectors) @ w)))


def probe_spherical_mean(vectors, n_probes=200_000, refine_steps=200, refine_rate=0.5, seed=0):
    """Minimize the mean cosine distance by random probing plus projected
    gradient refinement of the best probe; no closed form involved.

    Returns (w, objective).
    """
    vecs = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    rng = np.random.default_rng(seed)
    probes = rng.normal(size=(n_probes, vecs.shape[1]))
    probes /= np.linalg.norm(probes, axis=1, keepdims=True)
    objectives = 0.5 * (1.0 - probes @ vecs.mean(axis=0))
    w = probes[int(np.argmin(objectives))]
    grad_base = -0.5 * vecs.mean(axis=0)  # gradient of the objective in ambient space
    for _ in range(refine_steps):
        tangent = grad_base - w * (grad_base @ w)
        w = w - refine_rate * tangent
        w /= np.linalg.norm(w)
    return w, mean_cosine_objective(w, vecs)


# ---------------------------------------------------------------------------
# finite-difference loss gradients


def finite_difference_gradients(groups, cfg, step=1e-6):
    grads = []
    for k, g in enumerate(groups):
        out = np.zeros_like(np.asarray(g, dtype=np.float64))
        for i in range(out.shape[0]):
            for c in range(out.shape[1]):
                plus = [np.array(x, dtype=np.float64, copy=True) for x in groups]
                minus = [np.array(x, dtype=np.float64, copy=True) for x in groups]
                plus[k][i, c] += step
                minus[k][i, c] -= step
                out[i, c] = (embedding_loss(plus, cfg) - embedding_loss(minus, cfg)) / (2 * step)
        grads.append(out)
    return grads


def random_margin_safe_groups(rng, k, n_range, c, cfg, margin=1e-4, max_tries=200):
    """Random unit-vector groups whose distances stay clear of the indicator
    and hinge boundaries, so the composite is differentiable at the sample."""
    for _ in range(max_tries):
        groups = []
        for _ in range(k):
            n = int(rng.integers(n_range[0], n_range[1] + 1))
            g = rng.normal(size=(n, c))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            groups.append(g)
        ok = True
        means = [spherical_mean(g) for g in groups]
        for g, mu in zip(groups, means):
            d = 0.5 * (1.0 - g @ mu)
            if np.any(np.abs(d - cfg.alpha) < margin):
                ok = False
        for a in range(k):
            for b in range(a + 1, k):
                d = 0.5 * (1.0 - float(means[a] @ means[b]))
                if abs(cfg.delta - d) < margin:
                    ok = False
        if ok:
            return groups
    raise RuntimeError("could not sample a margin-safe configuration")


# ---------------------------------------------------------------------------
# planted clusters


def planted_clusters(rng, k, points_per, channels, radius_deg=16.0):
    """k exactly-orthogonal cluster directions with points_per points each,
    every point within radius_deg of its direction.  Returns (points, labels,
    directions)."""
    if k > channels:
        raise ConfigError(f"cannot plant {k} orthogonal directions in {channels} dimensions")
    basis, _ = np.linalg.qr(rng.normal(size=(channels, channels)))
    dirs = basis[:, :k].T
    pts, labels = [], []
    angle = np.deg2rad(radius_deg)
    for lab in range(k):
        base = dirs[lab]
        for _ in range(points_per):
            g = rng.normal(size=channels)
            g -= g @ base * base
            g /= np.linalg.norm(g)
            theta = rng.uniform(0.0, angle)
            pts.append(np.cos(theta) * base + np.sin(theta) * g)
            labels.append(lab)
    return np.stack(pts), np.array(labels), dirs


def assignment_purity(assignments, labels):
    """Fraction of points whose cluster's majority true label matches theirs."""
    assignments = np.asarray(assignments)
    labels = np.asarray(labels)
    correct = 0
    for a in np.unique(assignments):
        members = labels[assignments == a]
        correct += int(np.bincount(members).max())
    return correct / len(labels)


# ---------------------------------------------------------------------------
# check suites (shared by tests and the CLI)


def check_spherical_mean(seed=0, cases=100, n_probes=200_000):
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    worst = -np.inf
    for case in range(cases):
        n = int(rng.integers(1, 11))
        c = int(rng.integers(2, 9))
        vecs = rng.normal(size=(n, c))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        if np.linalg.norm(vecs.sum(axis=0)) < 1e-6:
            continue
        analytic = spherical_mean(vecs)
        _, probe_obj = probe_spherical_mean(vecs, n_probes=n_probes, seed=seed + case)
        worst = max(worst, mean_cosine_objective(analytic, vecs) - probe_obj)
    elapsed = time.perf_counter() - start
    passed = worst <= 1e-4
    return passed, {"cases": cases, "max_excess_over_probe": worst, "seconds": elapsed}


def check_gradients(seed=0, cases=50):
    rng = np.random.default_rng(seed)
    cfg = LossConfig()
    start = time.perf_counter()
    worst = 0.0
    for _ in range(cases):
        k = int(rng.integers(2, 5))
        groups = random_margin_safe_groups(rng, k, (2, 6), 8, cfg)
        analytic = loss_gradients(groups, cfg, warn_boundary=False)
        numeric = finite_difference_gradients(groups, cfg)
        for a, f in zip(analytic, numeric):
            denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-6)
            worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    elapsed = time.perf_counter() - start
    passed = worst < 1e-4
    return passed, {"cases": cases, "max_relative_error": worst, "seconds": elapsed}


def check_ptrnn_equivalence(seed=0, cases=50):
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    worst = 0.0
    counted = 0
    for _ in range(cases):
        t_frames = int(rng.integers(2, 7))
        x_maps, fg_masks, pairs = random_linked_sequence(rng, t_frames=t_frames)
        for variant in ("standard", "conv", "convgru"):
            params = init_ptrnn_params(rng, embed_dim=6, variant=variant)
            entries, _ = run_ptrnn(x_maps, fg_masks, pairs, params)
            expected = direct_trajectory_embeddings(x_maps, fg_masks, pairs, params)
            if len(entries) != len(expected):
                return False, {"error": f"entry counts differ: {len(entries)} vs {len(expected)}"}
            for e in entries:
                ref = expected[(e.end_frame, e.end_pixel)]
                worst = max(worst, float(np.max(np.abs(e.raw_mean - ref["raw"]))))
                worst = max(worst, float(np.max(np.abs(e.embedding - ref["embedding"]))))
                counted += 1
    elapsed = time.perf_counter() - start
    passed = worst < 1e-9
    return passed, {"cases": cases, "trajectories": counted, "max_abs_deviation": worst,
                    "seconds": elapsed}


def check_clustering(seed=0, trials=100):
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    correct_k = 0
    min_purity = 1.0
    for trial in range(trials):
        k = int(rng.integers(2, 5))
        pts, labels, _ = planted_clusters(rng, k, 200, 32)
        cfg = VMFConfig(rng_seed=seed + trial)
        result = cluster_embeddings(pts, cfg)
        if result.k == k:
            correct_k += 1
            min_purity = min(min_purity, assignment_purity(result.assignments, labels))
    elapsed = time.perf_counter() - start
    passed = correct_k >= int(np.ceil(0.95 * trials)) and min_purity >= 0.99
    return passed, {"trials": trials, "correct_k": correct_k, "min_purity_on_successes": min_purity,
                    "seconds": elapsed}


CHECK_SUITES = {
    "spherical-mean": check_spherical_mean,
    "gradients": check_gradients,
    "ptrnn-equivalence": check_ptrnn_equivalence,
    "clustering": check_clustering,
}


def run_check(suite, seed=0):
    """Run one named suite; returns (passed, details dict)."""
    if suite not in CHECK_SUITES:
        raise ConfigError(f"unknown check suite {suite!r}; expected one of {sorted(CHECK_SUITES)}")
    return CHECK_SUITES[suite](seed=seed)
