"""Acceptance gate: every criterion runs at its stated tolerance and prints
one pass/fail line with the measured values.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as they go.
"""

import itertools
import time

import numpy as np
import pytest

from motclust.embedding import LossConfig, pairwise_cosine_distance, spherical_mean, sphere_optimize
from motclust.io_formats import (
    ParamManifest,
    read_flo,
    read_params,
    read_pgm,
    write_flo,
    write_params,
    write_pgm,
)
from motclust.cluster import hungarian
from motclust.metrics import delta_obj, multi_object_prf
from motclust.oracles import (
    check_clustering,
    check_gradients,
    check_ptrnn_equivalence,
    check_spherical_mean,
)
from motclust.pipeline import PipelineConfig, run_segment
from motclust.synth import write_scene
from motclust.trajectory import enumerate_trajectories, flow_consistent


def report(number, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance] criterion {number} {name}: {status} ({detail})")


def test_criterion_1_spherical_mean_optimality():
    ok, info = check_spherical_mean(seed=101, cases=100)
    ok = ok and info["seconds"] < 60.0
    report(1, "spherical-mean optimality",
           ok, f"max excess over refined probe {info['max_excess_over_probe']:.3e}, "
               f"{info['seconds']:.1f}s")
    assert info["max_excess_over_probe"] <= 1e-4
    assert info["seconds"] < 60.0


def test_criterion_2_loss_gradient_correctness():
    ok, info = check_gradients(seed=102, cases=50)
    ok = ok and info["seconds"] < 30.0
    report(2, "loss-gradient correctness",
           ok, f"max relative error {info['max_relative_error']:.3e}, {info['seconds']:.1f}s")
    assert info["max_relative_error"] < 1e-4
    assert info["seconds"] < 30.0


def test_criterion_3_ptrnn_equivalence():
    ok, info = check_ptrnn_equivalence(seed=103, cases=50)
    ok = ok and info["seconds"] < 60.0
    report(3, "incremental/direct trajectory-embedding equivalence",
           ok, f"{info['trajectories']} trajectories, max abs deviation "
               f"{info['max_abs_deviation']:.3e}, {info['seconds']:.1f}s")
    assert info["max_abs_deviation"] < 1e-9
    assert info["seconds"] < 60.0


def test_criterion_4_planted_cluster_recovery():
    ok, info = check_clustering(seed=104, trials=100)
    ok = ok and info["seconds"] < 120.0
    report(4, "planted-cluster recovery",
           ok, f"correct K in {info['correct_k']}/100 trials, min purity "
               f"{info['min_purity_on_successes']:.4f}, {info['seconds']:.1f}s")
    assert info["correct_k"] >= 95
    assert info["min_purity_on_successes"] >= 0.99
    assert info["seconds"] < 120.0


def test_criterion_5_angular_radius_constant():
    degrees = float(np.degrees(np.arccos(1.0 - 2.0 * 0.02)))
    ok = abs(degrees - 16.26) <= 0.01
    report(5, "margin-implied angular radius", ok, f"arccos(1 - 2*0.02) = {degrees:.4f} deg")
    assert ok


def test_criterion_6_end_to_end_discovery(tmp_path, two_object_scene):
    start = time.perf_counter()
    data = tmp_path / "data"
    write_scene(two_object_scene, data)
    config = PipelineConfig(resize=None, channels=16, source="oracle",
                            noise_angle=10.0, rng_seed=0, window=5)
    result = run_segment(config, data, data, tmp_path / "out")
    gt = two_object_scene.label_maps()
    _, _, f = multi_object_prf(gt, result.label_maps)
    dobj = delta_obj(gt, result.label_maps)
    windows = [r for r in result.report if "window" in r]
    persistent = True
    for obj in (1, 2):
        ids = set()
        for t in range(len(gt)):
            sel = gt[t][:, :, 0] == obj
            ids.update(np.unique(np.asarray(result.label_maps[t])[sel, 0]).tolist())
        persistent = persistent and len(ids) == 1
    elapsed = time.perf_counter() - start
    ok = f >= 0.99 and dobj == 0 and persistent and len(windows) == 2 and elapsed < 30.0
    report(6, "end-to-end synthetic discovery",
           ok, f"F {f:.4f}, dObj {dobj:.0f}, single persistent id per object: "
               f"{persistent}, {elapsed:.1f}s")
    assert f >= 0.99
    assert dobj == 0
    assert persistent
    assert elapsed < 30.0


def test_criterion_7_trajectory_severing(occlusion_scene):
    scene = occlusion_scene
    labels = [f.labels[:, :, 0] for f in scene.frames]
    blocker_cols = range(18, 26)
    trajs = enumerate_trajectories(scene.fg_masks(), scene.flow_pairs())

    crossing = 0
    spanning = 0
    ends_elsewhere = 0
    for traj in trajs:
        for idx, (t, i, j) in enumerate(traj.points):
            if labels[t][i, j] != 1 or t >= len(labels) - 1:
                continue
            if j + 2 in blocker_cols:  # next step lands under the blocker
                crossing += 1
                if idx != len(traj.points) - 1:
                    spanning += 1
                if traj.points[-1] != (t, i, j):
                    ends_elsewhere += 1
                # the severing is driven by inconsistent flow at the target
                pair = scene.flow_pairs()[t]
                assert not flow_consistent(
                    scene.frames[t].forward[i, j], pair.backward[i, j + 2]
                )
    ok = crossing > 0 and spanning == 0 and ends_elsewhere == 0
    report(7, "trajectory severing at occlusions",
           ok, f"{crossing} occlusion-bound trajectory pixels, {spanning} spanning links")
    assert crossing > 0
    assert spanning == 0
    assert ends_elsewhere == 0


def test_criterion_8_sphere_optimization():
    cfg = LossConfig()
    rng = np.random.default_rng(108)
    groups = []
    for _ in range(3):
        g = rng.normal(size=(12, 16))
        groups.append(g / np.linalg.norm(g, axis=1, keepdims=True))
    final, trace = sphere_optimize(groups, cfg, steps=2000, rate=5.0)
    loss = trace[-1]
    means = np.stack([spherical_mean(g) for g in final])
    dmin = float(pairwise_cosine_distance(means, means)[np.triu_indices(3, 1)].min())
    ok = loss < 1e-3 and dmin >= cfg.delta
    report(8, "sphere optimization", ok, f"final loss {loss:.3e}, min pair distance {dmin:.6f}")
    assert loss < 1e-3
    assert dmin >= cfg.delta


def test_criterion_9_codec_bit_exactness():
    rng = np.random.default_rng(109)
    failures = 0
    rounds = {"flo": 0, "pgm": 0, "params": 0}
    for i in range(1000):
        kind = ("flo", "pgm", "params")[i % 3]
        rounds[kind] += 1
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 9))
        if kind == "flo":
            flow = rng.normal(scale=20.0, size=(h, w, 2)).astype(np.float32).astype(np.float64)
            data = write_flo(flow)
            back = read_flo(data)
            if not (np.array_equal(back, flow) and write_flo(back) == data):
                failures += 1
        elif kind == "pgm":
            mask = rng.integers(0, 256, size=(h, w, 1)).astype(np.float64)
            data = write_pgm(mask)
            back = read_pgm(data)
            if not (np.array_equal(back, mask) and write_pgm(back) == data):
                failures += 1
        else:
            tensors = {}
            for k in range(int(rng.integers(1, 4))):
                shape = tuple(int(d) for d in rng.integers(1, 5, size=int(rng.integers(1, 4))))
                tensors[f"t{k}"] = rng.normal(size=shape).astype(np.float32).astype(np.float64)
            manifest = ParamManifest([(n, t.shape) for n, t in tensors.items()])
            data = write_params(None, manifest, tensors)
            m2, back = read_params(data)
            same = m2 == manifest and all(np.array_equal(back[n], tensors[n]) for n in tensors)
            if not (same and write_params(None, m2, back) == data):
                failures += 1
    ok = failures == 0
    report(9, "codec bit-exactness", ok,
           f"1000 round trips ({rounds['flo']} flo / {rounds['pgm']} pgm / "
           f"{rounds['params']} params), {failures} failures")
    assert failures == 0


def test_criterion_10_hungarian_optimality():
    rng = np.random.default_rng(110)
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(1, 7))
        kp = int(rng.integers(1, 7))
        cost = rng.random((k, kp))
        pairs = hungarian(cost)
        total = sum(cost[r, c] for r, c in pairs)
        best = None
        if k <= kp:
            for perm in itertools.permutations(range(kp), k):
                v = sum(cost[r, c] for r, c in enumerate(perm))
                best = v if best is None else min(best, v)
        else:
            for perm in itertools.permutations(range(k), kp):
                v = sum(cost[r, c] for c, r in enumerate(perm))
                best = v if best is None else min(best, v)
        worst = max(worst, abs(total - best))
    ok = worst < 1e-12
    report(10, "assignment optimality vs exhaustive search",
           ok, f"200 matrices up to 6x6, max cost gap {worst:.2e}")
    assert worst < 1e-12


def test_criterion_11_segment_determinism(tmp_path, two_object_scene):
    data = tmp_path / "data"
    write_scene(two_object_scene, data)
    config = PipelineConfig(resize=None, channels=16, source="oracle",
                            noise_angle=10.0, rng_seed=7)
    run_segment(config, data, data, tmp_path / "a")
    run_segment(config, data, data, tmp_path / "b")
    names_a = sorted(p.name for p in (tmp_path / "a").iterdir())
    names_b = sorted(p.name for p in (tmp_path / "b").iterdir())
    identical = names_a == names_b and all(
        (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names_a
    )
    report(11, "byte-identical reruns", identical,
           f"{len(names_a)} output files compared bytewise")
    assert identical
