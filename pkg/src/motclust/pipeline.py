"""End-to-end orchestration: frames and flows in, temporally consistent
multi-object label masks and reports out.

Per frame the pipeline produces pixel embeddings (network forward pass or
ground-truth-derived oracle embeddings), a foreground mask, and link masks to
the previous frame; the trajectory recurrence streams over the sequence, and
trajectories are clustered per fixed-length window of their ending frame.
Cluster identities are stitched across windows by thresholded Hungarian
matching on mean distance.  Outputs are staged and renamed so failures leave
no partial output directory behind.

File conventions (all indices zero-based, %04d):
    frame_0000.pgm    grayscale frames (replicated to 3 channels for the net)
    labels_0000.pgm   ground-truth label maps (oracle mode only)
    forward_0000.flo  flow from frame t to t+1, for t = 0 .. T-2
    backward_0001.flo flow from frame t to t-1, for t = 1 .. T-1
    label_0000.pgm    output object-id maps
    report.jsonl      one JSON record per window plus a summary record
"""

import json
import os
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cluster import VMFConfig, cluster_embeddings, match_windows
from .embedding import LossConfig
from .errors import ConfigError
from .grid import resize_bilinear
from .io_formats import read_flo, read_pgm, write_pgm
from .metrics import aggregate_records, evaluate_video, format_record
from .ptrnn import finalize_all, init_ptrnn_params, ptrnn_init, ptrnn_step
from .synth import oracle_embeddings
from .trajectory import FlowPair, link_mask, round_half_down, source_coords
from .ynet import foreground_predict, load_ynet_params, ynet_forward


@dataclass
class PipelineConfig:
    resize: tuple = (224, 400)  # (height, width) or None to keep input size
    channels: int = 32
    variant: str = "conv"
    vmf: VMFConfig = field(default_factory=VMFConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    window: int = 5
    match_threshold: float = 0.2
    source: str = "oracle"  # "oracle" or a parameter container path
    noise_angle: float = 10.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.resize is not None:
            h, w = self.resize
            if h % 16 or w % 16:
                raise ConfigError(f"resize dimensions must be divisible by 16, got {h}x{w}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if not 0.0 < self.match_threshold <= 1.0:
            raise ConfigError(f"match threshold must lie in (0, 1], got {self.match_threshold}")


def _parse_value(raw):
    low = raw.strip().lower()
    if low in ("none", "null"):
        return None
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw.strip()


def parse_config_text(text):
    """Parse `key = value` lines ('#' comments); repeated keys collect into a
    list."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        for sep in ("=", ":"):
            if sep in body:
                key, _, raw = body.partition(sep)
                break
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        value = _parse_value(raw)
        if key in out:
            if not isinstance(out[key], list):
                out[key] = [out[key]]
            out[key].append(value)
        else:
            out[key] = value
    return out


def config_from_mapping(mapping):
    """Build a PipelineConfig from parsed key-value text plus defaults."""
    cfg = PipelineConfig()
    vmf_kwargs = {}
    kwargs = {}
    for key, value in mapping.items():
        if key == "resize":
            if value is None:
                kwargs["resize"] = None
            else:
                parts = str(value).lower().split("x")
                if len(parts) != 2:
                    raise ConfigError(f"resize must look like 224x400 or none, got {value!r}")
                kwargs["resize"] = (int(parts[0]), int(parts[1]))
        elif key in ("channels", "variant", "window", "match_threshold", "source", "noise_angle"):
            kwargs[key] = value
        elif key == "seed":
            kwargs["rng_seed"] = int(value)
        elif key in ("kappa", "n_seeds", "seed_min_dist", "tol", "max_iter", "merge_dist"):
            vmf_kwargs[key] = value
        else:
            raise ConfigError(f"unknown pipeline config key {key!r}")
    if vmf_kwargs or "rng_seed" in kwargs:
        vmf_kwargs.setdefault("rng_seed", kwargs.get("rng_seed", cfg.vmf.rng_seed))
        kwargs["vmf"] = replace(cfg.vmf, **vmf_kwargs)
    return replace(cfg, **kwargs)


def load_pipeline_config(path):
    return config_from_mapping(parse_config_text(Path(path).read_text()))


def _numbered(directory, prefix, suffix):
    files = sorted(p for p in Path(directory).iterdir()
                   if p.name.startswith(prefix) and p.name.endswith(suffix))
    return files


def _require(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"missing input file: {path}")
    return path


def _resize_nearest(grid, out_h, out_w):
    h, w = grid.shape[:2]
    rows = np.minimum((np.arange(out_h) * (h / out_h)).astype(np.int64), h - 1)
    cols = np.minimum((np.arange(out_w) * (w / out_w)).astype(np.int64), w - 1)
    return grid[rows][:, cols]


def _load_inputs(config, frames_dir, flows_dir):
    frame_files = _numbered(frames_dir, "frame_", ".pgm")
    if not frame_files:
        raise FileNotFoundError(f"no frame_*.pgm files in {frames_dir}")
    t_count = len(frame_files)
    frames = [read_pgm(p) for p in frame_files]
    labels = None
    if config.source == "oracle":
        label_files = _numbered(frames_dir, "labels_", ".pgm")
        if len(label_files) != t_count:
            raise FileNotFoundError(
                f"oracle mode needs one labels_*.pgm per frame in {frames_dir} "
                f"(found {len(label_files)} for {t_count} frames)"
            )
        labels = [read_pgm(p) for p in label_files]
    pairs = []
    for t in range(t_count - 1):
        fwd = read_flo(_require(Path(flows_dir) / f"forward_{t:04d}.flo"))
        bwd = read_flo(_require(Path(flows_dir) / f"backward_{t + 1:04d}.flo"))
        pairs.append(FlowPair(forward=fwd, backward=bwd))

    if config.resize is not None:
        th, tw = config.resize
        h, w = frames[0].shape[:2]
        if (h, w) != (th, tw):
            sy, sx = th / h, tw / w
            frames = [resize_bilinear(f, th, tw) for f in frames]
            if labels is not None:
                labels = [_resize_nearest(m, th, tw) for m in labels]
            scaled = []
            for p in pairs:
                fwd = resize_bilinear(p.forward, th, tw) * np.array([sx, sy])
                bwd = resize_bilinear(p.backward, th, tw) * np.array([sx, sy])
                scaled.append(FlowPair(forward=fwd, backward=bwd))
            pairs = scaled
    return frames, labels, pairs


def _embeddings_and_masks(config, frames, labels, pairs):
    if config.source == "oracle":
        x_maps = oracle_embeddings(labels, config.channels, config.noise_angle, config.rng_seed)
        fg_masks = [(m > 0).astype(np.float64) for m in labels]
        return x_maps, fg_masks
    params = load_ynet_params(config.source)
    h, w = frames[0].shape[:2]
    if h % 16 or w % 16:
        raise ConfigError(f"network mode needs dimensions divisible by 16, got {h}x{w}")
    x_maps, fg_masks = [], []
    zero_flow = np.zeros((h, w, 2))
    for t, frame in enumerate(frames):
        rgb = np.repeat(frame / 255.0, 3, axis=2)
        flow = pairs[t].forward if t < len(pairs) else (pairs[-1].backward * -1.0 if pairs else zero_flow)
        emb = ynet_forward(rgb, flow, params)
        x_maps.append(emb)
        fg_masks.append(foreground_predict(emb, params).mask)
    return x_maps, fg_masks


@dataclass
class SegmentResult:
    label_maps: list  # per-frame (H, W, 1) object-id grids
    report: list  # JSON-serializable records
    entries: list  # finalized trajectory embeddings


def run_segment_arrays(config, x_maps, fg_masks, pairs):
    """Core segmentation on in-memory inputs; returns a SegmentResult."""
    t_count = len(x_maps)
    h, w = np.asarray(x_maps[0]).shape[:2]
    rng = np.random.default_rng(config.rng_seed)
    params = init_ptrnn_params(rng, config.channels, config.variant, zero_scm=True)

    serial_maps = np.full((t_count, h, w), -1, dtype=np.int64)
    state = ptrnn_init(x_maps[0], fg_masks[0], params)
    fg0 = np.asarray(fg_masks[0])[:, :, 0] >= 0.5
    serial_maps[0][fg0] = np.arange(int(fg0.sum()))
    next_serial = int(fg0.sum())

    ended_by_window = {}

    def stash(entries):
        for e in entries:
            ended_by_window.setdefault(e.end_frame // config.window, []).append(e)

    for t in range(1, t_count):
        lm = link_mask(pairs[t - 1], fg_masks[t - 1], fg_masks[t], frame=t)
        state, ended, _ = ptrnn_step(state, x_maps[t], pairs[t - 1], lm, fg_masks[t], params)
        stash(ended)
        # carry discrete trajectory serials along the links
        fg = np.asarray(fg_masks[t])[:, :, 0] >= 0.5
        src_cols, src_rows = source_coords(pairs[t - 1])
        rs_r = round_half_down(src_rows)
        rs_c = round_half_down(src_cols)
        inb = (rs_r >= 0) & (rs_r < h) & (rs_c >= 0) & (rs_c < w)
        inherited = np.where(inb, serial_maps[t - 1][np.clip(rs_r, 0, h - 1), np.clip(rs_c, 0, w - 1)], -1)
        linked = (lm.grid >= 0.5) & (inherited >= 0)
        cur = serial_maps[t]
        cur[linked] = inherited[linked]
        fresh = fg & ~linked
        cur[fresh] = np.arange(next_serial, next_serial + int(fresh.sum()))
        next_serial += int(fresh.sum())
    final_entries, _ = finalize_all(state, x_maps[-1], fg_masks[-1], params)
    stash(final_entries)

    serial_to_object = {}
    prev_means, prev_ids = [], []
    next_id = 1
    report = []
    all_entries = []
    n_windows = (t_count + config.window - 1) // config.window
    for widx in range(n_windows):
        entries = ended_by_window.get(widx, [])
        all_entries.extend(entries)
        record = {
            "window": widx,
            "frames": [widx * config.window, min((widx + 1) * config.window, t_count) - 1],
            "trajectories": len(entries),
        }
        if entries:
            emb = np.stack([e.embedding for e in entries])
            result = cluster_embeddings(emb, config.vmf)
            ids, next_id = match_windows(
                prev_means, prev_ids, result.means, config.match_threshold, next_id
            )
            for e, a in zip(entries, result.assignments):
                serial = serial_maps[e.end_frame][e.end_pixel]
                serial_to_object[int(serial)] = ids[a]
            prev_means, prev_ids = result.means, ids
            record["clusters"] = result.k
            record["ids"] = ids
        else:
            record["clusters"] = 0
            record["ids"] = []
        report.append(record)

    label_maps = []
    for t in range(t_count):
        out = np.zeros((h, w), dtype=np.float64)
        serials = serial_maps[t]
        for i, j in zip(*np.nonzero(serials >= 0)):
            out[i, j] = serial_to_object.get(int(serials[i, j]), 0)
        label_maps.append(out[:, :, None])

    object_ids = sorted({v for v in serial_to_object.values()})
    report.append({"type": "summary", "frames": t_count, "object_ids": object_ids})
    return SegmentResult(label_maps=label_maps, report=report, entries=all_entries)


def run_segment(config, frames_dir, flows_dir, out_dir):
    """Full file-to-file segmentation; output directory is populated
    atomically (staging directory renamed on success)."""
    frames, labels, pairs = _load_inputs(config, frames_dir, flows_dir)
    x_maps, fg_masks = _embeddings_and_masks(config, frames, labels, pairs)
    if x_maps[0].shape[2] != config.channels:
        # network mode: the parameter container owns the embedding width
        config = replace(config, channels=x_maps[0].shape[2])

    out_dir = Path(out_dir)
    staging = out_dir.with_name(out_dir.name + ".staging")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    try:
        result = run_segment_arrays(config, x_maps, fg_masks, pairs)
        for t, lab in enumerate(result.label_maps):
            write_pgm(lab, staging / f"label_{t:04d}.pgm")
        with open(staging / "report.jsonl", "w") as f:
            for record in result.report:
                f.write(json.dumps(record, sort_keys=True) + "\n")
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if out_dir.exists():
        shutil.rmtree(out_dir)
    os.replace(staging, out_dir)
    return result


def _video_dirs(gt_dir, pred_dir):
    gt_dir, pred_dir = Path(gt_dir), Path(pred_dir)
    subdirs = sorted(p.name for p in gt_dir.iterdir() if p.is_dir())
    if subdirs:
        return [(name, gt_dir / name, pred_dir / name) for name in subdirs]
    return [("video", gt_dir, pred_dir)]


def _read_mask_dir(directory):
    files = sorted(Path(directory).glob("*.pgm"))
    if not files:
        raise FileNotFoundError(f"no .pgm files in {directory}")
    return [read_pgm(p) for p in files]


def run_eval(gt_dir, pred_dir):
    """Per-video and aggregate metric records; returns (records, lines)."""
    videos = _video_dirs(gt_dir, pred_dir)
    records = {}
    lines = []
    for name, gdir, pdir in videos:
        gt = _read_mask_dir(gdir)
        pred = _read_mask_dir(pdir)
        if len(gt) != len(pred):
            raise ValueError(f"{name}: frame counts differ ({len(gt)} gt vs {len(pred)} pred)")
        records[name] = evaluate_video(gt, pred)
        lines.append(format_record(name, records[name]))
    agg = aggregate_records(list(records.values()))
    lines.append(format_record("aggregate", agg))
    return records, lines
