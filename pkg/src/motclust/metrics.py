"""Multi-object segmentation metrics: precision / recall / F-score over
optimally assigned spatio-temporal regions, object-count error, and pooled
foreground IoU.

Regions are the spatio-temporal pixel sets of each object id (0 is
background).  Region pairs are scored with P = |g and p| / |p|,
R = |g and p| / |g|, F = 2PR / (P + R), and paired one-to-one by maximizing
total F.  Video-level recall and F average over ground-truth regions and
precision averages over predicted regions, each with zeros for unmatched
regions, which keeps the scores exactly symmetric under swapping the two
labelings.
"""

import json

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ShapeError


def _label_stack(frames):
    arr = [np.asarray(f) for f in frames]
    arr = [a[:, :, 0] if a.ndim == 3 else a for a in arr]
    stack = np.stack(arr).astype(np.int64)
    if np.any(stack < 0):
        raise ValueError("object ids must be nonnegative")
    return stack


def _region_masks(stack):
    ids = [int(i) for i in np.unique(stack) if i != 0]
    return ids, [stack == i for i in ids]


def multi_object_prf(gt_frames, pred_frames):
    """Video-level (precision, recall, f_score) for two labelings."""
    gt = _label_stack(gt_frames)
    pred = _label_stack(pred_frames)
    if gt.shape != pred.shape:
        raise ShapeError(f"labelings differ in shape: {gt.shape} vs {pred.shape}")
    _, gt_masks = _region_masks(gt)
    _, pred_masks = _region_masks(pred)
    n_gt, n_pred = len(gt_masks), len(pred_masks)
    if n_gt == 0 and n_pred == 0:
        return 1.0, 1.0, 1.0
    if n_gt == 0 or n_pred == 0:
        return 0.0, 0.0, 0.0

    p = np.zeros((n_gt, n_pred))
    r = np.zeros((n_gt, n_pred))
    f = np.zeros((n_gt, n_pred))
    for a, g in enumerate(gt_masks):
        gsum = g.sum()
        for b, q in enumerate(pred_masks):
            inter = np.logical_and(g, q).sum()
            p[a, b] = inter / q.sum()
            r[a, b] = inter / gsum
            f[a, b] = 0.0 if inter == 0 else 2 * p[a, b] * r[a, b] / (p[a, b] + r[a, b])

    rows, cols = linear_sum_assignment(-f)
    precision = float(p[rows, cols].sum() / n_pred)
    recall = float(r[rows, cols].sum() / n_gt)
    f_score = float(f[rows, cols].sum() / n_gt)
    return precision, recall, f_score


def delta_obj(gt_frames, pred_frames):
    """Absolute difference between distinct object counts."""
    gt_ids, _ = _region_masks(_label_stack(gt_frames))
    pred_ids, _ = _region_masks(_label_stack(pred_frames))
    return float(abs(len(gt_ids) - len(pred_ids)))


def foreground_iou(gt_masks, pred_masks):
    """Intersection over union of binary masks pooled over all frames; 1 when
    both are empty."""
    gt = _label_stack(gt_masks) > 0
    pred = _label_stack(pred_masks) > 0
    if gt.shape != pred.shape:
        raise ShapeError(f"mask shapes differ: {gt.shape} vs {pred.shape}")
    union = np.logical_or(gt, pred).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(gt, pred).sum() / union)


def evaluate_video(gt_frames, pred_frames):
    """All metrics for one video as a dict."""
    p, r, f = multi_object_prf(gt_frames, pred_frames)
    return {
        "precision": p,
        "recall": r,
        "f_score": f,
        "delta_obj": delta_obj(gt_frames, pred_frames),
        "iou": foreground_iou(gt_frames, pred_frames),
    }


def format_record(name, record):
    """One line-delimited JSON record for a video (or the aggregate)."""
    payload = {"video": name}
    payload.update({k: round(float(v), 6) for k, v in record.items()})
    return json.dumps(payload, sort_keys=True)


def aggregate_records(records):
    """Arithmetic mean of per-video records."""
    keys = ["precision", "recall", "f_score", "delta_obj", "iou"]
    return {k: float(np.mean([r[k] for r in records])) for k in keys}
