"""Pixel-trajectory recurrence: running weighted sums of pixel embeddings
carried along foreground trajectory links.

State per pixel is the running weighted sum h and running weight total W of
the trajectory currently ending at that pixel (plus a gated memory c for the
convgru variant, and positional accumulators for the spatial coordinate
module).  Each step warps state along the links, computes weights from the
running mean and the new embeddings, and accumulates.  Trajectories end when
no linked pixel in the next frame claims them; their embedding is the
weighted mean h / W, offset by the spatial coordinate module, then unit
normalized.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .grid import as_grid, conv2d, relu, sigmoid
from .io_formats import ParamManifest, read_params, write_params
from .trajectory import round_half_down, source_coords, warp_g

VARIANTS = ("standard", "conv", "convgru")


@dataclass
class PTRNNParams:
    variant: str
    embed_dim: int
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")


def _param_plan(variant, c):
    if variant == "standard":
        plan = [("w_c", (2 * c,)), ("w_w", (c,))]
    elif variant == "conv":
        plan = [("w_c", (3, 3, 2 * c, c)), ("w_w", (3, 3, c, c))]
    else:
        plan = [
            ("w_z", (3, 3, 2 * c, c)),
            ("w_r", (3, 3, 2 * c, c)),
            ("w_chat", (3, 3, 2 * c, c)),
            ("w_w", (3, 3, c, c)),
        ]
    plan += [("scm.fc1.weight", (4, c)), ("scm.fc1.bias", (c,)),
             ("scm.fc2.weight", (c, c)), ("scm.fc2.bias", (c,))]
    return plan


def init_ptrnn_params(rng, embed_dim, variant="conv", scale=0.5, zero_scm=False):
    params = PTRNNParams(variant=variant, embed_dim=int(embed_dim))
    for name, shape in _param_plan(variant, params.embed_dim):
        fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
        params.tensors[name] = rng.normal(0.0, scale / np.sqrt(fan_in), size=shape)
    if zero_scm:
        for name in list(params.tensors):
            if name.startswith("scm."):
                params.tensors[name] = np.zeros_like(params.tensors[name])
    return params


def save_ptrnn_params(path, params):
    manifest = ParamManifest([(n, params.tensors[n].shape) for n in params.tensors])
    return write_params(path, manifest, params.tensors)


def load_ptrnn_params(source, variant):
    _, tensors = read_params(source)
    c = tensors["scm.fc1.weight"].shape[1]
    params = PTRNNParams(variant=variant, embed_dim=int(c))
    params.tensors = tensors
    return params


@dataclass
class PTRNNState:
    h: np.ndarray  # (H, W, C) running weighted sum
    W: np.ndarray  # (H, W, C) running weight total
    c: np.ndarray  # (H, W, C) convgru memory, zeros otherwise
    start_col: np.ndarray  # (H, W)
    start_row: np.ndarray
    sum_col: np.ndarray
    sum_row: np.ndarray
    count: np.ndarray
    live: np.ndarray  # (H, W) bool, foreground at the current frame
    frame: int


@dataclass
class TrajectoryEmbedding:
    embedding: np.ndarray  # unit (C,)
    raw_mean: np.ndarray  # h / W before the coordinate offset and normalization
    end_frame: int
    end_pixel: tuple  # (row, col)
    length: float
    stats: np.ndarray  # (4,) normalized mean position and displacement


def safe_ratio(num, den):
    """Elementwise num / den with 0 / 0 defined as 0 (fresh trajectories)."""
    out = np.zeros_like(num)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return out


def _variant_weights(ratio, x, c_warped, params):
    """Dense per-pixel weights in [0, 1]; returns (w, c_new)."""
    t = params.tensors
    cdim = params.embed_dim
    rx = np.concatenate([ratio, x], axis=2)
    if params.variant == "standard":
        # scalar activation per pixel; broadcast over channels feeds the row
        # map, and the resulting scalar weight is shared by every channel
        hidden = relu(rx @ t["w_c"])
        w_scalar = sigmoid(np.repeat(hidden[:, :, None], cdim, axis=2) @ t["w_w"])
        w = np.repeat(w_scalar[:, :, None], cdim, axis=2)
        return w, np.zeros_like(x)
    if params.variant == "conv":
        hidden = relu(conv2d(rx, t["w_c"]))
        return sigmoid(conv2d(hidden, t["w_w"])), np.zeros_like(x)
    z = sigmoid(conv2d(rx, t["w_z"]))
    r = sigmoid(conv2d(rx, t["w_r"]))
    chat = relu(conv2d(np.concatenate([r * ratio, x], axis=2), t["w_chat"]))
    c_new = (1.0 - z) * c_warped + z * chat
    return sigmoid(conv2d(c_new, t["w_w"])), c_new


def _apply_override(w, override, shape):
    if override is None:
        return w
    return np.broadcast_to(np.asarray(override, dtype=np.float64), shape).copy()


def ptrnn_init(x1, m1, params, weight_override=None):
    """State after the first frame: no history, so the weight inputs see a
    zero running mean."""
    x1 = as_grid(x1, channels=params.embed_dim)
    fg = as_grid(m1, channels=1)[:, :, 0] >= 0.5
    h, w = x1.shape[:2]
    zeros = np.zeros_like(x1)
    wt, c_new = _variant_weights(zeros, x1, zeros, params)
    wt = _apply_override(wt, weight_override, x1.shape)
    m3 = fg[:, :, None]
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    return PTRNNState(
        h=wt * x1 * m3,
        W=wt * m3,
        c=c_new * m3,
        start_col=cols * fg,
        start_row=rows * fg,
        sum_col=cols * fg,
        sum_row=rows * fg,
        count=fg.astype(np.float64),
        live=fg,
        frame=0,
    )


def _stats_vector(state, row, col, img_h, img_w):
    cnt = state.count[row, col]
    half_w = max((img_w - 1) / 2.0, 1.0)
    half_h = max((img_h - 1) / 2.0, 1.0)
    mean_col = state.sum_col[row, col] / cnt
    mean_row = state.sum_row[row, col] / cnt
    return np.array(
        [
            (mean_col - (img_w - 1) / 2.0) / half_w,
            (mean_row - (img_h - 1) / 2.0) / half_h,
            (col - state.start_col[row, col]) / half_w,
            (row - state.start_row[row, col]) / half_h,
        ]
    )


def scm_apply(raw_embedding, stats, params):
    """Add the two-layer positional offset FC2(relu(FC1(stats))) to a raw
    trajectory embedding (applied before normalization)."""
    t = params.tensors
    hidden = relu(stats @ t["scm.fc1.weight"] + t["scm.fc1.bias"])
    return raw_embedding + hidden @ t["scm.fc2.weight"] + t["scm.fc2.bias"]


def _emit(state, row, col, params):
    img_h, img_w = state.live.shape
    raw = state.h[row, col] / state.W[row, col]
    stats = _stats_vector(state, row, col, img_h, img_w)
    vec = scm_apply(raw, stats, params)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None, (state.frame, (row, col), "zero-norm embedding")
    entry = TrajectoryEmbedding(
        embedding=vec / norm,
        raw_mean=raw,
        end_frame=state.frame,
        end_pixel=(int(row), int(col)),
        length=float(state.count[row, col]),
        stats=stats,
    )
    return entry, None


def ptrnn_step(state, xt, pair, link, mt, params, weight_override=None):
    """Advance one frame.

    Finalizes trajectories not claimed by any linked pixel of the new frame
    (reading their pre-warp state), warps the surviving state along the links,
    computes weights from the warped running mean and the new embeddings, and
    accumulates on currently-foreground pixels.

    Returns (new_state, ended, rejected) where `ended` holds finalized
    trajectory embeddings and `rejected` holds (frame, pixel, reason) tuples
    for degenerate ones.
    """
    xt = as_grid(xt, channels=params.embed_dim)
    fg = as_grid(mt, channels=1)[:, :, 0] >= 0.5
    img_h, img_w = xt.shape[:2]
    if pair.shape != (img_h, img_w) or link.grid.shape != (img_h, img_w):
        raise ShapeError("flow pair / link mask dimensions differ from embeddings")
    if state.live.shape != (img_h, img_w):
        raise ShapeError("state dimensions differ from embeddings")

    src_cols, src_rows = source_coords(pair)
    linked = link.grid >= 0.5

    # trajectories whose pixel is claimed by no linked target are finished
    claimed = np.zeros((img_h, img_w), dtype=bool)
    rs_rows = round_half_down(src_rows)[linked]
    rs_cols = round_half_down(src_cols)[linked]
    inb = (rs_rows >= 0) & (rs_rows < img_h) & (rs_cols >= 0) & (rs_cols < img_w)
    claimed[rs_rows[inb], rs_cols[inb]] = True

    ended, rejected = [], []
    for row, col in zip(*np.nonzero(state.live & ~claimed)):
        entry, reject = _emit(state, row, col, params)
        if entry is not None:
            ended.append(entry)
        else:
            rejected.append(reject)

    h_w = warp_g(state.h, pair, link)
    w_w = warp_g(state.W, pair, link)
    c_w = warp_g(state.c, pair, link)
    sums = np.stack([state.sum_col, state.sum_row, state.start_col, state.start_row,
                     state.count], axis=2)
    sums_w = warp_g(sums, pair, link)

    ratio = safe_ratio(h_w, w_w)
    wt, c_new = _variant_weights(ratio, xt, c_w, params)
    wt = _apply_override(wt, weight_override, xt.shape)

    m3 = fg[:, :, None]
    rows, cols = np.mgrid[0:img_h, 0:img_w].astype(np.float64)
    cont = linked & fg
    fresh = fg & ~linked
    new_state = PTRNNState(
        h=(h_w + wt * xt) * m3,
        W=(w_w + wt) * m3,
        c=c_new * m3,
        start_col=np.where(cont, sums_w[:, :, 2], cols * fresh),
        start_row=np.where(cont, sums_w[:, :, 3], rows * fresh),
        sum_col=np.where(cont, sums_w[:, :, 0] + cols, cols * fresh),
        sum_row=np.where(cont, sums_w[:, :, 1] + rows, rows * fresh),
        count=np.where(cont, sums_w[:, :, 4] + 1.0, fresh.astype(np.float64)),
        live=fg,
        frame=state.frame + 1,
    )
    return new_state, ended, rejected


def finalize_all(state, xT, mT, params):
    """Emit every still-live trajectory after the last frame.

    Returns (entries, rejected).
    """
    ended, rejected = [], []
    for row, col in zip(*np.nonzero(state.live)):
        entry, reject = _emit(state, row, col, params)
        if entry is not None:
            ended.append(entry)
        else:
            rejected.append(reject)
    return ended, rejected


def run_ptrnn(x_maps, fg_masks, pairs, params, weight_override=None):
    """Run the recurrence over a whole sequence; convenience wrapper.

    Computes per-transition link masks internally.  Returns (entries,
    rejected) with entries from both mid-sequence endings and the final frame.
    """
    from .trajectory import link_mask

    if len(x_maps) != len(fg_masks):
        raise ShapeError("embedding and mask counts differ")
    if len(pairs) != len(x_maps) - 1:
        raise ShapeError(f"expected {len(x_maps) - 1} flow pairs, got {len(pairs)}")
    state = ptrnn_init(x_maps[0], fg_masks[0], params, weight_override)
    entries, rejected = [], []
    for t in range(1, len(x_maps)):
        lm = link_mask(pairs[t - 1], fg_masks[t - 1], fg_masks[t], frame=t)
        state, ended, rej = ptrnn_step(
            state, x_maps[t], pairs[t - 1], lm, fg_masks[t], params, weight_override
        )
        entries.extend(ended)
        rejected.extend(rej)
    ended, rej = finalize_all(state, x_maps[-1], fg_masks[-1], params)
    entries.extend(ended)
    rejected.extend(rej)
    return entries, rejected
