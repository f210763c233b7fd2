"""Flow-consistency linking of pixels into foreground trajectories, and the
foreground-consistent warp that carries per-pixel state along those links.

Flow vectors are (u, v) = (delta column, delta row) in pixels, matching the
.flo convention.  The backward flow of the later frame addresses the source
pixel of each link: source = target + backward.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .grid import as_grid, bilinear_sample_map

CONSISTENCY_SLOPE = 0.01
CONSISTENCY_OFFSET = 0.5


@dataclass(frozen=True)
class FlowPair:
    """Forward flow of frame t-1 and backward flow of frame t, both (H, W, 2)."""

    forward: np.ndarray
    backward: np.ndarray

    def __post_init__(self):
        f = as_grid(self.forward, channels=2)
        b = as_grid(self.backward, channels=2)
        if f.shape != b.shape:
            raise ShapeError(f"flow shapes differ: {f.shape} vs {b.shape}")
        object.__setattr__(self, "forward", f)
        object.__setattr__(self, "backward", b)

    @property
    def shape(self):
        return self.forward.shape[:2]


@dataclass(frozen=True)
class LinkMask:
    """Binary (H, W) mask: 1 where the pixel of frame t links back to a
    foreground pixel of frame t-1 under mutually consistent flow."""

    grid: np.ndarray
    frame: int


def flow_consistent(f, b):
    """True iff forward and backward displacements are mutual inverses within
    the magnitude-proportional tolerance band."""
    f = np.asarray(f, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lhs = np.sum((f + b) ** 2)
    rhs = CONSISTENCY_SLOPE * (np.sum(f**2) + np.sum(b**2)) + CONSISTENCY_OFFSET
    return bool(lhs <= rhs)


def flow_consistent_map(forward_at_source, backward):
    """Vectorized consistency test over (H, W, 2) fields."""
    s = forward_at_source + backward
    lhs = np.sum(s**2, axis=-1)
    rhs = (
        CONSISTENCY_SLOPE
        * (np.sum(forward_at_source**2, axis=-1) + np.sum(backward**2, axis=-1))
        + CONSISTENCY_OFFSET
    )
    return lhs <= rhs


def source_coords(pair):
    """Per-target source coordinates (cols, rows) implied by the backward flow."""
    h, w = pair.shape
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    return cols + pair.backward[:, :, 0], rows + pair.backward[:, :, 1]


def round_half_down(x):
    """Round to nearest integer, ties toward negative infinity."""
    return np.ceil(np.asarray(x) - 0.5).astype(np.int64)


def link_mask(pair, fg_prev, fg_cur, frame=0):
    """Compute the binary link mask for the transition into frame `frame`.

    A target pixel is linked iff it is foreground, the warped previous
    foreground mask is >= 0.5 at its source, and the forward flow sampled at
    the source is consistent with its backward flow.
    """
    fg_prev = as_grid(fg_prev, channels=1)
    fg_cur = as_grid(fg_cur, channels=1)
    if fg_prev.shape[:2] != pair.shape or fg_cur.shape[:2] != pair.shape:
        raise ShapeError("mask and flow dimensions differ")
    src_cols, src_rows = source_coords(pair)
    warped_fg = bilinear_sample_map(fg_prev, src_cols, src_rows)[:, :, 0]
    fwd_at_src = bilinear_sample_map(pair.forward, src_cols, src_rows)
    consistent = flow_consistent_map(fwd_at_src, pair.backward)
    linked = (fg_cur[:, :, 0] >= 0.5) & (warped_fg >= 0.5) & consistent
    return LinkMask(grid=linked.astype(np.float64), frame=frame)


def warp_g(values, pair, mask):
    """Gather per-pixel values along trajectory links; zero where unlinked."""
    values = as_grid(values)
    if values.shape[:2] != pair.shape or mask.grid.shape != pair.shape:
        raise ShapeError("value grid, flows, and link mask dimensions differ")
    src_cols, src_rows = source_coords(pair)
    warped = bilinear_sample_map(values, src_cols, src_rows)
    return warped * mask.grid[:, :, None]


@dataclass(frozen=True)
class Trajectory:
    """Chain of (frame, row, col) points linked across consecutive frames."""

    points: tuple

    @property
    def length(self):
        return len(self.points)

    @property
    def start(self):
        return self.points[0]

    @property
    def end(self):
        return self.points[-1]


def enumerate_trajectories(fg_masks, pairs):
    """Explicitly enumerate foreground trajectories over a frame sequence.

    Discrete identity: the source of each linked target is the lattice pixel
    nearest its backward-flow source location (ties round toward negative).
    When two targets claim the same source, both chains continue and share
    their prefix; with injective flows the result partitions the foreground
    pixels of every frame.

    Returns trajectories sorted by (end frame, end row, end col).
    """
    masks = [as_grid(m, channels=1) for m in fg_masks]
    t_count = len(masks)
    if t_count < 1:
        raise ShapeError("need at least one frame")
    if len(pairs) != t_count - 1:
        raise ShapeError(f"expected {t_count - 1} flow pairs, got {len(pairs)}")
    h, w = masks[0].shape[:2]

    done = []
    open_chains = {}
    for i, j in zip(*np.nonzero(masks[0][:, :, 0] >= 0.5)):
        open_chains[(int(i), int(j))] = [(0, int(i), int(j))]

    for t in range(1, t_count):
        lm = link_mask(pairs[t - 1], masks[t - 1], masks[t], frame=t)
        src_cols, src_rows = source_coords(pairs[t - 1])
        rs_rows = round_half_down(src_rows)
        rs_cols = round_half_down(src_cols)
        new_chains = {}
        claimed = set()
        for i, j in zip(*np.nonzero(masks[t][:, :, 0] >= 0.5)):
            q = (int(i), int(j))
            pred = (int(rs_rows[q]), int(rs_cols[q]))
            if lm.grid[q] >= 0.5 and pred in open_chains:
                new_chains[q] = open_chains[pred] + [(t, q[0], q[1])]
                claimed.add(pred)
            else:
                new_chains[q] = [(t, q[0], q[1])]
        for p, chain in open_chains.items():
            if p not in claimed:
                done.append(chain)
        open_chains = new_chains

    done.extend(open_chains.values())
    done.sort(key=lambda c: c[-1])
    return [Trajectory(points=tuple(c)) for c in done]
