"""Synthetic rigid-motion scenes with exact ground-truth flows, masks, and
object labels, plus oracle pixel embeddings for running the pipeline without
a trained network.

Objects translate by integer per-frame velocities, so warping along the
generated flows is lattice-exact.  Later-listed objects draw on top; at
occlusion boundaries the forward/backward fields disagree by construction,
which severs trajectories exactly where the overlap happens.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .trajectory import FlowPair


@dataclass
class ObjectSpec:
    shape: str  # "rectangle" or "disk"
    top: int = 0  # rectangle: top-left corner
    left: int = 0
    height: int = 0
    width: int = 0
    row: int = 0  # disk: center
    col: int = 0
    radius: int = 0
    velocity: tuple = (0, 0)  # (d_col, d_row) per frame, integer
    color: float = 200.0

    def __post_init__(self):
        if self.shape not in ("rectangle", "disk"):
            raise ConfigError(f"unknown object shape {self.shape!r}")
        vx, vy = self.velocity
        if vx != int(vx) or vy != int(vy):
            raise ConfigError(f"velocities must be integer, got {self.velocity}")
        self.velocity = (int(vx), int(vy))
        if self.shape == "rectangle" and (self.height < 1 or self.width < 1):
            raise ConfigError("rectangle must have positive size")
        if self.shape == "disk" and self.radius < 1:
            raise ConfigError("disk must have positive radius")


@dataclass
class SceneSpec:
    height: int
    width: int
    frames: int
    objects: list
    background: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.frames < 1:
            raise ConfigError("need at least one frame")
        if not self.objects:
            raise ConfigError("scene needs at least one object")


@dataclass
class Frame:
    rgb: np.ndarray  # (H, W, 3)
    forward: np.ndarray  # (H, W, 2) flow to the next frame (zeros at the last)
    backward: np.ndarray  # (H, W, 2) flow to the previous frame (zeros at the first)
    fg: np.ndarray  # (H, W, 1) binary foreground
    labels: np.ndarray  # (H, W, 1) object ids, 0 background


@dataclass
class Scene:
    spec: SceneSpec
    frames: list = field(default_factory=list)

    def flow_pairs(self):
        return [
            FlowPair(forward=self.frames[t].forward, backward=self.frames[t + 1].backward)
            for t in range(len(self.frames) - 1)
        ]

    def fg_masks(self):
        return [f.fg for f in self.frames]

    def label_maps(self):
        return [f.labels for f in self.frames]


def _object_mask(obj, t, h, w):
    vx, vy = obj.velocity
    rows, cols = np.mgrid[0:h, 0:w]
    if obj.shape == "rectangle":
        top = obj.top + vy * t
        left = obj.left + vx * t
        mask = (rows >= top) & (rows < top + obj.height) & (cols >= left) & (cols < left + obj.width)
    else:
        cr = obj.row + vy * t
        cc = obj.col + vx * t
        mask = (rows - cr) ** 2 + (cols - cc) ** 2 <= obj.radius**2
    return mask


def generate_scene(spec):
    """Render every frame with exact flows.

    Forward flow at frame t carries the velocity of the topmost object at
    each pixel (background zero); backward flow at frame t carries the
    negated velocity of the topmost object.  Deterministic given the spec.
    """
    h, w = spec.height, spec.width
    frames = []
    for t in range(spec.frames):
        labels = np.zeros((h, w), dtype=np.int64)
        rgb = np.full((h, w), float(spec.background))
        forward = np.zeros((h, w, 2))
        backward = np.zeros((h, w, 2))
        for idx, obj in enumerate(spec.objects):
            mask = _object_mask(obj, t, h, w)
            if t == 0 and not mask.any():
                raise ConfigError(f"object {idx} has zero visible area at frame 0")
            labels[mask] = idx + 1
            rgb[mask] = float(obj.color)
            vx, vy = obj.velocity
            forward[mask] = (vx, vy)
            backward[mask] = (-vx, -vy)
        if t == spec.frames - 1:
            forward[:] = 0.0
        if t == 0:
            backward[:] = 0.0
        frames.append(
            Frame(
                rgb=np.repeat(rgb[:, :, None], 3, axis=2),
                forward=forward,
                backward=backward,
                fg=(labels > 0).astype(np.float64)[:, :, None],
                labels=labels.astype(np.float64)[:, :, None],
            )
        )
    return Scene(spec=spec, frames=frames)


def _perturb_within(rng, base, angle_rad, c):
    if angle_rad == 0.0:
        return base
    g = rng.normal(size=c)
    g -= g @ base * base
    norm = np.linalg.norm(g)
    if norm < 1e-12:
        return base
    u = g / norm
    theta = rng.uniform(0.0, angle_rad)
    return np.cos(theta) * base + np.sin(theta) * u


_OBJECT_FIELDS = {"top", "left", "height", "width", "row", "col", "radius", "color"}


def _parse_object(text):
    parts = text.split()
    if not parts:
        raise ConfigError("empty object description")
    shape = {"rect": "rectangle", "rectangle": "rectangle", "disk": "disk"}.get(parts[0])
    if shape is None:
        raise ConfigError(f"unknown object shape {parts[0]!r}")
    kwargs = {"shape": shape}
    for token in parts[1:]:
        key, _, raw = token.partition("=")
        if key == "vel":
            vx, vy = raw.split(",")
            kwargs["velocity"] = (int(vx), int(vy))
        elif key in _OBJECT_FIELDS:
            kwargs[key] = float(raw) if key == "color" else int(raw)
        else:
            raise ConfigError(f"unknown object field {key!r}")
    return ObjectSpec(**kwargs)


def parse_scene_text(text):
    """Build a SceneSpec from key-value text.

    Scalar keys: height, width, frames, background, seed.  Each `object =`
    line describes one object, e.g.
        object = rectangle top=4 left=2 height=8 width=8 vel=2,0 color=200
        object = disk row=16 col=30 radius=4 vel=-2,0 color=120
    """
    from .pipeline import parse_config_text

    mapping = parse_config_text(text)
    objects_raw = mapping.pop("object", [])
    if not isinstance(objects_raw, list):
        objects_raw = [objects_raw]
    known = {"height", "width", "frames", "background", "seed"}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown scene keys: {sorted(unknown)}")
    return SceneSpec(
        height=int(mapping.get("height", 32)),
        width=int(mapping.get("width", 48)),
        frames=int(mapping.get("frames", 5)),
        background=float(mapping.get("background", 0.0)),
        rng_seed=int(mapping.get("seed", 0)),
        objects=[_parse_object(o) for o in objects_raw],
    )


def write_scene(scene, out_dir):
    """Write a generated scene in the pipeline's file layout: frame_*.pgm,
    labels_*.pgm, forward_*.flo (t -> t+1) and backward_*.flo (t -> t-1)."""
    from pathlib import Path

    from .io_formats import write_flo, write_pgm

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(scene.frames):
        write_pgm(np.round(frame.rgb[:, :, :1]), out / f"frame_{t:04d}.pgm")
        write_pgm(frame.labels, out / f"labels_{t:04d}.pgm")
        if t < len(scene.frames) - 1:
            write_flo(frame.forward, out / f"forward_{t:04d}.flo")
        if t > 0:
            write_flo(frame.backward, out / f"backward_{t:04d}.flo")
    return out


def trajectory_label(entry, label_maps):
    """Supervision label for a finalized trajectory: the frame-level object id
    of its last pixel."""
    lab = np.asarray(label_maps[entry.end_frame])
    lab = lab[:, :, 0] if lab.ndim == 3 else lab
    return int(lab[entry.end_pixel])


def group_by_label(entries, label_maps):
    """Split trajectory embeddings into per-object groups (background id 0
    excluded); returns {object id: (N, C) array}."""
    groups = {}
    for e in entries:
        k = trajectory_label(e, label_maps)
        if k > 0:
            groups.setdefault(k, []).append(e.embedding)
    return {k: np.stack(v) for k, v in sorted(groups.items())}


def oracle_embeddings(label_maps, channels, noise_angle_deg, rng_seed):
    """Per-frame (H, W, C) pixel embeddings derived from ground-truth labels.

    Object k gets the unit basis direction e_{k-1} perturbed per pixel by a
    rotation of at most noise_angle_deg; background pixels get the held-out
    last basis direction.  Requires object count <= channels - 1.
    """
    ids = set()
    for m in label_maps:
        ids.update(int(v) for v in np.unique(np.asarray(m)) if v != 0)
    if ids and max(ids) > channels - 1:
        raise ConfigError(
            f"{max(ids)} objects need at least {max(ids) + 1} channels "
            f"(one held out for background), got {channels}"
        )
    rng = np.random.default_rng(rng_seed)
    angle = np.deg2rad(noise_angle_deg)
    out = []
    for m in label_maps:
        lab = np.asarray(m)
        lab = lab[:, :, 0] if lab.ndim == 3 else lab
        h, w = lab.shape
        emb = np.zeros((h, w, channels))
        for i in range(h):
            for j in range(w):
                k = int(lab[i, j])
                base = np.zeros(channels)
                base[channels - 1 if k == 0 else k - 1] = 1.0
                emb[i, j] = _perturb_within(rng, base, angle, channels)
        out.append(emb)
    return out
