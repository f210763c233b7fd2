"""Two-branch encoder / single-decoder feature network and foreground head.

Each encoder branch runs four blocks of two 3x3 convolutions (conv -> group
norm -> relu) followed by 2x2 max pooling.  The two bottleneck encodings are
concatenated and decoded with four up-blocks (bilinear upsample, concatenation
of same-resolution skip features from both branches, two convolutions).  A
1x1 head maps decoder features to the C-channel pixel embeddings; another 1x1
head produces foreground logits from the embeddings.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .grid import as_grid, conv2d, group_norm, maxpool2, relu, sigmoid, upsample2_bilinear
from .io_formats import ParamManifest, read_params, write_params

DEFAULT_ENC_CHANNELS = (16, 32, 64, 128)
DEFAULT_DEC_CHANNELS = (128, 64, 32, 32)
DEFAULT_EMBED_DIM = 32
GROUP_NORM_EPS = 1e-5


def _norm_groups(channels):
    return min(8, channels)


@dataclass
class YNetParams:
    enc_channels: tuple
    dec_channels: tuple
    embed_dim: int
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.enc_channels) != len(self.dec_channels):
            raise ShapeError("encoder and decoder must have the same block count")
        for ch in tuple(self.enc_channels) + tuple(self.dec_channels):
            if ch % _norm_groups(ch):
                raise ShapeError(f"channel count {ch} not divisible by its norm groups")

    @property
    def depth(self):
        return len(self.enc_channels)


@dataclass
class ForegroundMask:
    logits: np.ndarray  # (H, W, 1)
    mask: np.ndarray  # (H, W, 1), 1.0 exactly where logit > 0


def _conv_layer_names(prefix, cin, cout):
    return [
        (f"{prefix}.kernel", (3, 3, cin, cout)),
        (f"{prefix}.bias", (cout,)),
        (f"{prefix}.gamma", (cout,)),
        (f"{prefix}.beta", (cout,)),
    ]


def _layer_plan(enc_channels, dec_channels, embed_dim, in_rgb=3, in_flow=2):
    plan = []
    for branch, cin0 in (("rgb", in_rgb), ("flow", in_flow)):
        cin = cin0
        for b, cout in enumerate(enc_channels):
            for c in range(2):
                plan += _conv_layer_names(f"{branch}.b{b}.c{c}", cin, cout)
                cin = cout
    cin = 2 * enc_channels[-1]
    for b, cout in enumerate(dec_channels):
        skip = enc_channels[len(enc_channels) - 1 - b]
        cin = cin + 2 * skip
        for c in range(2):
            plan += _conv_layer_names(f"dec.b{b}.c{c}", cin, cout)
            cin = cout
    plan += [("embed.kernel", (1, 1, dec_channels[-1], embed_dim)), ("embed.bias", (embed_dim,))]
    plan += [("fg.kernel", (1, 1, embed_dim, 1)), ("fg.bias", (1,))]
    return plan


def init_ynet_params(
    rng,
    enc_channels=DEFAULT_ENC_CHANNELS,
    dec_channels=DEFAULT_DEC_CHANNELS,
    embed_dim=DEFAULT_EMBED_DIM,
    scale=0.1,
):
    """Fabricate random parameters (He-style scaled normals, gamma=1, beta=0)."""
    params = YNetParams(tuple(enc_channels), tuple(dec_channels), int(embed_dim))
    for name, shape in _layer_plan(params.enc_channels, params.dec_channels, params.embed_dim):
        if name.endswith(".kernel"):
            fan_in = int(np.prod(shape[:3]))
            params.tensors[name] = rng.normal(0.0, scale / np.sqrt(fan_in), size=shape)
        elif name.endswith(".gamma"):
            params.tensors[name] = np.ones(shape)
        else:
            params.tensors[name] = np.zeros(shape)
    return params


def zero_ynet_params(
    enc_channels=DEFAULT_ENC_CHANNELS,
    dec_channels=DEFAULT_DEC_CHANNELS,
    embed_dim=DEFAULT_EMBED_DIM,
):
    params = YNetParams(tuple(enc_channels), tuple(dec_channels), int(embed_dim))
    for name, shape in _layer_plan(params.enc_channels, params.dec_channels, params.embed_dim):
        params.tensors[name] = np.zeros(shape)
    return params


def save_ynet_params(path, params):
    manifest = ParamManifest([(n, params.tensors[n].shape) for n in params.tensors])
    return write_params(path, manifest, params.tensors)


def load_ynet_params(source):
    """Rebuild YNetParams from a container; schedule is inferred from shapes."""
    _, tensors = read_params(source)
    enc = []
    b = 0
    while f"rgb.b{b}.c0.kernel" in tensors:
        enc.append(tensors[f"rgb.b{b}.c0.kernel"].shape[3])
        b += 1
    dec = []
    b = 0
    while f"dec.b{b}.c0.kernel" in tensors:
        dec.append(tensors[f"dec.b{b}.c0.kernel"].shape[3])
        b += 1
    if not enc or not dec or "embed.kernel" not in tensors:
        raise ShapeError("container does not hold a complete parameter set")
    embed_dim = tensors["embed.kernel"].shape[3]
    params = YNetParams(tuple(enc), tuple(dec), int(embed_dim))
    params.tensors = tensors
    return params


def _conv_gn_relu(x, t, prefix, cout):
    x = conv2d(x, t[f"{prefix}.kernel"], t[f"{prefix}.bias"])
    x = group_norm(x, _norm_groups(cout), t[f"{prefix}.gamma"], t[f"{prefix}.beta"], GROUP_NORM_EPS)
    return relu(x)


def _encode_branch(x, params, branch):
    t = params.tensors
    skips = []
    for b, cout in enumerate(params.enc_channels):
        for c in range(2):
            x = _conv_gn_relu(x, t, f"{branch}.b{b}.c{c}", cout)
        skips.append(x)
        x = maxpool2(x)
    return x, skips


def ynet_forward(rgb, flow, params):
    """Run both encoder branches and the shared decoder; returns the
    (H, W, C) pixel embedding map."""
    rgb = as_grid(rgb, channels=3)
    flow = as_grid(flow, channels=2)
    if rgb.shape[:2] != flow.shape[:2]:
        raise ShapeError(f"rgb and flow dimensions differ: {rgb.shape} vs {flow.shape}")
    h, w = rgb.shape[:2]
    factor = 2 ** params.depth
    if h % factor or w % factor:
        raise ShapeError(f"input dimensions must be divisible by {factor}, got {h}x{w}")

    enc_rgb, skips_rgb = _encode_branch(rgb, params, "rgb")
    enc_flow, skips_flow = _encode_branch(flow, params, "flow")
    x = np.concatenate([enc_rgb, enc_flow], axis=2)

    t = params.tensors
    for b, cout in enumerate(params.dec_channels):
        x = upsample2_bilinear(x)
        skip = params.depth - 1 - b
        x = np.concatenate([x, skips_rgb[skip], skips_flow[skip]], axis=2)
        for c in range(2):
            x = _conv_gn_relu(x, t, f"dec.b{b}.c{c}", cout)

    return conv2d(x, t["embed.kernel"], t["embed.bias"])


def foreground_predict(embeddings, params):
    """1x1 convolution head over the embeddings; mask is 1 exactly where the
    logit is positive (a logit of 0 sits on the 0.5 sigmoid tie and counts as
    background)."""
    t = params.tensors
    logits = conv2d(as_grid(embeddings), t["fg.kernel"], t["fg.bias"])
    mask = (logits > 0.0).astype(np.float64)
    return ForegroundMask(logits=logits, mask=mask)


def foreground_probability(fg):
    return sigmoid(fg.logits)
