"""Bit-exact codecs: Middlebury .flo flow fields, binary PGM masks / label
maps, and a self-describing float32 parameter container.

All payloads are little-endian float32 (or raw bytes for PGM); in-memory
arrays are float64.  decode(encode(x)) is bitwise exact for float32
representable inputs.
"""

import io
import os

import numpy as np

from .errors import FormatError, ShapeError
from .grid import as_grid

FLO_MAGIC = 202021.25  # float32 "PIEH"

PARAMS_MAGIC = "NETPARAMS"
PARAMS_VERSION = 1


class ParamManifest:
    """Ordered (name, shape) entries describing a parameter container."""

    def __init__(self, entries, version=PARAMS_VERSION):
        names = [n for n, _ in entries]
        if len(set(names)) != len(names):
            raise ValueError("manifest names must be unique")
        for name, shape in entries:
            if not name or "," in name or "\n" in name:
                raise ValueError(f"invalid tensor name {name!r}")
            if any(int(d) < 1 for d in shape):
                raise ValueError(f"manifest shape dimensions must be >= 1: {shape}")
        self.entries = [(n, tuple(int(d) for d in s)) for n, s in entries]
        self.version = int(version)

    def element_count(self, name):
        for n, shape in self.entries:
            if n == name:
                return int(np.prod(shape))
        raise KeyError(name)

    def __eq__(self, other):
        return (
            isinstance(other, ParamManifest)
            and self.entries == other.entries
            and self.version == other.version
        )


def _as_stream(source):
    if isinstance(source, (bytes, bytearray)):
        return io.BytesIO(source)
    if isinstance(source, (str, os.PathLike)):
        return open(source, "rb")
    return source


def write_flo(flow, path=None):
    """Encode an (H, W, 2) flow grid; writes to `path` or returns bytes."""
    flow = as_grid(flow, channels=2)
    h, w = flow.shape[:2]
    buf = io.BytesIO()
    buf.write(np.float32(FLO_MAGIC).tobytes())
    buf.write(np.int32(w).tobytes())
    buf.write(np.int32(h).tobytes())
    buf.write(flow.astype("<f4").tobytes())
    data = buf.getvalue()
    if path is None:
        return data
    with open(path, "wb") as f:
        f.write(data)
    return None


def read_flo(source):
    """Decode a .flo stream (path, bytes, or file object) into an (H, W, 2) grid."""
    with _as_stream(source) as f:
        head = f.read(12)
        if len(head) < 12:
            raise FormatError("truncated .flo header")
        magic = np.frombuffer(head, "<f4", count=1)[0]
        if magic != np.float32(FLO_MAGIC):
            raise FormatError(f"bad .flo magic {magic!r}")
        w = int(np.frombuffer(head, "<i4", count=1, offset=4)[0])
        h = int(np.frombuffer(head, "<i4", count=1, offset=8)[0])
        if w < 1 or h < 1:
            raise FormatError(f"bad .flo dimensions {w}x{h}")
        payload = f.read(h * w * 2 * 4)
        if len(payload) != h * w * 2 * 4:
            raise FormatError("truncated .flo payload")
    return np.frombuffer(payload, "<f4").reshape(h, w, 2).astype(np.float64)


def write_pgm(mask, path=None):
    """Encode a single-channel integer-valued grid as binary PGM (maxval 255)."""
    mask = as_grid(mask, channels=1)
    vals = mask[:, :, 0]
    if np.any(vals < 0) or np.any(vals > 255):
        raise ValueError("PGM values must lie in [0, 255]")
    if not np.allclose(vals, np.round(vals)):
        raise ValueError("PGM values must be integer-valued")
    h, w = vals.shape
    data = f"P5\n{w} {h}\n255\n".encode("ascii") + vals.astype(np.uint8).tobytes()
    if path is None:
        return data
    with open(path, "wb") as f:
        f.write(data)
    return None


def read_pgm(source):
    """Decode a binary PGM stream into an (H, W, 1) grid of integer values."""
    with _as_stream(source) as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise FormatError("not a binary PGM (missing P5 signature)")
    # header: P5, width, height, maxval as whitespace-separated tokens
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("malformed PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        w, h, maxval = (int(t) for t in fields)
    except ValueError as e:
        raise FormatError("malformed PGM header") from e
    if maxval != 255:
        raise FormatError(f"unsupported PGM maxval {maxval}")
    if w < 1 or h < 1:
        raise FormatError(f"bad PGM dimensions {w}x{h}")
    payload = data[pos : pos + w * h]
    if len(payload) != w * h:
        raise FormatError("truncated PGM payload")
    return np.frombuffer(payload, np.uint8).reshape(h, w, 1).astype(np.float64)


def write_params(path, manifest, tensors):
    """Write named float tensors after a UTF-8 manifest block.

    Layout: one header line "NETPARAMS <version>", one "name,d0,d1,..." line
    per entry, a blank separator line, then the concatenated little-endian
    float32 payloads in manifest order.
    """
    lines = [f"{PARAMS_MAGIC} {manifest.version}"]
    payload = bytearray()
    for name, shape in manifest.entries:
        if name not in tensors:
            raise KeyError(name)
        arr = np.asarray(tensors[name], dtype=np.float64)
        if int(np.prod(arr.shape)) != int(np.prod(shape)):
            raise ShapeError(
                f"tensor {name!r} has {arr.size} elements, manifest declares "
                f"{int(np.prod(shape))}"
            )
        lines.append(name + "," + ",".join(str(d) for d in shape))
        payload += arr.reshape(shape).astype("<f4").tobytes()
    data = ("\n".join(lines) + "\n\n").encode("utf-8") + bytes(payload)
    if path is None:
        return data
    with open(path, "wb") as f:
        f.write(data)
    return None


def read_params(source):
    """Read back (manifest, {name: float64 ndarray}) from a parameter container."""
    with _as_stream(source) as f:
        data = f.read()
    sep = data.find(b"\n\n")
    if sep < 0:
        raise FormatError("missing manifest separator")
    try:
        text = data[:sep].decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError("manifest is not valid UTF-8") from e
    lines = text.split("\n")
    head = lines[0].split()
    if len(head) != 2 or head[0] != PARAMS_MAGIC:
        raise FormatError("bad parameter container header")
    try:
        version = int(head[1])
    except ValueError as e:
        raise FormatError("bad parameter container version") from e
    if version != PARAMS_VERSION:
        raise FormatError(f"unsupported parameter container version {version}")
    entries = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) < 2:
            raise FormatError(f"malformed manifest line {line!r}")
        try:
            shape = tuple(int(d) for d in parts[1:])
        except ValueError as e:
            raise FormatError(f"malformed manifest line {line!r}") from e
        entries.append((parts[0], shape))
    try:
        manifest = ParamManifest(entries, version=version)
    except ValueError as e:
        raise FormatError(str(e)) from e
    payload = data[sep + 2 :]
    total = sum(int(np.prod(s)) for _, s in manifest.entries)
    if len(payload) != total * 4:
        raise FormatError(
            f"payload holds {len(payload) // 4} float32 values, manifest declares {total}"
        )
    tensors = {}
    offset = 0
    for name, shape in manifest.entries:
        n = int(np.prod(shape))
        tensors[name] = (
            np.frombuffer(payload, "<f4", count=n, offset=offset * 4)
            .reshape(shape)
            .astype(np.float64)
        )
        offset += n
    return manifest, tensors
