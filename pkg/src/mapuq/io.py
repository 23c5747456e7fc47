"""Image file formats.

``GRD1``: 8-byte magic ``GRDIMG01``, height and width as little-endian uint64,
then ``height * width`` little-endian float64 values in row-major order.

PGM (binary ``P5``) with 8- or 16-bit samples.  The linear map between stored
integers and intensities is kept in a JSON sidecar ``<file>.json`` holding
``{"min": ..., "max": ...}``.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .operators import as_image

GRD_MAGIC = b"GRDIMG01"
_HEADER = struct.Struct("<8sQQ")


def write_grd(path, image):
    img = as_image(image)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GRD_MAGIC, h, w))
        fh.write(np.ascontiguousarray(img, dtype="<f8").tobytes())


def read_grd(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise InvalidInputError(f"{path}: truncated GRD1 header")
    magic, h, w = _HEADER.unpack_from(data)
    if magic != GRD_MAGIC:
        raise InvalidInputError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * h * w
    if h < 1 or w < 1 or len(data) != expected:
        raise InvalidInputError(f"{path}: payload size does not match {h}x{w}")
    arr = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(h, w)
    return as_image(arr.astype(np.float64))


def _sidecar(path):
    p = Path(path)
    return p.with_name(p.name + ".json")


def write_pgm(path, image, bits=8):
    """Write ``image`` as binary PGM, scaling ``[min, max]`` onto the full integer range."""
    if bits not in (8, 16):
        raise InvalidInputError("PGM depth must be 8 or 16 bits")
    img = as_image(image)
    lo, hi = float(img.min()), float(img.max())
    maxval = 255 if bits == 8 else 65535
    span = hi - lo
    scaled = np.zeros_like(img) if span == 0 else (img - lo) / span
    ints = np.rint(scaled * maxval)
    dtype = np.uint8 if bits == 8 else ">u2"  # 16-bit PGM samples are big-endian
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(ints.astype(dtype).tobytes())
    _sidecar(path).write_text(json.dumps({"min": lo, "max": hi}))


def _pgm_tokens(data):
    """Yield header tokens and the offset just past the last one."""
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise InvalidInputError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path):
    """Read a P5 PGM; intensities are restored from the sidecar when present."""
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data)
    if tokens[0] != b"P5":
        raise InvalidInputError(f"{path}: only binary P5 PGM is supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval < 256:
        raw = np.frombuffer(data, dtype=np.uint8, count=h * w, offset=offset)
    else:
        raw = np.frombuffer(data, dtype=">u2", count=h * w, offset=offset)
    img = raw.reshape(h, w).astype(np.float64) / maxval
    side = _sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text())
        img = meta["min"] + img * (meta["max"] - meta["min"])
    return img


def read_image(path):
    """Dispatch on suffix: ``.pgm`` or GRD1 (anything else)."""
    if str(path).lower().endswith(".pgm"):
        return read_pgm(path)
    return read_grd(path)


def write_image(path, image):
    if str(path).lower().endswith(".pgm"):
        write_pgm(path, image, bits=16)
    else:
        write_grd(path, image)


def load_observation(path):
    """Load an observation: ``.npy`` (real or complex) or a real image file."""
    if str(path).lower().endswith(".npy"):
        arr = np.load(path, allow_pickle=False)
        if arr.ndim != 2 or not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"{path}: observation must be a finite 2-D array")
        return arr
    return read_image(path)


def save_observation(path, obs):
    obs = np.asarray(obs)
    is_npy = str(path).lower().endswith(".npy")
    if np.iscomplexobj(obs) and not is_npy:
        raise InvalidInputError("complex observations must be saved as .npy")
    if is_npy:
        np.save(path, obs, allow_pickle=False)
    else:
        write_image(path, obs)
