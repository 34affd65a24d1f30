"""Binary file formats: EGRD grids, EPCD point clouds, ESEG segmentation models.

All multi-byte fields are little-endian. Payloads are row-major with row 0 at
the most negative y.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import FormatError, IoError
from .grid import DynamicMask, Eogm, GridConfig, Ogm, Pose2, Rgm, Sgm

VERSION = 1

KIND_CLASS = 1
KIND_BINARY = 2
KIND_MASS = 3
KIND_PROB = 4

_EGRD_HEADER = struct.Struct("<4sBBIIfd3d")
_EPCD_HEADER = struct.Struct("<4sBId3d")
_ESEG_HEADER = struct.Struct("<4sBII")


class _Reader:
    """Bounds-checked cursor over a byte buffer."""

    def __init__(self, data: bytes, path=None):
        self.data = data
        self.pos = 0
        self.path = path

    def unpack(self, st: struct.Struct, what: str):
        if self.pos + st.size > len(self.data):
            raise FormatError(f"truncated {what}", offset=len(self.data), path=self.path)
        out = st.unpack_from(self.data, self.pos)
        self.pos += st.size
        return out

    def array(self, dtype, count: int, what: str):
        dt = np.dtype(dtype)
        need = dt.itemsize * count
        if self.pos + need > len(self.data):
            raise FormatError(f"truncated {what}", offset=len(self.data), path=self.path)
        out = np.frombuffer(self.data, dtype=dt, count=count, offset=self.pos).copy()
        self.pos += need
        return out

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError("trailing bytes after payload", offset=self.pos, path=self.path)


def _decimal_f32(value: float) -> float:
    # shortest decimal that round-trips through f32, so 0.33 reads back as 0.33
    return float(str(np.float32(value)))


def _check_magic(magic, version, expected, r):
    if magic != expected:
        raise FormatError(f"bad magic {magic!r}, expected {expected!r}", offset=0, path=r.path)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4, path=r.path)


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise FormatError("missing file", path=path) from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc


def write_bytes(path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------------------
# EGRD


@dataclass
class GridFile:
    kind: int
    config: GridConfig
    timestamp: float
    pose: Pose2
    data: np.ndarray


def _masses_f32(cells: np.ndarray) -> np.ndarray:
    """Round mass channels to f32 so that m_o + m_f stays <= 1 after decoding."""
    o = cells[..., 0].astype(np.float32)
    room = 1.0 - o.astype(np.float64)
    room32 = room.astype(np.float32)
    room32 = np.where(room32.astype(np.float64) > room, np.nextafter(room32, np.float32(0)), room32)
    f = np.minimum(cells[..., 1].astype(np.float32), room32)
    return np.stack([o, f], axis=-1).astype("<f4")


def encode_grid(grid) -> bytes:
    """Serialise any grid container to EGRD bytes."""
    if isinstance(grid, Sgm):
        kind, payload = KIND_CLASS, grid.cells.astype("u1")
    elif isinstance(grid, (Rgm, DynamicMask)):
        kind, payload = KIND_BINARY, grid.cells.astype("u1")
    elif isinstance(grid, Eogm):
        kind, payload = KIND_MASS, _masses_f32(grid.cells)
    elif isinstance(grid, Ogm):
        kind, payload = KIND_PROB, grid.cells.astype("<f4")
    else:
        raise TypeError(f"cannot encode {type(grid).__name__} as EGRD")
    cfg = grid.config
    header = _EGRD_HEADER.pack(b"EGRD", VERSION, kind, cfg.width, cfg.height,
                               cfg.resolution, grid.timestamp, *grid.pose.as_tuple())
    return header + np.ascontiguousarray(payload).tobytes()


def decode_grid(data: bytes, path=None) -> GridFile:
    r = _Reader(data, path)
    magic, version, kind, w, h, res, ts, px, py, ph = r.unpack(_EGRD_HEADER, "EGRD header")
    _check_magic(magic, version, b"EGRD", r)
    if w < 1 or h < 1 or not res > 0:
        raise FormatError(f"invalid grid geometry {w}x{h} @ {res}", offset=6, path=path)
    n = w * h
    if kind in (KIND_CLASS, KIND_BINARY):
        payload = r.array("u1", n, "EGRD payload").reshape(h, w)
        limit = 2 if kind == KIND_CLASS else 1
        if payload.size and payload.max() > limit:
            bad = int(np.argmax(payload.ravel() > limit))
            raise FormatError("invalid cell code", offset=_EGRD_HEADER.size + bad, path=path)
    elif kind == KIND_MASS:
        payload = r.array("<f4", 2 * n, "EGRD payload").reshape(h, w, 2)
    elif kind == KIND_PROB:
        payload = r.array("<f4", n, "EGRD payload").reshape(h, w)
    else:
        raise FormatError(f"unknown payload kind {kind}", offset=5, path=path)
    r.finish()
    return GridFile(kind, GridConfig(w, h, _decimal_f32(res)), ts, Pose2(px, py, ph), payload)


def to_grid(gf: GridFile, binary_as=DynamicMask):
    """Build the typed container for a decoded EGRD file."""
    args = (gf.config,)
    kw = dict(pose=gf.pose, timestamp=gf.timestamp)
    if gf.kind == KIND_CLASS:
        return Sgm(*args, gf.data, **kw)
    if gf.kind == KIND_BINARY:
        return binary_as(*args, gf.data, **kw)
    if gf.kind == KIND_MASS:
        return Eogm(*args, gf.data.astype(np.float64), **kw)
    return Ogm(*args, np.clip(gf.data.astype(np.float64), 0.0, 1.0), **kw)


def write_grid(path, grid) -> None:
    write_bytes(path, encode_grid(grid))


def read_grid(path, binary_as=DynamicMask):
    return to_grid(decode_grid(_read_bytes(path), path), binary_as)


def read_grid_file(path) -> GridFile:
    return decode_grid(_read_bytes(path), path)


# ---------------------------------------------------------------------------
# EPCD


def encode_cloud(cloud) -> bytes:
    pts = np.ascontiguousarray(np.asarray(cloud.points).reshape(-1, 3), dtype="<f4")
    header = _EPCD_HEADER.pack(b"EPCD", VERSION, len(pts), cloud.timestamp,
                               *cloud.ego_pose.as_tuple())
    return header + pts.tobytes()


def decode_cloud(data: bytes, path=None):
    from .representation import PointCloud

    r = _Reader(data, path)
    magic, version, count, ts, px, py, ph = r.unpack(_EPCD_HEADER, "EPCD header")
    _check_magic(magic, version, b"EPCD", r)
    pts = r.array("<f4", 3 * count, "EPCD points").reshape(count, 3)
    r.finish()
    return PointCloud(pts.astype(np.float64), ts, Pose2(px, py, ph))


def write_cloud(path, cloud) -> None:
    write_bytes(path, encode_cloud(cloud))


def read_cloud(path):
    return decode_cloud(_read_bytes(path), path)


# ---------------------------------------------------------------------------
# ESEG


def encode_model(model) -> bytes:
    w = np.ascontiguousarray(model.weights, dtype="<f8")
    return _ESEG_HEADER.pack(b"ESEG", VERSION, model.k, len(w)) + w.tobytes()


def decode_model(data: bytes, path=None):
    from .segmentation import SegModel

    r = _Reader(data, path)
    magic, version, k, count = r.unpack(_ESEG_HEADER, "ESEG header")
    _check_magic(magic, version, b"ESEG", r)
    if count != (2 * k + 1) ** 2 * 4 + 1:
        raise FormatError(f"weight count {count} does not match patch half-width {k}",
                          offset=9, path=path)
    w = r.array("<f8", count, "ESEG weights")
    r.finish()
    return SegModel(k, w)


def write_model(path, model) -> None:
    write_bytes(path, encode_model(model))


def read_model(path: Union[str, Path]):
    return decode_model(_read_bytes(path), path)
