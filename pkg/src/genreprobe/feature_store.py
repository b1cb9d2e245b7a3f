"""Bit-exact on-disk cache of feature matrices (.gpf files).

Layout, all little-endian:

    magic   4 bytes  b"GPF1"
    version u32      1
    model_id u16 byte length + UTF-8 bytes
    layer_index u16
    dim         u32
    num_frames  u32
    stride_ms   u32
    payload     num_frames * dim float32, row-major
    crc32       u32 of the payload bytes

One file per (clip, model, layer):
``<root>/<model_id>/layer<k>/<clip_id>.gpf``. Writers stage to a temp file in
the same directory and rename, so concurrent writers of distinct files are
safe and readers never observe a partial file.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .encoders import FeatureMatrix
from .errors import FormatError, InputError, IntegrityError, TruncatedError

MAGIC = b"GPF1"
VERSION = 1


def feature_path(root: str | Path, model_id: str, layer_index: int,
                 clip_id: str) -> Path:
    return Path(root) / model_id / f"layer{layer_index}" / f"{clip_id}.gpf"


def write_features(matrix: FeatureMatrix, path: str | Path) -> None:
    values = np.ascontiguousarray(matrix.values, dtype="<f4")
    if values.ndim != 2:
        raise InputError(f"feature matrix must be 2-D, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise InputError(
            f"refusing to cache non-finite features for clip {matrix.clip_id!r}"
        )
    model_id = matrix.model_id.encode("utf-8")
    if len(model_id) > 0xFFFF:
        raise InputError("model_id too long")

    frames, dim = values.shape
    header = MAGIC + struct.pack(
        f"<IH{len(model_id)}sHIII",
        VERSION, len(model_id), model_id,
        matrix.layer_index, dim, frames, matrix.stride_ms,
    )
    payload = values.tobytes()
    crc = struct.pack("<I", zlib.crc32(payload))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(header)
            fh.write(payload)
            fh.write(crc)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def read_features(path: str | Path, clip_id: str | None = None) -> FeatureMatrix:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 8:
        raise TruncatedError(f"{path}: shorter than the fixed header")
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")

    pos = 8
    try:
        (id_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        if len(raw) < pos + id_len:
            raise TruncatedError(f"{path}: header ends mid model_id")
        model_id = raw[pos : pos + id_len].decode("utf-8")
        pos += id_len
        layer_index, dim, frames, stride_ms = struct.unpack_from("<HIII", raw, pos)
        pos += 14
    except struct.error as exc:
        raise TruncatedError(f"{path}: header truncated") from exc

    payload_len = frames * dim * 4
    if len(raw) < pos + payload_len + 4:
        raise TruncatedError(
            f"{path}: header declares {frames}x{dim} frames "
            f"({payload_len} bytes) but only {len(raw) - pos - 4} remain"
        )
    payload = raw[pos : pos + payload_len]
    (stored_crc,) = struct.unpack_from("<I", raw, pos + payload_len)
    actual_crc = zlib.crc32(payload)
    if stored_crc != actual_crc:
        raise IntegrityError(
            f"{path}: CRC mismatch (stored {stored_crc:#010x}, "
            f"computed {actual_crc:#010x})"
        )

    values = np.frombuffer(payload, dtype="<f4").reshape(frames, dim).copy()
    return FeatureMatrix(
        clip_id=clip_id if clip_id is not None else path.stem,
        model_id=model_id,
        layer_index=layer_index,
        values=values,
        stride_ms=stride_ms,
    )


class StoreFeatureSource:
    """Clip-id keyed reads from a feature root (the precomputed backend)."""

    def __init__(self, root: str | Path, model_id: str, layer_index: int):
        self.root = Path(root)
        self.model_id = model_id
        self.layer_index = layer_index

    def path_for(self, clip_id: str) -> Path:
        return feature_path(self.root, self.model_id, self.layer_index, clip_id)

    def load(self, clip_id: str) -> FeatureMatrix:
        path = self.path_for(clip_id)
        if not path.is_file():
            raise InputError(
                f"missing features for clip {clip_id!r}: {path} does not exist"
            )
        return read_features(path, clip_id=clip_id)


class DictFeatureSource:
    """In-memory feature source, mostly for tests and synthetic runs."""

    def __init__(self, matrices: dict[str, FeatureMatrix], model_id: str = "dict",
                 layer_index: int = 0):
        self._matrices = matrices
        self.model_id = model_id
        self.layer_index = layer_index

    def load(self, clip_id: str) -> FeatureMatrix:
        try:
            return self._matrices[clip_id]
        except KeyError:
            raise InputError(f"missing features for clip {clip_id!r}") from None
