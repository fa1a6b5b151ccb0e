"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"NSLS"                      magic
    u32 version                  currently 1
    u32 length, bytes            UTF-8 JSON: model + augmentation config
    u32 count                    number of arrays
    per array, in layout order:
        u16 length, bytes        UTF-8 parameter name
        u8 ndim, u64 * ndim      shape
        f64 * prod(shape)        values, C order

Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .augment import AugmentationConfig
from .model import ModelConfig, parameter_layout

__all__ = ["MAGIC", "FORMAT_VERSION", "CheckpointError", "ConfigMismatchError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"NSLS"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class ConfigMismatchError(ValueError):
    pass


def save_checkpoint(path, params, model_cfg, aug_cfg):
    if aug_cfg.d_in != model_cfg.d_in:
        raise ConfigMismatchError(f"augmentation width {aug_cfg.d_in} != model d_in {model_cfg.d_in}")
    layout = parameter_layout(model_cfg)
    config = json.dumps({"model": model_cfg.to_dict(), "augmentation": aug_cfg.to_dict()}, sort_keys=True).encode()
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(config)), config]
    chunks.append(struct.pack("<I", len(layout)))
    for name, shape in layout:
        arr = np.asarray(params[name], dtype="<f8")
        if arr.shape != tuple(shape):
            raise CheckpointError(f"parameter {name} has shape {arr.shape}, expected {shape}")
        raw = name.encode()
        chunks += [struct.pack("<H", len(raw)), raw, struct.pack("<B", arr.ndim)]
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    """Return ``(params, model_cfg, aug_cfg)``."""
    with open(path, "rb") as fh:
        rd = _Reader(fh.read(), path)
    if rd.take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    (version,) = rd.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    (clen,) = rd.unpack("<I")
    config = json.loads(rd.take(clen).decode())
    model_cfg = ModelConfig.from_dict(config["model"])
    aug_cfg = AugmentationConfig.from_dict(config["augmentation"])
    if aug_cfg.d_in != model_cfg.d_in:
        raise ConfigMismatchError(f"{path}: augmentation width {aug_cfg.d_in} != model d_in {model_cfg.d_in}")
    (count,) = rd.unpack("<I")
    layout = parameter_layout(model_cfg)
    if count != len(layout):
        raise CheckpointError(f"{path}: expected {len(layout)} arrays, found {count}")
    params = {}
    for name, shape in layout:
        (nlen,) = rd.unpack("<H")
        got = rd.take(nlen).decode()
        if got != name:
            raise CheckpointError(f"{path}: expected parameter {name}, found {got}")
        (ndim,) = rd.unpack("<B")
        dims = rd.unpack(f"<{ndim}Q")
        if tuple(dims) != tuple(shape):
            raise CheckpointError(f"{path}: parameter {name} has shape {dims}, expected {shape}")
        size = int(np.prod(dims)) if ndim else 1
        params[name] = np.frombuffer(rd.take(8 * size), dtype="<f8").astype(np.float64).reshape(dims)
    if rd.pos != len(rd.data):
        raise CheckpointError(f"{path}: trailing bytes after last parameter")
    return params, model_cfg, aug_cfg
