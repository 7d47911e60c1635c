"""Weight file container.

Layout::

    b"RKWT"              magic
    uint32 LE            format version
    uint64 LE            header length in bytes
    header               UTF-8 JSON: {"model": config, "params": [{"name", "shape"}, ...]}
    float64 LE blobs     parameters, concatenated in declaration order
"""
from __future__ import annotations

import json
import struct

import numpy as np

from restorekit.nn.models import Model

MAGIC = b"RKWT"
VERSION = 1


class WeightFileError(ValueError):
    pass


def dumps(model: Model) -> bytes:
    params = model.parameters()
    header = {
        "model": model.config_dict(),
        "params": [{"name": name, "shape": list(p.shape)} for name, p in params],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blobs = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for _, p in params)
    return MAGIC + struct.pack("<IQ", VERSION, len(head)) + head + blobs


def loads(data: bytes) -> Model:
    if len(data) < 16 or data[:4] != MAGIC:
        raise WeightFileError("not a weight file (bad magic)")
    version, hlen = struct.unpack("<IQ", data[4:16])
    if version != VERSION:
        raise WeightFileError(f"unsupported weight file version {version}")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFileError(f"corrupt header: {exc}") from exc
    model = Model(header["model"])
    offset = 16 + hlen
    expected = model.named_params()
    if [p["name"] for p in header["params"]] != [name for name, _, _ in expected]:
        raise WeightFileError("parameter list does not match the model config")
    for spec, (name, layer, key) in zip(header["params"], expected):
        shape = tuple(spec["shape"])
        if shape != layer.params[key].shape:
            raise WeightFileError(f"shape mismatch for {name}: {shape} vs {layer.params[key].shape}")
        nbytes = 8 * int(np.prod(shape))
        if offset + nbytes > len(data):
            raise WeightFileError("truncated weight file")
        layer.params[key][...] = np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise WeightFileError("trailing bytes after parameter blobs")
    model.zero_grad()
    return model


def save_weights(model: Model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load_weights(path) -> Model:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise WeightFileError(f"cannot read weights {path}: {exc}") from exc
    return loads(data)
