"""Named-array checkpoint container.

One file: a UTF-8 text manifest followed by a raw little-endian payload::

    FINGERMOTION-CKPT
    format_version: 1
    config: {...json...}
    meta: {...json...}
    array: enc.fc0.w dtype=f4 shape=42,64,64 offset=0 nbytes=688128
    ...
    payload_bytes: 5879288
    end
    <payload>

Offsets are relative to the first payload byte. Model weights are stored as
32-bit floats; ``dtype="f8"`` keeps 64-bit values for exact training resume.
"""
import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = "FINGERMOTION-CKPT"
FORMAT_VERSION = 1
_DTYPES = {"f4": "<f4", "f8": "<f8"}


def save_checkpoint(arrays, config, path, meta=None, dtype="f4"):
    """Write ``{name: ndarray}`` plus a JSON-able ``config`` echo."""
    if dtype not in _DTYPES:
        raise CheckpointError(f"unsupported dtype {dtype!r}")
    lines = [MAGIC, f"format_version: {FORMAT_VERSION}",
             f"config: {json.dumps(config, sort_keys=True)}",
             f"meta: {json.dumps(meta or {}, sort_keys=True)}"]
    blobs, offset = [], 0
    for name, arr in arrays.items():
        if any(c.isspace() for c in name):
            raise CheckpointError(f"array name {name!r} contains whitespace")
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        shape = ",".join(str(int(n)) for n in np.shape(arr))
        lines.append(f"array: {name} dtype={dtype} shape={shape} offset={offset} nbytes={len(raw)}")
        blobs.append(raw)
        offset += len(raw)
    lines += [f"payload_bytes: {offset}", "end"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for b in blobs:
            fh.write(b)


def read_checkpoint(path):
    """Return ``(arrays, config, meta)`` without validating against a model."""
    data = Path(path).read_bytes()
    if not data.startswith((MAGIC + "\n").encode()):
        raise CheckpointError(f"{path}: not a checkpoint file")
    pos = len(MAGIC) + 1
    header = {}
    entries = []
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError(f"{path}: manifest not terminated")
        line = data[pos:nl].decode("utf-8")
        pos = nl + 1
        if line == "end":
            break
        key, _, val = line.partition(": ")
        if key == "array":
            name, *fields = val.split(" ")
            kv = dict(f.split("=", 1) for f in fields)
            entries.append((name, kv))
        else:
            header[key] = val
    version = header.get("format_version")
    if version != str(FORMAT_VERSION):
        raise CheckpointError(f"{path}: unsupported format version {version!r}")
    payload = data[pos:]
    expected = int(header.get("payload_bytes", -1))
    if len(payload) != expected:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, manifest says {expected}")
    arrays = {}
    for name, kv in entries:
        dtype = kv.get("dtype")
        if dtype not in _DTYPES:
            raise CheckpointError(f"{path}: array {name!r} has unknown dtype {dtype!r}")
        shape = tuple(int(s) for s in kv["shape"].split(",")) if kv["shape"] else ()
        off, nbytes = int(kv["offset"]), int(kv["nbytes"])
        item = np.dtype(_DTYPES[dtype]).itemsize
        if int(np.prod(shape)) * item != nbytes:
            raise CheckpointError(f"{path}: array {name!r} shape {shape} does not match {nbytes} bytes")
        if off + nbytes > len(payload):
            raise CheckpointError(f"{path}: array {name!r} runs past the end of the payload")
        arr = np.frombuffer(payload, dtype=_DTYPES[dtype], count=nbytes // item, offset=off)
        arrays[name] = arr.reshape(shape).astype(np.float64)
    return arrays, json.loads(header.get("config", "{}")), json.loads(header.get("meta", "{}"))


def load_checkpoint(path):
    """``(arrays, config)``; see :func:`read_checkpoint` for the manifest metadata."""
    arrays, config, _ = read_checkpoint(path)
    return arrays, config


def save_model(model, path, meta=None, dtype="f4", extra=None):
    arrays = dict(model.params)
    arrays.update({f"buffer.{k}": v for k, v in model.buffers.items()})
    if extra:
        arrays.update(extra)
    meta = dict(meta or {})
    meta.setdefault("normalize", model.cfg.normalize)
    meta.setdefault("units", "raw")
    save_checkpoint(arrays, model.cfg.to_dict(), path, meta, dtype)


def load_model(path):
    """Rebuild a :class:`~fingermotion.model.Model`; shapes are checked against its config."""
    from .model import Model, ModelConfig, param_shapes

    arrays, cfg_d, meta = read_checkpoint(path)
    cfg = ModelConfig.from_dict(cfg_d)
    shapes = param_shapes(cfg)
    params = {}
    for name, shape in shapes.items():
        if name not in arrays:
            raise CheckpointError(f"{path}: missing array {name!r}")
        if arrays[name].shape != tuple(shape):
            raise CheckpointError(f"{path}: array {name!r} has shape {arrays[name].shape}, "
                                  f"config needs {tuple(shape)}")
        params[name] = arrays[name].copy()
    buffers = {k[len("buffer."):]: v.copy() for k, v in arrays.items() if k.startswith("buffer.")}
    model = Model(cfg, params=params, buffers=buffers or None)
    extra = {k: v for k, v in arrays.items() if k not in shapes and not k.startswith("buffer.")}
    return model, meta, extra
