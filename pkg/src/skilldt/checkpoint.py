"""Unified checkpoint container: JSON manifest plus raw array payloads.

Layout (little-endian):

    magic   b"SDTC"
    u32     manifest length in bytes
    bytes   UTF-8 JSON manifest:
            {"meta": {...},
             "sections": {name: {array: {"dtype": "<f4", "shape": [...],
                                         "offset": int}}}}
    bytes   concatenated array payloads (offsets relative to payload start)

Arrays round-trip bit-exactly; metadata must be JSON-serializable.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"SDTC"
_ALLOWED = {"<f4", "<f8", "<i8"}


def write_checkpoint(path, sections: dict[str, dict[str, np.ndarray]], meta: dict) -> None:
    manifest: dict = {"meta": meta, "sections": {}}
    payload = bytearray()
    for sec_name, arrays in sections.items():
        sec_manifest = {}
        for arr_name, arr in arrays.items():
            arr = np.asarray(arr)
            dtype = arr.dtype.newbyteorder("<").str
            if dtype not in _ALLOWED:
                raise FormatError(f"{sec_name}/{arr_name}: unsupported dtype {arr.dtype}")
            sec_manifest[arr_name] = {
                "dtype": dtype,
                "shape": list(arr.shape),
                "offset": len(payload),
            }
            payload += np.ascontiguousarray(arr).astype(dtype).tobytes()
        manifest["sections"][sec_name] = sec_manifest
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(manifest_bytes)))
        f.write(manifest_bytes)
        f.write(bytes(payload))


def read_checkpoint(path) -> tuple[dict[str, dict[str, np.ndarray]], dict]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    (mlen,) = struct.unpack("<I", raw[4:8])
    try:
        manifest = json.loads(raw[8 : 8 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: bad manifest ({e})") from e
    base = 8 + mlen
    sections: dict[str, dict[str, np.ndarray]] = {}
    for sec_name, arrays in manifest["sections"].items():
        out = {}
        for arr_name, info in arrays.items():
            dtype = np.dtype(info["dtype"])
            shape = tuple(info["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = base + info["offset"]
            end = start + count * dtype.itemsize
            if end > len(raw):
                raise FormatError(f"{path}: {sec_name}/{arr_name} payload overruns file")
            out[arr_name] = (
                np.frombuffer(raw, dtype=dtype, count=count, offset=start)
                .reshape(shape)
                .copy()
            )
        sections[sec_name] = out
    return sections, manifest["meta"]
