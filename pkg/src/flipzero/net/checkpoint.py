"""Versioned, self-describing checkpoint container.

Layout: 4-byte magic, u32 format version, u32 header length, UTF-8 JSON
header, then raw little-endian tensor bytes in manifest order.  The header
carries the network config, caller metadata, and a manifest of tensor
names/shapes/dtypes, so a stream is loadable without out-of-band knowledge
and any mismatch is detected before constructing parameters.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import NetConfig, NetParams, tensor_shapes

MAGIC = b"FZCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Corrupt, truncated, or incompatible checkpoint stream."""


def save_checkpoint(params: NetParams, metadata: dict | None = None) -> bytes:
    manifest = []
    blobs = []
    for kind, table in (("param", params.tensors), ("stat", params.stats)):
        for name in sorted(table):
            arr = np.ascontiguousarray(table[name])
            little = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            manifest.append(
                {"name": name, "kind": kind, "shape": list(arr.shape), "dtype": str(arr.dtype)}
            )
            blobs.append(little.tobytes())
    header = json.dumps(
        {
            "format_version": FORMAT_VERSION,
            "config": params.config.to_dict(),
            "metadata": metadata or {},
            "manifest": manifest,
        }
    ).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", FORMAT_VERSION, len(header))
    out += header
    for blob in blobs:
        out += blob
    return bytes(out)


def load_checkpoint(
    data: bytes, expect_config: NetConfig | None = None
) -> tuple[NetParams, dict]:
    if len(data) < 12 or data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint stream (bad magic)")
    version, header_len = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    if len(data) < 12 + header_len:
        raise CheckpointError("truncated checkpoint (header incomplete)")
    try:
        header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header: {exc}") from None
    config = NetConfig.from_dict(header["config"])
    if expect_config is not None and config != expect_config:
        raise CheckpointError(
            f"shape manifest mismatch: stream built for {config.to_dict()}, "
            f"expected {expect_config.to_dict()}"
        )
    tensor_spec, stat_spec = tensor_shapes(config)
    expected = {("param", k): v for k, v in tensor_spec.items()}
    expected.update({("stat", k): v for k, v in stat_spec.items()})

    tensors: dict[str, np.ndarray] = {}
    stats: dict[str, np.ndarray] = {}
    offset = 12 + header_len
    seen = set()
    for entry in header["manifest"]:
        name, kind = entry["name"], entry["kind"]
        shape = tuple(entry["shape"])
        want = expected.get((kind, name))
        if want is None or shape != want:
            raise CheckpointError(f"shape manifest mismatch on {name}: {shape} vs {want}")
        dtype = np.dtype(entry["dtype"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        if offset + nbytes > len(data):
            raise CheckpointError(f"truncated checkpoint (tensor {name} incomplete)")
        arr = np.frombuffer(data[offset : offset + nbytes], dtype=dtype.newbyteorder("<"))
        arr = arr.astype(dtype, copy=True).reshape(shape)
        (tensors if kind == "param" else stats)[name] = arr
        seen.add((kind, name))
        offset += nbytes
    missing = set(expected) - seen
    if missing:
        raise CheckpointError(f"manifest missing tensors: {sorted(missing)}")
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes after tensors")
    return NetParams(config, tensors, stats), header["metadata"]


def save_checkpoint_file(path: str | Path, params: NetParams, metadata: dict | None = None) -> None:
    Path(path).write_bytes(save_checkpoint(params, metadata))


def load_checkpoint_file(
    path: str | Path, expect_config: NetConfig | None = None
) -> tuple[NetParams, dict]:
    return load_checkpoint(Path(path).read_bytes(), expect_config)
