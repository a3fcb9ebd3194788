"""Binary weight files.

Layout, all integers little-endian::

    b"SPBP" | u32 version (=1) | u64 header length | UTF-8 JSON header | f32 payload

The header lists the network config and every tensor's name and shape in
payload order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import NetworkConfig, SpbpNetwork

MAGIC = b"SPBP"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


class WeightFileError(ValueError):
    pass


def encode(net: SpbpNetwork) -> bytes:
    header = {
        "config": net.cfg.to_dict(),
        "dtype": "f32",
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in net.params.items()],
    }
    head = json.dumps(header, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(v, dtype="<f4").tobytes() for v in net.params.values())
    return _PREFIX.pack(MAGIC, VERSION, len(head)) + head + payload


def decode(data: bytes) -> SpbpNetwork:
    if len(data) < _PREFIX.size:
        raise WeightFileError("truncated weight file")
    magic, version, head_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise WeightFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise WeightFileError(f"unsupported weight file version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFileError(f"corrupt header: {exc}") from exc
    if header.get("dtype") != "f32":
        raise WeightFileError(f"unsupported dtype {header.get('dtype')!r}")
    try:
        cfg = NetworkConfig(**header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightFileError(f"bad network config in header: {exc}") from exc
    payload = memoryview(data)[start + head_len:]
    expected = sum(int(np.prod(t["shape"])) for t in header["tensors"]) * 4
    if len(payload) != expected:
        raise WeightFileError(f"payload is {len(payload)} bytes, header describes {expected}")
    params, offset = {}, 0
    for t in header["tensors"]:
        n = int(np.prod(t["shape"]))
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=offset)
        params[t["name"]] = arr.reshape(t["shape"]).astype(np.float32)
        offset += 4 * n
    try:
        return SpbpNetwork(cfg, params)
    except ValueError as exc:
        raise WeightFileError(f"weights do not match config: {exc}") from exc


def save_weights(net: SpbpNetwork, path) -> None:
    Path(path).write_bytes(encode(net))


def load_weights(path) -> SpbpNetwork:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such weight file: {path}")
    return decode(path.read_bytes())
