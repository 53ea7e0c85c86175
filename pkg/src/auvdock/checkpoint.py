"""Versioned binary checkpoints for PolicyParams.

Layout (little-endian)::

    8 bytes   magic  b"AUVDPOL\\0"
    u32       format version
    u32       header length H
    H bytes   UTF-8 JSON header: metadata plus {name, shape, offset} per array
    ...       float64 arrays, row-major, at the recorded offsets

Arrays are named ``w/<key>`` (weights), ``m/<key>`` and ``v/<key>`` (Adam
moments).
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .ppo import PolicyParams

MAGIC = b"AUVDPOL\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def dumps(params: PolicyParams, metadata: dict | None = None) -> bytes:
    arrays = {}
    for prefix, d in (("w", params.weights), ("m", params.adam_m), ("v", params.adam_v)):
        for k in sorted(d):
            arrays[f"{prefix}/{k}"] = np.ascontiguousarray(d[k], dtype="<f8")
    index, offset = [], 0
    for name, a in arrays.items():
        index.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.nbytes
    header = {
        "obs_dim": params.obs_dim,
        "act_dim": params.act_dim,
        "hidden": list(params.hidden),
        "adam_t": params.adam_t,
        "n_updates": params.n_updates,
        "metadata": metadata or {},
        "arrays": index,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    body = b"".join(a.tobytes() for a in arrays.values())
    return MAGIC + struct.pack("<II", VERSION, len(blob)) + blob + body


def loads(data: bytes) -> tuple[PolicyParams, dict]:
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError("not a policy checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, this build reads version {VERSION}")
    try:
        header = json.loads(data[16:16 + hlen])
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    body = memoryview(data)[16 + hlen:]
    groups = {"w": {}, "m": {}, "v": {}}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = entry["offset"] + 8 * count
        if end > len(body):
            raise CheckpointError(f"truncated checkpoint: array {entry['name']} runs past the end")
        arr = np.frombuffer(body[entry["offset"]:end], dtype="<f8").reshape(shape).astype(np.float64)
        prefix, key = entry["name"].split("/", 1)
        groups[prefix][key] = arr
    params = PolicyParams(
        weights=groups["w"],
        obs_dim=header["obs_dim"],
        act_dim=header["act_dim"],
        hidden=tuple(header["hidden"]),
        adam_m=groups["m"],
        adam_v=groups["v"],
        adam_t=header["adam_t"],
        n_updates=header["n_updates"],
    )
    return params, header["metadata"]


def save(path, params: PolicyParams, metadata: dict | None = None) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(params, metadata))
    tmp.replace(path)


def load(path) -> tuple[PolicyParams, dict]:
    return loads(Path(path).read_bytes())
