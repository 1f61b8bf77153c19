"""Checkpoint files.

Layout::

    b"RGNVCKPT"                  8-byte magic
    uint64 little-endian         length of the JSON header in bytes
    JSON header (utf-8)          schema_version, meta, version, rng_state,
                                 arrays: [{name, group, shape, offset, count}]
    payload                      float64 little-endian values, concatenated

``group`` is one of ``param``, ``buffer`` or ``rms`` (optimizer state);
``offset`` and ``count`` are in elements from the start of the payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .params import ParamStore

MAGIC = b"RGNVCKPT"
SCHEMA_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, store: ParamStore, meta: dict | None = None, rng_state: dict | None = None) -> None:
    arrays, chunks, offset = [], [], 0
    for group, table in (("param", store.params), ("buffer", store.buffers), ("rms", store.rms)):
        for name in table:
            a = np.ascontiguousarray(table[name], dtype="<f8")
            arrays.append({"name": name, "group": group, "shape": list(a.shape),
                           "offset": offset, "count": int(a.size)})
            chunks.append(a.tobytes())
            offset += a.size
    header = json.dumps({"schema_version": SCHEMA_VERSION, "meta": meta or {}, "version": store.version,
                         "rng_state": rng_state, "arrays": arrays}, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[ParamStore, dict, dict | None]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode())
    if header.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(f"{path}: unsupported schema version {header.get('schema_version')}")
    payload = np.frombuffer(raw, dtype="<f8", offset=16 + hlen)
    tables = {"param": {}, "buffer": {}, "rms": {}}
    for spec in header["arrays"]:
        vals = payload[spec["offset"]:spec["offset"] + spec["count"]]
        tables[spec["group"]][spec["name"]] = vals.reshape(spec["shape"]).astype(np.float64)
    store = ParamStore(tables["param"], tables["buffer"])
    for k, v in tables["rms"].items():
        store.rms[k] = v
    store.version = int(header["version"])
    return store, header["meta"], header.get("rng_state")
