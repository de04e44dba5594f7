"""Binary checkpoint format.

Layout (little-endian)::

    b"GIGM" | u32 version | u32 header length | JSON header |
    for each tensor: u16 name length | name | u8 ndim | u32 dims... | float64 data
    u32 CRC-32 of everything before it

The header holds the vocabulary, hyperparameters and loss history.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .transformer import Checkpoint, HistoryEntry, ModelParams
from .vocab import Vocabulary

MAGIC = b"GIGM"
VERSION = 1


class CheckpointError(ValueError):
    pass


def checkpoint_bytes(c: Checkpoint) -> bytes:
    header = {
        "vocab": c.vocab.to_json(),
        "params": {k: getattr(c.params, k) for k in c.params.__dataclass_fields__},
        "history": [list(h) for h in c.history],
        "initial_loss": c.initial_loss,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(head)), head, struct.pack("<I", len(c.weights))]
    for name in sorted(c.weights):
        arr = np.ascontiguousarray(c.weights[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(c: Checkpoint, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(c))


def checkpoint_from_bytes(data: bytes) -> Checkpoint:
    if len(data) < 16 or data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint integrity check failed (truncated or corrupt)")
    version, hlen = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    pos = 12
    header = json.loads(body[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    weights = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", body, pos)
            name = body[pos + 2:pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (ndim,) = struct.unpack_from("<B", body, pos)
            shape = struct.unpack_from(f"<{ndim}I", body, pos + 1)
            pos += 1 + 4 * ndim
            size = int(np.prod(shape, dtype=np.int64)) * 8
            weights[name] = np.frombuffer(body[pos:pos + size], dtype="<f8").reshape(shape).astype(np.float64)
            pos += size
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"malformed tensor section: {exc}") from None
    if pos != len(body):
        raise CheckpointError("trailing bytes after tensor section")
    params = ModelParams(**header["params"])
    history = [HistoryEntry(int(e), float(l), float(r)) for e, l, r in header["history"]]
    return Checkpoint(Vocabulary.from_json(header["vocab"]), params, weights, history, header["initial_loss"])


def load_checkpoint(path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes())


def write_training_log(c: Checkpoint, path) -> None:
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "learning_rate"])
        for h in c.history:
            w.writerow([h.epoch, repr(h.loss), repr(h.learning_rate)])
