"""Self-contained binary checkpoints.

Layout (all integers little-endian):

    b"SKG1"                      magic
    u16   format version
    u32   n, n bytes             run configuration as JSON (sorted keys)
    u32   n, n bytes             vocabulary as JSON {"entities": [...], "relations": [...]}
    u32   array count
    per array, in the model's declared order:
        u16 n, n bytes           name (utf-8)
        u8  ndim
        u64 * ndim               shape
        f64 * prod(shape)        data, C order
    32 bytes                     sha256 of everything above

The file depends only on the parameters, so identical training runs give
byte-identical checkpoints.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, build_model
from .kg import TripleStore, Vocabulary

MAGIC = b"SKG1"
VERSION = 1
_DIGEST = 32


class CheckpointError(ValueError):
    pass


class ChecksumError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: RunConfig
    vocab: Vocabulary
    arrays: dict

    def build(self):
        """Rebuild the model; graph models get their edges from the stored arrays."""
        edges = self.arrays.get("edges")
        train = np.asarray(edges, dtype=np.int64).reshape(-1, 3) if edges is not None else ()
        store = TripleStore(self.vocab, train, inverse=self.config.inverse)
        model = build_model(self.config, store)
        model.load_state(self.arrays)
        return model


def _blob(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def encode(config: RunConfig, vocab: Vocabulary, arrays: dict) -> bytes:
    parts = [MAGIC, struct.pack("<H", VERSION)]
    parts.append(_blob(json.dumps(config.as_dict(), sort_keys=True).encode()))
    parts.append(_blob(json.dumps({"entities": vocab.entities, "relations": vocab.relations}).encode()))
    parts.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(a.tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def decode(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC) + 2 + _DIGEST or data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("checkpoint checksum mismatch; the file is corrupt")
    pos = 4
    (version,) = struct.unpack_from("<H", body, pos)
    pos += 2
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise CheckpointError("truncated checkpoint")
        chunk = body[pos : pos + n]
        pos += n
        return chunk

    def blob():
        (n,) = struct.unpack("<I", take(4))
        return take(n)

    cfg_dict = json.loads(blob())
    vocab_dict = json.loads(blob())
    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        name = take(n).decode()
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        size = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).astype(float)
    if pos != len(body):
        raise CheckpointError("trailing bytes after the last array")
    vocab = Vocabulary(vocab_dict["entities"], vocab_dict["relations"], frozen=True)
    return Checkpoint(RunConfig(**cfg_dict), vocab, arrays)


def save(path, model, config: RunConfig, vocab: Vocabulary) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(config, vocab, model.state()))


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode(fh.read())
