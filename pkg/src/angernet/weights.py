"""Portable binary tensor store (format "ANW1").

Layout: magic ``41 4E 57 31``, u32-LE version (=1), u32-LE tensor count,
then per tensor: u16-LE name length, UTF-8 name, u8 rank, rank u32-LE dims,
and the dims-product float32-LE values. A checkpoint file appends a JSON
metadata trailer whose byte offset is stored in the final 8 bytes (u64-LE);
a plain weight file ends right after the last tensor.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import WeightFormatError

MAGIC = b"ANW1"
VERSION = 1


class WeightStore:
    """Ordered mapping of unique tensor names to float32 arrays."""

    def __init__(self):
        self._tensors: dict[str, np.ndarray] = {}

    def add(self, name: str, values: np.ndarray) -> None:
        if name in self._tensors:
            raise WeightFormatError(f"duplicate tensor name: {name}")
        self._tensors[name] = np.asarray(values, dtype=np.float32)

    def __contains__(self, name):
        return name in self._tensors

    def __getitem__(self, name) -> np.ndarray:
        return self._tensors[name]

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()


def encode_store(store: WeightStore, trailer: dict | None = None) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(store))]
    for name, values in store.items():
        encoded_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded_name)))
        parts.append(encoded_name)
        dims = values.shape
        parts.append(struct.pack("<B", len(dims)))
        parts.append(struct.pack(f"<{len(dims)}I", *dims) if dims else b"")
        parts.append(values.astype("<f4", copy=False).tobytes())
    if trailer is not None:
        offset = sum(len(p) for p in parts)
        parts.append(json.dumps(trailer, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        parts.append(struct.pack("<Q", offset))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightFormatError(
                f"truncated file: wanted {n} bytes at offset {self.pos}, "
                f"only {len(self.data) - self.pos} remain"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def decode_store(data: bytes) -> tuple[WeightStore, dict | None]:
    reader = _Reader(data)
    if reader.take(4) != MAGIC:
        raise WeightFormatError("not an ANW1 file (bad magic)")
    version, count = struct.unpack("<II", reader.take(8))
    if version != VERSION:
        raise WeightFormatError(f"unsupported format version {version} (expected {VERSION})")
    store = WeightStore()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", reader.take(2))
        name = reader.take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", reader.take(1))
        dims = struct.unpack(f"<{rank}I", reader.take(4 * rank)) if rank else ()
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = reader.take(4 * n_values)
        store.add(name, np.frombuffer(raw, dtype="<f4").reshape(dims).copy())
    if reader.pos == len(data):
        return store, None
    remaining = len(data) - reader.pos
    if remaining < 9:
        raise WeightFormatError("truncated file: dangling bytes after last tensor")
    (offset,) = struct.unpack("<Q", data[-8:])
    if offset != reader.pos:
        raise WeightFormatError(
            f"trailer offset {offset} does not match end of tensor data {reader.pos}"
        )
    try:
        trailer = json.loads(data[offset:-8].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"unreadable metadata trailer: {exc}") from exc
    return store, trailer


def save_store(store: WeightStore, path, trailer: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_store(store, trailer))


def load_store(path) -> tuple[WeightStore, dict | None]:
    with open(path, "rb") as fh:
        return decode_store(fh.read())
