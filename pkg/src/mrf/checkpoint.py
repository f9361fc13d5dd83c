"""Versioned binary checkpoint container.

Layout: magic b"MRF1", then per named parameter: uint32 LE name byte length,
utf-8 name bytes, uint32 LE rank, uint32 LE dims, little-endian float64
payload in C order. Parameter order is preserved on round-trip.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MRF1"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, params: dict[str, np.ndarray]) -> None:
    path = Path(path)
    chunks = [MAGIC]
    for name, arr in params.items():
        a = np.asarray(arr, dtype=np.float64)  # tobytes(order="C") handles layout
        name_b = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<I", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}I", *a.shape))
        chunks.append(a.astype("<f8").tobytes(order="C"))
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}, expected {MAGIC!r}")
    out: dict[str, np.ndarray] = {}
    off = 4
    n = len(buf)
    while off < n:
        if off + 4 > n:
            raise CheckpointError(f"{path}: truncated name length at byte {off}")
        (name_len,) = struct.unpack_from("<I", buf, off)
        off += 4
        if off + name_len + 4 > n:
            raise CheckpointError(f"{path}: truncated entry at byte {off}")
        name = buf[off:off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", buf, off)
        off += 4
        if off + 4 * rank > n:
            raise CheckpointError(f"{path}: truncated dims for {name!r}")
        dims = struct.unpack_from(f"<{rank}I", buf, off)
        off += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        nbytes = 8 * count
        if off + nbytes > n:
            raise CheckpointError(f"{path}: truncated payload for {name!r}")
        arr = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(dims)
        out[name] = arr.astype(np.float64)
        off += nbytes
    return out
