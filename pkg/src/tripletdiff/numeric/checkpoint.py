"""Binary tensor store: ``DSL1`` magic, u32 version, then named f32 records (little-endian)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DSL1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a DSL1 checkpoint")
    if len(blob) < 8:
        raise CheckpointError("truncated header")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos, out = 8, {}
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + n].decode("utf-8")
            if len(name.encode()) != n:
                raise CheckpointError("truncated record name")
            pos += n
            (rank,) = struct.unpack_from("<I", blob, pos)
            dims = struct.unpack_from(f"<{rank}I", blob, pos + 4)
            pos += 4 + 4 * rank
            size = 4 * int(np.prod(dims, dtype=np.int64))
            if pos + size > len(blob):
                raise CheckpointError(f"truncated payload for {name!r}")
            flat = np.frombuffer(blob, dtype="<f4", count=size // 4, offset=pos).astype(np.float32)
            out[name] = flat.reshape(dims) if rank else np.array(flat[0])
            pos += size
    except struct.error as exc:
        raise CheckpointError("truncated record header") from exc
    return out


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
