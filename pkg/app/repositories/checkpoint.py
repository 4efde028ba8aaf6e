"""
Checkpoint Repository

Little-endian binary tensor container:

    magic   8 bytes  b"UDACKPT\\0"
    version u32
    count   u32
    per tensor: rank u32, dims u32 * rank, float32 payload
"""

import struct
from pathlib import Path
from typing import List, Sequence

import numpy as np

from app.core.exceptions import CheckpointFormatError
from app.repositories.base import BaseRepository, PathLike

MAGIC = b"UDACKPT\x00"
VERSION = 1


class CheckpointRepository(BaseRepository):
    """Saves and loads ordered float32 tensor lists."""

    def encode(self, tensors: Sequence[np.ndarray]) -> bytes:
        chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
        for tensor in tensors:
            arr = np.ascontiguousarray(tensor, dtype="<f4")
            chunks.append(struct.pack("<I", arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
            chunks.append(arr.tobytes())
        return b"".join(chunks)

    def decode(self, payload: bytes, source: str = "checkpoint") -> List[np.ndarray]:
        view = memoryview(payload)
        pos = 0

        def take(size: int, what: str) -> memoryview:
            nonlocal pos
            if pos + size > len(view):
                raise CheckpointFormatError(f"{source}: truncated while reading {what}")
            chunk = view[pos:pos + size]
            pos += size
            return chunk

        magic = bytes(take(len(MAGIC), "magic"))
        if magic != MAGIC:
            raise CheckpointFormatError(f"{source}: bad magic, expected {MAGIC!r} but found {magic!r}")
        version, count = struct.unpack("<II", take(8, "header"))
        if version != VERSION:
            raise CheckpointFormatError(f"{source}: unsupported version, expected {VERSION} but found {version}")

        tensors = []
        for index in range(count):
            (rank,) = struct.unpack("<I", take(4, f"rank of tensor {index}"))
            dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of tensor {index}"))
            size = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(take(4 * size, f"payload of tensor {index}"), dtype="<f4")
            tensors.append(data.reshape(dims).astype(np.float32))
        if pos != len(view):
            raise CheckpointFormatError(f"{source}: {len(view) - pos} trailing bytes after {count} tensors")
        return tensors

    def save(self, tensors: Sequence[np.ndarray], path: PathLike) -> Path:
        return self.write_bytes(path, self.encode(tensors))

    def load(self, path: PathLike) -> List[np.ndarray]:
        return self.decode(self.read_bytes(path), str(path))
