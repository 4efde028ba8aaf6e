"""
Netpbm Repository

Binary PPM (P6) for RGB images and PGM (P5) for label maps, maxval 255.
"""

from pathlib import Path
from typing import Tuple

import numpy as np

from app.core.exceptions import NetpbmFormatError
from app.repositories.base import BaseRepository, PathLike
from app.schemas.image import RgbImage

_WHITESPACE = b" \t\n\r\v\f"


def _parse_header(payload: bytes, magic: bytes, source: str) -> Tuple[int, int, int]:
    """
    Parse "<magic> <width> <height> <maxval><single whitespace>".

    Returns:
        (width, height, payload offset)
    """
    if payload[:2] != magic:
        raise NetpbmFormatError(f"{source}: expected magic {magic.decode()} but found {payload[:2]!r}")
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(payload) and payload[pos:pos + 1] in (b" ", b"\t", b"\n", b"\r", b"\v", b"\f"):
            pos += 1
        if pos < len(payload) and payload[pos:pos + 1] == b"#":
            while pos < len(payload) and payload[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(payload) and payload[pos] not in _WHITESPACE and payload[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise NetpbmFormatError(f"{source}: truncated header")
        token = payload[start:pos]
        if not token.isdigit():
            raise NetpbmFormatError(f"{source}: malformed header field {token!r}")
        tokens.append(int(token))
    if pos >= len(payload) or payload[pos] not in _WHITESPACE:
        raise NetpbmFormatError(f"{source}: header must end with a single whitespace byte")
    width, height, maxval = tokens
    if width < 1 or height < 1:
        raise NetpbmFormatError(f"{source}: width and height must be >= 1, got {width}x{height}")
    if maxval != 255:
        raise NetpbmFormatError(f"{source}: only maxval 255 is supported, found {maxval}")
    return width, height, pos + 1


class NetpbmRepository(BaseRepository):
    """Reads and writes images and label maps."""

    def write_ppm(self, image: RgbImage, path: PathLike) -> Path:
        header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
        return self.write_bytes(path, header + np.ascontiguousarray(image.data).tobytes())

    def read_ppm(self, path: PathLike) -> RgbImage:
        payload = self.read_bytes(path)
        width, height, offset = _parse_header(payload, b"P6", str(path))
        expected = width * height * 3
        body = payload[offset:]
        if len(body) < expected:
            raise NetpbmFormatError(f"{path}: truncated payload, expected {expected} bytes, found {len(body)}")
        data = np.frombuffer(body[:expected], dtype=np.uint8).reshape(height, width, 3)
        return RgbImage(data=data)

    def write_label_pgm(self, labels: np.ndarray, path: PathLike) -> Path:
        labels = np.asarray(labels)
        if labels.ndim != 2:
            raise NetpbmFormatError(f"label map must be 2-D, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() > 255):
            raise NetpbmFormatError("label values must fit in one byte (0..255)")
        height, width = labels.shape
        header = f"P5\n{width} {height}\n255\n".encode("ascii")
        return self.write_bytes(path, header + labels.astype(np.uint8).tobytes())

    def read_label_pgm(self, path: PathLike) -> np.ndarray:
        payload = self.read_bytes(path)
        width, height, offset = _parse_header(payload, b"P5", str(path))
        expected = width * height
        body = payload[offset:]
        if len(body) < expected:
            raise NetpbmFormatError(f"{path}: truncated payload, expected {expected} bytes, found {len(body)}")
        return np.frombuffer(body[:expected], dtype=np.uint8).reshape(height, width).astype(np.int64)


_default = NetpbmRepository()


def write_ppm(image: RgbImage, path: PathLike) -> Path:
    return _default.write_ppm(image, path)


def read_ppm(path: PathLike) -> RgbImage:
    return _default.read_ppm(path)


def write_label_pgm(labels: np.ndarray, path: PathLike) -> Path:
    return _default.write_label_pgm(labels, path)


def read_label_pgm(path: PathLike) -> np.ndarray:
    return _default.read_label_pgm(path)
