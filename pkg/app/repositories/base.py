"""
Base Repository

Common file-access helpers shared by all repositories.
"""

import os
import tempfile
from pathlib import Path
from typing import Optional, Union

from app.core.exceptions import DataIOError

PathLike = Union[str, Path]


class BaseRepository:
    """
    Base repository class providing path resolution and safe reads/writes.

    Usage:
        class ManifestRepository(BaseRepository):
            def read(self, path): ...
    """

    def __init__(self, root: Optional[PathLike] = None):
        """
        Initialize repository.

        Args:
            root: directory that relative paths are resolved against
        """
        self.root = Path(root) if root is not None else None

    def resolve(self, path: PathLike) -> Path:
        path = Path(path)
        if self.root is not None and not path.is_absolute():
            return self.root / path
        return path

    def require_file(self, path: PathLike) -> Path:
        """
        Resolve `path` and make sure it is a readable file.

        Raises:
            DataIOError: file does not exist
        """
        resolved = self.resolve(path)
        if not resolved.is_file():
            raise DataIOError(f"File not found: {resolved}")
        return resolved

    def read_bytes(self, path: PathLike) -> bytes:
        resolved = self.require_file(path)
        try:
            return resolved.read_bytes()
        except OSError as e:
            raise DataIOError(f"Could not read {resolved}: {e}")

    def write_bytes(self, path: PathLike, payload: bytes) -> Path:
        """
        Write atomically: a temp file in the same directory is renamed over
        the destination, so readers never see a half-written file.
        """
        resolved = self.resolve(path)
        try:
            resolved.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp_name = tempfile.mkstemp(dir=resolved.parent, prefix=f".{resolved.name}.")
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
            os.replace(tmp_name, resolved)
        except OSError as e:
            raise DataIOError(f"Could not write {resolved}: {e}")
        return resolved

    def write_text(self, path: PathLike, text: str) -> Path:
        return self.write_bytes(path, text.encode("utf-8"))

    def read_text(self, path: PathLike) -> str:
        return self.read_bytes(path).decode("utf-8")
