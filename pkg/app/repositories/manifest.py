"""
Manifest Repository

Dataset manifests are JSON files listing image (and optionally label)
paths relative to the manifest's own directory.
"""

import json
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from app.core.exceptions import ManifestError
from app.repositories.base import BaseRepository, PathLike
from app.repositories.netpbm import NetpbmRepository
from app.schemas.dataset import DatasetManifest, LoadedSplit
from app.schemas.image import RgbImage
from app.utils.helpers import dumps_stable

logger = logging.getLogger(__name__)


class ManifestRepository(BaseRepository):
    """Reads/writes manifests and loads the splits they describe."""

    def __init__(self, root: Optional[PathLike] = None):
        super().__init__(root)
        self.netpbm = NetpbmRepository(root)

    def write_manifest(self, manifest: DatasetManifest, path: PathLike) -> Path:
        return self.write_text(path, dumps_stable(manifest.model_dump(mode="json")))

    def read_manifest(self, path: PathLike, check_files: bool = True) -> DatasetManifest:
        """
        Parse and validate a manifest.

        Raises:
            ManifestError: invalid JSON, schema violation, unknown version,
                or (with check_files) a referenced file that does not exist
        """
        resolved = self.require_file(path)
        try:
            raw = json.loads(self.read_text(resolved))
        except json.JSONDecodeError as e:
            raise ManifestError(f"{resolved}: not valid JSON: {e}")
        try:
            manifest = DatasetManifest.model_validate(raw)
        except ValidationError as e:
            raise ManifestError(f"{resolved}: invalid manifest: {e}")

        if check_files:
            base_dir = resolved.parent
            for rel in manifest.image_paths + (manifest.label_paths or []):
                if not (base_dir / rel).is_file():
                    raise ManifestError(f"{resolved}: referenced file is missing: {base_dir / rel}")
        return manifest

    def load_split(self, path: PathLike) -> LoadedSplit:
        """Read a manifest and every image (and label map, when listed) it references."""
        resolved = self.resolve(path)
        manifest = self.read_manifest(resolved)
        base_dir = resolved.parent
        images: List[RgbImage] = [self.netpbm.read_ppm(base_dir / rel) for rel in manifest.image_paths]
        labels: Optional[List[np.ndarray]] = None
        if manifest.label_paths is not None:
            labels = [self.netpbm.read_label_pgm(base_dir / rel) for rel in manifest.label_paths]
            for rel, image, label in zip(manifest.label_paths, images, labels):
                if label.shape != (image.height, image.width):
                    raise ManifestError(f"{rel}: label size {label.shape} != image size {(image.height, image.width)}")
                if label.max() >= manifest.num_categories:
                    raise ManifestError(f"{rel}: label {int(label.max())} >= {manifest.num_categories} categories")
        logger.info(f"Loaded split '{manifest.split.value}' with {manifest.count} images from {resolved}")
        return LoadedSplit(manifest=manifest, images=images, labels=labels)


_default = ManifestRepository()


def write_manifest(manifest: DatasetManifest, path: PathLike) -> Path:
    return _default.write_manifest(manifest, path)


def read_manifest(path: PathLike) -> DatasetManifest:
    return _default.read_manifest(path)
