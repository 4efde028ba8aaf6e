"""
Pseudo-Label Repository

One pseudo-label image is stored as three files sharing a stem:
- <stem>.pgm       labels (category index as gray level)
- <stem>.f32       confidence raster, little-endian float32, row-major
- <stem>.json      sidecar with per-category thresholds and the raster size
"""

import json
from pathlib import Path
from typing import List

import numpy as np

from app.core.exceptions import DataIOError
from app.repositories.base import BaseRepository, PathLike
from app.repositories.netpbm import NetpbmRepository
from app.schemas.regularizers import PseudoLabelSet
from app.utils.helpers import dumps_stable


class PseudoLabelRepository(BaseRepository):

    def __init__(self, root=None):
        super().__init__(root)
        self.netpbm = NetpbmRepository(root)

    def save(self, pseudo: PseudoLabelSet, directory: PathLike, stem: str) -> List[Path]:
        if pseudo.labels.ndim == 3:
            written = []
            for index in range(pseudo.num_images):
                written += self.save(pseudo.select(index), directory, f"{stem}_{index:04d}")
            return written

        directory = self.resolve(directory)
        height, width = pseudo.labels.shape
        sidecar = {
            "width": width,
            "height": height,
            "thresholds": [float(t) for t in pseudo.thresholds],
            "valid_fraction": float(pseudo.valid.mean()),
        }
        return [
            self.netpbm.write_label_pgm(pseudo.labels, directory / f"{stem}.pgm"),
            self.write_bytes(directory / f"{stem}.f32", pseudo.confidence.astype("<f4").tobytes()),
            self.write_text(directory / f"{stem}.json", dumps_stable(sidecar)),
        ]

    def load(self, directory: PathLike, stem: str) -> PseudoLabelSet:
        """
        Load one image's pseudo labels; the valid mask is recomputed from the
        stored (float32) confidences and thresholds.
        """
        directory = self.resolve(directory)
        labels = self.netpbm.read_label_pgm(directory / f"{stem}.pgm")
        try:
            sidecar = json.loads(self.read_text(directory / f"{stem}.json"))
            thresholds = np.asarray(sidecar["thresholds"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError) as e:
            raise DataIOError(f"{directory / stem}.json: invalid sidecar: {e}")
        raw = self.read_bytes(directory / f"{stem}.f32")
        if len(raw) != labels.size * 4:
            raise DataIOError(f"{directory / stem}.f32: expected {labels.size * 4} bytes, found {len(raw)}")
        confidence = np.frombuffer(raw, dtype="<f4").reshape(labels.shape).astype(np.float64)
        if labels.max() >= thresholds.size:
            raise DataIOError(f"{directory / stem}.pgm: label {int(labels.max())} has no threshold")
        return PseudoLabelSet(
            labels=labels,
            confidence=confidence,
            thresholds=thresholds,
            valid=confidence >= thresholds[labels],
        )
