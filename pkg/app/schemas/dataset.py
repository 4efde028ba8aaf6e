"""
Dataset Schemas

Pydantic models for the synthetic two-domain benchmark: domain profiles,
scene layout specs, and on-disk manifests.
"""

from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.base import ArrayModel
from app.schemas.image import RgbImage
from app.utils.enums import SplitName

MANIFEST_VERSION = 1


class PaletteEntry(BaseModel):
    """Base Lab color of one category and its per-pixel Gaussian spread."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    L: float = Field(..., ge=0.0, le=100.0)
    a: float = Field(..., ge=-128.0, le=127.0)
    b: float = Field(..., ge=-128.0, le=127.0)
    spread: float = Field(0.0, ge=0.0)


class DomainProfile(BaseModel):
    """
    Imaging conditions of one domain.

    gamma_shift and color_cast realize the image-level shift; the palette
    (and its spreads) realizes the category-level shift.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "domain"
    gamma_shift: float = Field(1.0, ge=0.3, le=3.0)
    color_cast: Tuple[float, float] = (0.0, 0.0)
    noise_sigma: float = Field(0.0, ge=0.0)
    gamma_jitter: float = Field(0.0, ge=0.0, le=1.0, description="Log-scale spread of the per-image gamma")
    cast_jitter: float = Field(0.0, ge=0.0, description="Std of the per-image a/b cast offsets")
    palette: List[PaletteEntry]

    @field_validator("palette")
    @classmethod
    def validate_palette(cls, v):
        if len(v) < 2:
            raise ValueError("palette needs at least two categories")
        return v

    @property
    def num_categories(self) -> int:
        return len(self.palette)


class SceneSpec(BaseModel):
    """Random layout parameters: shapes painted over a background category."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    num_categories: int = Field(5, ge=2)
    background_category: int = Field(0, ge=0)
    min_shapes: int = Field(2, ge=0)
    max_shapes: int = Field(6, ge=0)
    image_size: Tuple[int, int] = (32, 32)
    min_extent: float = Field(0.15, gt=0.0, le=1.0, description="Minimum shape size as image fraction")
    max_extent: float = Field(0.6, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def validate_ranges(self):
        if self.max_shapes < self.min_shapes:
            raise ValueError("max_shapes must be >= min_shapes")
        if self.max_extent < self.min_extent:
            raise ValueError("max_extent must be >= min_extent")
        if self.background_category >= self.num_categories:
            raise ValueError("background_category must be < num_categories")
        if self.image_size[0] < 1 or self.image_size[1] < 1:
            raise ValueError("image_size entries must be >= 1")
        return self


class DatasetManifest(BaseModel):
    """
    One dataset split on disk.

    Paths are relative to the manifest's directory. A target-train manifest
    never lists label paths.
    """
    model_config = ConfigDict(extra="forbid")

    version: int = MANIFEST_VERSION
    split: SplitName
    num_categories: int = Field(..., ge=2)
    count: int = Field(..., ge=0)
    image_paths: List[str]
    label_paths: Optional[List[str]] = None
    seeds: List[int] = Field(default_factory=list)
    profile: Optional[DomainProfile] = None

    @model_validator(mode="after")
    def validate_counts(self):
        if self.version != MANIFEST_VERSION:
            raise ValueError(f"unknown manifest version {self.version}, expected {MANIFEST_VERSION}")
        if self.count != len(self.image_paths):
            raise ValueError(f"count {self.count} != {len(self.image_paths)} image paths")
        if self.label_paths is not None and len(self.label_paths) != self.count:
            raise ValueError(f"{len(self.label_paths)} label paths for {self.count} images")
        if self.split == SplitName.TARGET_TRAIN and self.label_paths is not None:
            raise ValueError("target_train manifest must not carry label paths")
        return self

    @property
    def has_labels(self) -> bool:
        return self.label_paths is not None


class LoadedSplit(ArrayModel):
    """A manifest with its images (and labels, when the manifest lists them) in memory."""

    manifest: DatasetManifest
    images: List[RgbImage]
    labels: Optional[List[np.ndarray]] = None

    @property
    def count(self) -> int:
        return len(self.images)


class BenchmarkConfig(BaseModel):
    """Sizes, seeds, and profiles of the generated benchmark."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    num_source: int = Field(200, ge=1)
    num_target_train: int = Field(100, ge=1)
    num_target_eval: int = Field(50, ge=1)
    image_size: Tuple[int, int] = (32, 32)
    eval_image_size: Tuple[int, int] = (64, 64)
    seed: int = 0
    scene: SceneSpec = Field(default_factory=SceneSpec)
    source_profile: Optional[DomainProfile] = None
    target_profile: Optional[DomainProfile] = None
    paired_layouts: bool = Field(
        False, description="Every split reuses the source layout seeds, so scene i has one label map in all splits"
    )


class DomainData(ArrayModel):
    """
    The splits a training run sees. The target training split never carries
    ground truth; the optional evaluation split is only read by evaluate().
    """

    source: LoadedSplit
    target_train: LoadedSplit
    target_eval: Optional[LoadedSplit] = None

    @model_validator(mode="after")
    def validate_splits(self):
        if self.source.labels is None:
            raise ValueError("source split must carry labels")
        if self.target_train.labels is not None:
            raise ValueError("target training split must not carry labels")
        if self.target_eval is not None and self.target_eval.labels is None:
            raise ValueError("evaluation split must carry labels")
        counts = {self.source.manifest.num_categories, self.target_train.manifest.num_categories}
        if len(counts) != 1:
            raise ValueError(f"source and target disagree on the number of categories: {sorted(counts)}")
        return self

    @property
    def num_categories(self) -> int:
        return self.source.manifest.num_categories
