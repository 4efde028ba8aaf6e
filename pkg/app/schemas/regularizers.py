"""
Regularizer Schemas

Category centers, pseudo-label sets, and the threshold/triplet settings.
"""

from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.base import ArrayModel, as_readonly
from app.utils.enums import NegativeMode


class ThresholdConfig(BaseModel):
    """Global probability cap P_h and per-category percentage p."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    P_h: float = Field(0.9, gt=0.0, le=1.0)
    p: float = Field(10.0, gt=0.0, le=100.0)


class TripletConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    margin: float = Field(0.2, gt=0.0, description="Margin alpha of the triplet hinge")
    negative_mode: NegativeMode = NegativeMode.HARDEST


class CategoryCenters(ArrayModel):
    """
    L2-normalized mean feature per category.

    Rows of categories that had no pixels are all-zero and flagged absent.
    """

    centers: np.ndarray
    pixel_counts: np.ndarray

    @field_validator("centers", mode="before")
    @classmethod
    def validate_centers(cls, v):
        arr = np.asarray(v, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"centers must be (categories, features), got {arr.shape}")
        return as_readonly(arr, np.float64)

    @field_validator("pixel_counts", mode="before")
    @classmethod
    def validate_counts(cls, v):
        arr = np.asarray(v)
        if arr.ndim != 1 or np.any(arr < 0):
            raise ValueError("pixel_counts must be a 1-D array of non-negative counts")
        return as_readonly(arr, np.int64)

    @model_validator(mode="after")
    def validate_rows(self):
        if self.centers.shape[0] != self.pixel_counts.shape[0]:
            raise ValueError(
                f"{self.centers.shape[0]} center rows but {self.pixel_counts.shape[0]} counts"
            )
        norms = np.linalg.norm(self.centers[self.present], axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("present category centers must have unit L2 norm")
        return self

    @property
    def present(self) -> np.ndarray:
        return self.pixel_counts > 0

    @property
    def num_categories(self) -> int:
        return int(self.centers.shape[0])

    def checksum(self) -> int:
        return hash((self.centers.tobytes(), self.pixel_counts.tobytes()))


class PseudoLabelSet(ArrayModel):
    """
    Pseudo labels for one target image (H, W) or a stack of them (N, H, W).

    `valid[j]` holds exactly when confidence[j] >= t[labels[j]].
    """

    labels: np.ndarray
    confidence: np.ndarray
    thresholds: np.ndarray
    valid: np.ndarray

    @field_validator("labels", mode="before")
    @classmethod
    def validate_labels(cls, v):
        return as_readonly(np.asarray(v), np.int64)

    @field_validator("confidence", "thresholds", mode="before")
    @classmethod
    def validate_reals(cls, v):
        return as_readonly(np.asarray(v), np.float64)

    @field_validator("valid", mode="before")
    @classmethod
    def validate_mask(cls, v):
        return as_readonly(np.asarray(v), bool)

    @model_validator(mode="after")
    def validate_consistency(self):
        if self.labels.shape != self.confidence.shape or self.labels.shape != self.valid.shape:
            raise ValueError(
                "labels, confidence and valid must share a shape, got "
                f"{self.labels.shape}, {self.confidence.shape}, {self.valid.shape}"
            )
        if self.thresholds.ndim != 1:
            raise ValueError("thresholds must be a 1-D per-category array")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.thresholds.size):
            raise ValueError("pseudo labels must index the threshold array")
        expected = self.confidence >= self.thresholds[self.labels]
        if not np.array_equal(expected, self.valid):
            raise ValueError("valid mask disagrees with confidence >= t[label]")
        return self

    @property
    def num_images(self) -> int:
        return int(self.labels.shape[0]) if self.labels.ndim == 3 else 1

    def select(self, index: int) -> "PseudoLabelSet":
        """Pseudo labels of one image from a stacked set."""
        if self.labels.ndim != 3:
            raise ValueError("select() needs a stacked (N, H, W) pseudo-label set")
        return PseudoLabelSet(
            labels=self.labels[index],
            confidence=self.confidence[index],
            thresholds=self.thresholds,
            valid=self.valid[index],
        )

    def valid_fraction_by_category(self) -> List[float]:
        fractions = []
        for c in range(self.thresholds.size):
            in_category = self.labels == c
            count = int(in_category.sum())
            fractions.append(float(self.valid[in_category].sum()) / count if count else 0.0)
        return fractions
