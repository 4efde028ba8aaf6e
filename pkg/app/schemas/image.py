"""
Image Schemas

Pydantic models for images, channel histograms, lookup tables, gamma
solutions, and jitter parameters.
"""

from typing import Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.base import ArrayModel, as_readonly

NUM_BINS = 256
L_RANGE: Tuple[float, float] = (0.0, 100.0)
AB_RANGE: Tuple[float, float] = (-128.0, 127.0)
UNIT_RANGE: Tuple[float, float] = (0.0, 1.0)


class RgbImage(ArrayModel):
    """8-bit sRGB image, row-major (height, width, 3)."""

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def validate_data(cls, v):
        arr = np.asarray(v)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"RGB data must have shape (height, width, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("width and height must be >= 1")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
                raise ValueError("RGB data must be finite")
            if arr.min() < 0 or arr.max() > 255:
                raise ValueError("RGB values must lie in [0, 255]")
        return as_readonly(arr, np.uint8)

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    def to_unit(self) -> np.ndarray:
        """Float64 copy scaled to [0, 1], shape (height, width, 3)."""
        return self.data.astype(np.float64) / 255.0

    @classmethod
    def from_unit(cls, values: np.ndarray) -> "RgbImage":
        return cls(data=np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8))


class LabImage(ArrayModel):
    """Per-pixel CIELAB channels, each of shape (height, width)."""

    L: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @field_validator("L", mode="before")
    @classmethod
    def clamp_lightness(cls, v):
        return as_readonly(np.clip(np.asarray(v, dtype=np.float64), *L_RANGE), np.float64)

    @field_validator("a", "b", mode="before")
    @classmethod
    def clamp_chroma(cls, v):
        return as_readonly(np.clip(np.asarray(v, dtype=np.float64), *AB_RANGE), np.float64)

    @model_validator(mode="after")
    def validate_shapes(self):
        if self.L.ndim != 2 or self.L.size == 0:
            raise ValueError(f"Lab channels must be non-empty 2-D arrays, got {self.L.shape}")
        if self.a.shape != self.L.shape or self.b.shape != self.L.shape:
            raise ValueError(
                f"Lab channel shapes differ: L{self.L.shape} a{self.a.shape} b{self.b.shape}"
            )
        return self

    @property
    def width(self) -> int:
        return int(self.L.shape[1])

    @property
    def height(self) -> int:
        return int(self.L.shape[0])

    def channel_means(self) -> Dict[str, float]:
        return {"L": float(self.L.mean()), "a": float(self.a.mean()), "b": float(self.b.mean())}


class ChannelHistogram(ArrayModel):
    """
    256-bin histogram of one channel over a fixed real range.

    Bin i covers [lo + i*w, lo + (i+1)*w) with w = (hi - lo) / 256; the
    value hi itself falls into the last bin.
    """

    bins: np.ndarray
    total: int = Field(..., ge=1)
    lo: float
    hi: float

    @field_validator("bins", mode="before")
    @classmethod
    def validate_bins(cls, v):
        arr = np.asarray(v)
        if arr.shape != (NUM_BINS,):
            raise ValueError(f"histogram must have {NUM_BINS} bins, got shape {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("histogram counts must be non-negative")
        return as_readonly(arr, np.int64)

    @model_validator(mode="after")
    def validate_totals(self):
        if not self.hi > self.lo:
            raise ValueError(f"histogram range must satisfy hi > lo, got ({self.lo}, {self.hi})")
        if int(self.bins.sum()) != self.total:
            raise ValueError(f"bin counts sum to {int(self.bins.sum())}, expected total {self.total}")
        return self

    @property
    def range(self) -> Tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / NUM_BINS

    def normalized(self) -> np.ndarray:
        return self.bins.astype(np.float64) / float(self.total)

    def midpoints(self) -> np.ndarray:
        return self.lo + (np.arange(NUM_BINS, dtype=np.float64) + 0.5) * self.bin_width

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.bins) / float(self.total)


class LookupTable(ArrayModel):
    """Monotone map from source bin index to target bin index."""

    map: np.ndarray

    @field_validator("map", mode="before")
    @classmethod
    def validate_map(cls, v):
        arr = np.asarray(v)
        if arr.shape != (NUM_BINS,):
            raise ValueError(f"lookup table must have {NUM_BINS} entries, got shape {arr.shape}")
        if arr.min() < 0 or arr.max() > NUM_BINS - 1:
            raise ValueError("lookup table entries must lie in [0, 255]")
        if np.any(np.diff(arr.astype(np.int64)) < 0):
            raise ValueError("lookup table must be monotone non-decreasing")
        return as_readonly(arr, np.int64)

    @classmethod
    def identity(cls) -> "LookupTable":
        return cls(map=np.arange(NUM_BINS))


class GammaSolution(BaseModel):
    """Result of the regularized gamma solve."""
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(..., ge=0.1, le=10.0)
    objective_value: float = Field(..., ge=0.0)
    iterations: int = Field(..., ge=0)
    converged: bool = True


class JitterParams(BaseModel):
    """
    Half-ranges of the color jitter. Factors are drawn from [1 - r, 1 + r];
    the hue shift (degrees) from [-hue, +hue].
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    brightness: float = Field(0.2, ge=0.0)
    contrast: float = Field(0.2, ge=0.0)
    saturation: float = Field(0.2, ge=0.0)
    hue: float = Field(10.0, ge=0.0, le=180.0, description="Hue half-range in degrees")
    seed: int = 0


class AlignmentReport(BaseModel):
    """What photometric alignment did to one image; written as the align sidecar."""
    model_config = ConfigDict(frozen=True)

    scheme: str
    beta: float
    gamma: Dict[str, GammaSolution] = Field(default_factory=dict)
    mean_delta_to_reference: Dict[str, float]
    mean_delta_to_source: Dict[str, float]
    settle_passes: int = Field(0, ge=0, description="Re-alignment passes run on the 8-bit output")
