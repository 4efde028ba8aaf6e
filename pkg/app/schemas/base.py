"""
Base Schema

Common configuration for schemas that carry numpy arrays.
"""

from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict


class ArrayModel(BaseModel):
    """
    Frozen pydantic model allowed to hold numpy arrays.

    Validators on subclasses coerce dtypes and check shapes; arrays are marked
    read-only after validation so a constructed value cannot drift.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def as_readonly(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


def shape_of(arr: np.ndarray) -> Tuple[int, ...]:
    return tuple(int(s) for s in np.shape(arr))
