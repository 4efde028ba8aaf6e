"""
Helper Utilities

Small functions shared by services: seeded RNG streams, percentiles,
stable JSON output.
"""

import json
import math
from typing import Any, Sequence

import numpy as np

from app.utils.enums import RngStream


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Build an independent generator for (seed, *keys).

    Usage:
        rng = derive_rng(config.seed, step_index, iteration, RngStream.SOURCE_JITTER)
    """
    entropy = [int(seed)] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *keys: int) -> int:
    """Like derive_rng but returns a plain 32-bit seed."""
    return int(derive_rng(seed, *keys).integers(0, 2**31 - 1))


def stream_rng(seed: int, step_index: int, iteration: int, stream: RngStream) -> np.random.Generator:
    return derive_rng(seed, step_index, iteration, int(stream))


def nearest_rank_percentile(values: Sequence[float], q: float) -> float:
    """
    Nearest-rank percentile of `values` at q in [0, 100].

    rank = ceil(q/100 * n) clamped to [1, n]; returns the rank-th smallest.
    """
    arr = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = arr.size
    if n == 0:
        raise ValueError("percentile of empty sequence")
    # round() strips float noise such as 0.9 * 10 = 9.000000000000002
    rank = math.ceil(round(q / 100.0 * n, 9))
    rank = min(max(rank, 1), n)
    return float(arr[rank - 1])


def dumps_stable(payload: Any) -> str:
    """JSON with a fixed key order and separators, for byte-identical output."""
    return json.dumps(payload, indent=2, sort_keys=False, ensure_ascii=True, allow_nan=False) + "\n"


def nan_to_none(values: Sequence[float]) -> list:
    return [None if (v is None or (isinstance(v, float) and math.isnan(v))) else float(v) for v in values]
