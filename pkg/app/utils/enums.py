"""
Enumerations shared across schemas, services, and commands.
"""

from enum import Enum


class AlignScheme(str, Enum):
    """Which channels get gamma correction and which get histogram matching."""
    HYBRID = "hybrid"  # gamma on L, matching on a/b
    GAMMA = "gamma"  # gamma on L, a, b
    HISTOGRAM = "histogram"  # matching on L, a, b


class NegativeMode(str, Enum):
    HARDEST = "hardest"
    ALL = "all"


class SplitName(str, Enum):
    SOURCE = "source"
    TARGET_TRAIN = "target_train"
    TARGET_EVAL = "target_eval"


class ShapeKind(str, Enum):
    RECTANGLE = "rectangle"
    ELLIPSE = "ellipse"


class RngStream(int, Enum):
    """
    Independent random streams inside one training iteration.

    Each component draws from its own stream so switching one component off
    leaves the random numbers of the others untouched.
    """
    SOURCE_PICK = 0
    REFERENCE_PICK = 1
    SOURCE_JITTER = 2
    TARGET_PICK = 3
    TARGET_JITTER = 4
    CENTER_REFERENCE = 5
    INIT = 6
