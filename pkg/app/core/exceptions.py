"""
Exception Hierarchy

Every error raised on purpose by the toolkit derives from AppError and
carries the process exit code the CLI should return:
- 1: internal/numerical failure
- 2: usage, configuration, or file IO problem
"""


class AppError(Exception):
    """Base class for toolkit errors."""

    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# ----------------------------------------------------
# Usage / IO (exit code 2)
# ----------------------------------------------------
class DataIOError(AppError):
    """A file is missing, truncated, or malformed."""

    exit_code = 2


class ConfigError(AppError):
    """Configuration failed schema validation."""

    exit_code = 2


class NetpbmFormatError(DataIOError):
    """PPM/PGM header or payload is invalid."""


class ManifestError(DataIOError):
    """Dataset manifest is invalid or references missing files."""


class CheckpointFormatError(DataIOError):
    """Checkpoint magic, version, or payload is invalid."""


# ----------------------------------------------------
# Numerical contracts (exit code 1)
# ----------------------------------------------------
class EmptyInputError(AppError, ValueError):
    def __init__(self, detail: str = "empty input"):
        super().__init__(detail)


class ShapeMismatchError(AppError, ValueError):
    def __init__(self, what: str, expected, found):
        super().__init__(f"{what}: shape mismatch, expected {tuple(expected)} but got {tuple(found)}")
        self.expected = tuple(expected)
        self.found = tuple(found)


class DegenerateFeatureError(AppError, ValueError):
    def __init__(self, detail: str = "degenerate feature"):
        super().__init__(detail)


class DegenerateCategoryError(AppError, ValueError):
    def __init__(self, category: int):
        super().__init__(f"degenerate category {category}: mean feature has zero norm")
        self.category = category


class MissingCenterError(AppError, ValueError):
    def __init__(self, category: int):
        super().__init__(f"no center for category {category}: no source pixels carried this label")
        self.category = category
