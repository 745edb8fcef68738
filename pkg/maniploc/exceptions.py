"""
Custom exception hierarchy for the maniploc system.

Provides specific exceptions for different error scenarios with actionable error messages.
"""

from typing import Iterable, Optional


class ManipLocError(Exception):
    """Base exception for all maniploc errors."""

    exit_code: int = 1

    def __init__(self, message: str, details: str = ""):
        """
        Initialize exception with message and optional details.

        Args:
            message: Main error message
            details: Additional details or guidance (optional)
        """
        self.message = message
        self.details = details

        full_message = message
        if details:
            full_message = f"{message}\n{details}"

        super().__init__(full_message)


# Input/Validation Errors


class ValidationError(ManipLocError):
    """Raised when input validation fails."""

    exit_code = 2


class BinaryMaskError(ValidationError):
    """Raised when a mask that must be binary contains other values."""

    def __init__(self, name: str = "mask", values: Optional[Iterable[float]] = None):
        default_message = f"{name} must contain only 0 and 1"
        details = "  → Threshold soft masks before building the GT pyramid"
        if values is not None:
            shown = ", ".join(f"{v:g}" for v in list(values)[:5])
            details += f"\n  → Offending values: {shown}"
        super().__init__(default_message, details)


class CoordinateError(ValidationError):
    """Raised when pixel coordinates fall outside an image."""

    def __init__(self, coord: tuple, size: tuple):
        message = f"Pixel coordinate {coord} outside image of size {size}"
        details = "  → Coordinates are (row, column), zero-based"
        super().__init__(message, details)


class ConfigurationError(ManipLocError):
    """Raised when configuration is invalid or missing."""

    exit_code = 2


class InvalidStopScaleError(ConfigurationError):
    """Raised when an early-exit scale index is not one of 1..4."""

    def __init__(self, stop_at):
        message = f"Invalid stop scale: {stop_at!r}"
        details = (
            "  → Use 4 (coarsest mask only), 3, 2 or 1 (full path)\n"
            "  → Scale 1 is the finest mask"
        )
        super().__init__(message, details)


# Tensor/Numerical Errors


class ShapeError(ManipLocError):
    """Raised when a tensor shape violates a module contract."""

    exit_code = 2

    def __init__(self, message: str, stage: str = ""):
        self.stage = stage
        details = f"  → Stage: {stage}" if stage else ""
        super().__init__(message, details)


class NumericError(ManipLocError):
    """Raised when a non-finite value appears in an intermediate or the loss."""

    exit_code = 4

    def __init__(self, stage: str, message: str = "", dump_path: str = ""):
        self.stage = stage
        self.dump_path = dump_path
        default_message = f"Non-finite values produced at stage '{stage}'"
        details = (
            "  → Lower the learning rate or switch to double precision\n"
            "  → Check the input images for NaN/Inf values"
        )
        if dump_path:
            details += f"\n  → Offending batch saved to: {dump_path}"
        super().__init__(message or default_message, details)


class WeightLoadError(ManipLocError):
    """Raised when pretrained weights are missing or do not fit the model."""

    exit_code = 3

    def __init__(self, message: str, offending: Optional[Iterable[str]] = None):
        self.offending = list(offending or [])
        details = "  → Check that the file was produced for the same backbone preset"
        if self.offending:
            listed = "\n".join(f"     {name}" for name in self.offending[:20])
            details += f"\n  → Offending parameters:\n{listed}"
        super().__init__(message, details)


# Metric Errors


class MetricError(ManipLocError):
    """Base class for metric computation errors."""
    pass


class UndefinedMetricError(MetricError):
    """Raised when a metric needs both classes but only one is present."""

    def __init__(self, metric: str, message: str = ""):
        default_message = f"{metric} is undefined: labels contain a single class"
        details = "  → Provide at least one positive and one negative sample"
        super().__init__(message or default_message, details)


# Data Generation Errors


class GenerationError(ManipLocError):
    """Raised when a synthetic sample cannot satisfy its constraints."""

    def __init__(self, message: str, attempts: int = 0):
        self.attempts = attempts
        details = "  → Widen GenConfig ranges or mask_area_bounds"
        if attempts:
            details += f"\n  → Gave up after {attempts} attempts"
        super().__init__(message, details)


# File I/O Errors


class FileError(ManipLocError):
    """Base class for file I/O errors."""

    exit_code = 3


class FileWriteError(FileError):
    """Raised when file write operation fails."""

    def __init__(self, file_path: str, message: str = "", cause: Exception = None):
        default_message = f"Failed to write file: {file_path}"
        details = (
            "  → Check file permissions\n"
            "  → Ensure directory exists\n"
            "  → Check available disk space"
        )
        if cause:
            details += f"\n  → Error: {cause}"

        super().__init__(message or default_message, details)


class FileReadError(FileError):
    """Raised when file read operation fails."""

    def __init__(self, file_path: str, message: str = "", cause: Exception = None):
        default_message = f"Failed to read file: {file_path}"
        details = (
            "  → Check file exists\n"
            "  → Check file permissions\n"
            "  → Verify file path is correct"
        )
        if cause:
            details += f"\n  → Error: {cause}"

        super().__init__(message or default_message, details)


class ImageDecodeError(FileError):
    """Raised when bytes or a file cannot be decoded as an image."""

    def __init__(self, source: str, cause: Exception = None):
        message = f"Cannot decode image: {source}"
        details = "  → Supported formats: PNG, JPEG, BMP, TIFF"
        if cause:
            details += f"\n  → Error: {cause}"
        super().__init__(message, details)


class IngestionError(FileError):
    """Raised when a source directory or annotation file yields no usable images."""

    def __init__(self, path: str, skipped: int = 0):
        message = f"No usable images found in: {path}"
        details = "  → Check the directory contents and the --format flag"
        if skipped:
            details += f"\n  → {skipped} entries were skipped as unreadable"
        super().__init__(message, details)


class CheckpointError(FileError):
    """Raised when a checkpoint is corrupt or was written by another format version."""

    def __init__(self, file_path: str, reason: str):
        message = f"Cannot load checkpoint {file_path}: {reason}"
        details = (
            "  → The file may be truncated or modified\n"
            "  → Re-export it with the current maniploc version"
        )
        super().__init__(message, details)


# Utility function to convert standard exceptions to custom ones


def convert_exception(exc: Exception, context: str = "") -> ManipLocError:
    """
    Convert a standard exception to a custom maniploc exception.

    Args:
        exc: The exception to convert
        context: Additional context about where the error occurred

    Returns:
        ManipLocError: Custom exception with enhanced error message
    """
    if isinstance(exc, ManipLocError):
        return exc

    exc_type = type(exc).__name__
    exc_msg = str(exc)
    prefix = f"{context}: " if context else ""

    # pydantic.ValidationError subclasses ValueError
    if exc_type == "ValidationError" or isinstance(exc, (ValueError, TypeError)):
        return ConfigurationError(f"{prefix}{exc_msg}")

    if isinstance(exc, FloatingPointError):
        return NumericError(context or "unknown", exc_msg)

    if isinstance(exc, FileNotFoundError):
        return FileReadError(getattr(exc, "filename", "") or exc_msg, cause=exc)

    if isinstance(exc, (IOError, OSError)):
        return FileError(f"{prefix}{exc_msg}")

    return ManipLocError(f"{prefix}{exc_type}: {exc_msg}")
