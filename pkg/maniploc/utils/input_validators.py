"""
Input validation utilities.

Validators return ``(is_valid, error_message)`` so the CLI can print the
message as-is; services turn a failed check into the matching exception.
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from maniploc.utils.logger import get_logger

logger = get_logger(__name__)


class InputValidator:
    """Validates user inputs with detailed error messages."""

    MAX_OUTPUT_NAME_LENGTH = 255
    MAX_COORDS = 64
    VALID_LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
    VALID_STOP_SCALES = (1, 2, 3, 4)

    @staticmethod
    def validate_output_name(output_name: str) -> Tuple[bool, Optional[str]]:
        """
        Validate an output file stem (no directories, no extension needed).

        Args:
            output_name: Desired output name

        Returns:
            Tuple[bool, Optional[str]]: (is_valid, error_message)
        """
        if not isinstance(output_name, str):
            return False, f"Output name must be a string, got {type(output_name).__name__}"

        if not output_name.strip():
            return False, (
                "Output name cannot be empty.\n"
                "  → Provide a name for the mask or report files.\n"
                "  → Example: 'splice_017' or 'casia_eval'"
            )

        if len(output_name) > InputValidator.MAX_OUTPUT_NAME_LENGTH:
            return False, (
                f"Output name too long (maximum {InputValidator.MAX_OUTPUT_NAME_LENGTH} characters, "
                f"got {len(output_name)}).\n"
                "  → Please use a shorter name."
            )

        if ".." in output_name or "/" in output_name or "\\" in output_name:
            return False, (
                "Output name contains path separators or parent directory references.\n"
                "  → Use a plain name; the directory is chosen with --out-dir.\n"
                "  → Example: 'mask' instead of '../mask' or 'folder/mask'"
            )

        logger.debug(f"[Validation] Output name validated: '{output_name}'")
        return True, None

    @staticmethod
    def validate_log_level(level: str) -> Tuple[bool, Optional[str]]:
        """
        Validate log level string.

        Args:
            level: Log level name

        Returns:
            Tuple[bool, Optional[str]]: (is_valid, error_message)
        """
        if not isinstance(level, str):
            return False, f"Log level must be a string, got {type(level).__name__}"

        if level.upper() not in InputValidator.VALID_LOG_LEVELS:
            return False, (
                f"Invalid log level: '{level}'.\n"
                f"  → Valid levels: {', '.join(InputValidator.VALID_LOG_LEVELS)}"
            )
        return True, None

    @staticmethod
    def validate_stop_at(stop_at) -> Tuple[bool, Optional[str]]:
        """Early-exit scale must be one of 1..4."""
        if isinstance(stop_at, bool) or not isinstance(stop_at, (int, np.integer)):
            return False, f"Stop scale must be an integer, got {type(stop_at).__name__}"
        if int(stop_at) not in InputValidator.VALID_STOP_SCALES:
            return False, (
                f"Invalid stop scale: {stop_at}.\n"
                "  → Use 4 (coarsest mask only), 3, 2 or 1 (full path)"
            )
        return True, None

    @staticmethod
    def validate_coords(coords: Sequence[Sequence[int]], size: Tuple[int, int]) -> Tuple[bool, Optional[str]]:
        """
        Validate (row, column) pixel coordinates against an image size.

        Args:
            coords: Pixel coordinates, zero-based
            size: (height, width) of the image

        Returns:
            Tuple[bool, Optional[str]]: (is_valid, error_message)
        """
        if len(coords) == 0:
            return False, "At least one pixel coordinate is required.\n  → Example: --coords 120,64"
        if len(coords) > InputValidator.MAX_COORDS:
            return False, f"Too many coordinates ({len(coords)}, maximum {InputValidator.MAX_COORDS})"

        height, width = size
        for coord in coords:
            if len(coord) != 2:
                return False, f"Coordinate {tuple(coord)} must be a (row, column) pair"
            row, col = coord
            if not (0 <= int(row) < height and 0 <= int(col) < width):
                return False, (
                    f"Pixel coordinate ({row}, {col}) outside image of size {height}x{width}.\n"
                    "  → Coordinates are (row, column), zero-based"
                )
        return True, None

    @staticmethod
    def validate_image_array(image) -> Tuple[bool, Optional[str]]:
        """An H×W×3 float array with finite values in [0, 1]."""
        if not isinstance(image, np.ndarray):
            return False, f"Image must be a numpy array, got {type(image).__name__}"
        if image.ndim != 3 or image.shape[2] != 3:
            return False, f"Image must be H×W×3, got shape {image.shape}"
        if image.shape[0] < 1 or image.shape[1] < 1:
            return False, "Image has no pixels"
        if not np.isfinite(image).all():
            return False, "Image contains NaN or Inf values"
        if image.min() < 0.0 or image.max() > 1.0:
            return False, (
                f"Image values must lie in [0, 1], got [{image.min():.3f}, {image.max():.3f}].\n"
                "  → Divide 8-bit images by 255"
            )
        return True, None

    @staticmethod
    def validate_repeats(repeats: int) -> Tuple[bool, Optional[str]]:
        """Timing repeats: a positive integer, at most 1000."""
        if isinstance(repeats, bool) or not isinstance(repeats, int):
            return False, f"Repeats must be an integer, got {type(repeats).__name__}"
        if not 1 <= repeats <= 1000:
            return False, f"Repeats must be between 1 and 1000, got {repeats}"
        return True, None
