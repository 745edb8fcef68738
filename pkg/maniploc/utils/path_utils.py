"""
Path utilities for run artifacts.

Output names given on the command line (mask stems, report names, run
names) are reduced to safe file names and kept inside their base directory.
"""

import re
from pathlib import Path

from maniploc.exceptions import ValidationError
from maniploc.utils.logger import get_logger

logger = get_logger(__name__)

# Names Windows refuses as files
WINDOWS_RESERVED_NAMES = {
    "CON", "PRN", "AUX", "NUL",
    "COM1", "COM2", "COM3", "COM4", "COM5", "COM6", "COM7", "COM8", "COM9",
    "LPT1", "LPT2", "LPT3", "LPT4", "LPT5", "LPT6", "LPT7", "LPT8", "LPT9",
}


def sanitize_filename(filename: str, default: str = "output") -> str:
    """
    Reduce ``filename`` to a portable file name.

    Directory components, characters invalid on common filesystems and
    leading/trailing dots or spaces are removed; reserved names get a
    ``file_`` prefix; names longer than 255 bytes are truncated keeping the
    extension.

    Examples:
        >>> sanitize_filename("../../../etc/passwd")
        'passwd'
        >>> sanitize_filename("mask<1>.png")
        'mask1.png'
        >>> sanitize_filename("CON")
        'file_CON'
        >>> sanitize_filename("")
        'output'
    """
    if not filename or not isinstance(filename, str):
        logger.warning(f"Invalid filename {filename!r}, using '{default}'")
        return default

    sanitized = Path(filename.replace("\\", "/")).name
    sanitized = re.sub(r'[<>:"|?*\\/\x00-\x1f]', "", sanitized).strip().strip(".")
    if not sanitized:
        logger.warning(f"Filename '{filename}' reduced to empty, using '{default}'")
        return default

    if sanitized.split(".")[0].upper() in WINDOWS_RESERVED_NAMES:
        sanitized = f"file_{sanitized}"

    if len(sanitized.encode("utf-8")) > 255:
        stem, dot, ext = sanitized.rpartition(".")
        sanitized = (stem[: 250 - len(ext)] + dot + ext) if dot else sanitized[:255]

    if sanitized != filename:
        logger.debug(f"Sanitized filename: '{filename}' -> '{sanitized}'")
    return sanitized


def validate_output_path(base_dir: Path, filename: str) -> Path:
    """
    Resolve ``filename`` inside ``base_dir``.

    Returns:
        Path: Absolute path within ``base_dir``

    Raises:
        ValidationError: If the resolved path escapes ``base_dir``
    """
    full_path = (Path(base_dir) / sanitize_filename(filename)).resolve()
    base_resolved = Path(base_dir).resolve()
    try:
        full_path.relative_to(base_resolved)
    except ValueError:
        raise ValidationError(
            f"Path '{filename}' escapes the output directory",
            f"  → Resolved to '{full_path}', expected within '{base_resolved}'",
        )
    return full_path


def artifact_path(base_dir: Path, stem: str, suffix: str) -> Path:
    """
    Safe ``<base_dir>/<stem><suffix>`` with the parent directory created.

    Args:
        base_dir: Output directory
        stem: User-supplied name
        suffix: Extension including the dot, e.g. ".png"
    """
    path = validate_output_path(base_dir, f"{sanitize_filename(stem)}{suffix}")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path
