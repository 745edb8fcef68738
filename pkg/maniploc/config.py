"""
Configuration management for the maniploc system.

This module loads environment variables and provides centralized
process-level settings. Run-level settings (model, data, training)
live in pydantic models under ``maniploc.models.configs``.
"""

import logging
import os
from pathlib import Path
from typing import Optional, Sequence

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Use basic logging for config (before full logger is initialized)
_config_logger = logging.getLogger(__name__)


def _safe_float(
    env_var: str,
    default: float,
    min_val: Optional[float] = None,
    max_val: Optional[float] = None
) -> float:
    """
    Safely parse a float from environment variable with validation.

    Args:
        env_var: Environment variable name
        default: Default value if parsing fails
        min_val: Minimum allowed value
        max_val: Maximum allowed value

    Returns:
        float: Parsed and validated value or default
    """
    raw_value = os.getenv(env_var)

    try:
        value = float(raw_value if raw_value is not None else str(default))

        if min_val is not None and value < min_val:
            _config_logger.warning(
                f"{env_var}={value} below minimum {min_val}, using default {default}"
            )
            return default

        if max_val is not None and value > max_val:
            _config_logger.warning(
                f"{env_var}={value} above maximum {max_val}, using default {default}"
            )
            return default

        return value

    except (ValueError, TypeError) as e:
        _config_logger.warning(
            f"Invalid {env_var}='{raw_value}', using default {default}. Error: {e}"
        )
        return default


def _safe_int(
    env_var: str,
    default: int,
    min_val: Optional[int] = None,
    max_val: Optional[int] = None
) -> int:
    """
    Safely parse an integer from environment variable with validation.

    Args:
        env_var: Environment variable name
        default: Default value if parsing fails
        min_val: Minimum allowed value
        max_val: Maximum allowed value

    Returns:
        int: Parsed and validated value or default
    """
    return int(_safe_float(env_var, float(default),
                           float(min_val) if min_val is not None else None,
                           float(max_val) if max_val is not None else None))


def _safe_choice(env_var: str, default: str, choices: Sequence[str]) -> str:
    """
    Read a string environment variable restricted to a set of choices.

    Args:
        env_var: Environment variable name
        default: Default value if unset or invalid
        choices: Accepted values (compared case-insensitively)

    Returns:
        str: Lower-cased accepted value or default
    """
    raw_value = os.getenv(env_var, default).strip().lower()
    if raw_value not in choices:
        _config_logger.warning(
            f"Invalid {env_var}='{raw_value}', expected one of {list(choices)}; "
            f"using default '{default}'"
        )
        return default
    return raw_value


class Config:
    """
    Centralized process-level configuration for the maniploc system.

    Attributes:
        HOME: Root directory for generated artifacts
        OUTPUT_DIR: Directory for reports, masks and visualizations
        LOGS_DIR: Directory for log files
        RUNS_DIR: Directory for training runs and checkpoints
        DEVICE: Torch device preference (cpu, cuda, auto)
        NUM_WORKERS: Worker processes for corpus synthesis (0 = serial)
        DEFAULT_SEED: Seed used when a run config does not set one
        PRECISION: Default floating point precision (single, double)
        IMAGENET_MEAN: Per-channel mean used to standardize inputs
        IMAGENET_STD: Per-channel std used to standardize inputs
    """

    # Project Paths
    PROJECT_ROOT: Path = Path(__file__).parent
    HOME: Path = Path(os.getenv("MANIPLOC_HOME", str(PROJECT_ROOT.parent)))
    OUTPUT_DIR: Path = HOME / "output"
    LOGS_DIR: Path = HOME / "logs"
    RUNS_DIR: Path = HOME / "runs"

    # Compute
    DEVICE: str = _safe_choice("DEVICE", "auto", ("cpu", "cuda", "auto"))
    NUM_WORKERS: int = _safe_int("NUM_WORKERS", 0, 0, 64)
    DEFAULT_SEED: int = _safe_int("DEFAULT_SEED", 0, 0, 2**31 - 1)
    PRECISION: str = _safe_choice("PRECISION", "single", ("single", "double"))

    # Input standardization (ImageNet statistics)
    IMAGENET_MEAN: tuple = (0.485, 0.456, 0.406)
    IMAGENET_STD: tuple = (0.229, 0.224, 0.225)

    # Numerical safety inside the loss
    LOSS_CLAMP_EPS: float = 1e-7

    # Checkpoint container
    CHECKPOINT_FORMAT_VERSION: int = 1

    # Logging Configuration
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()
    LOG_FORMAT: str = "[%(asctime)s] [%(name)s] [%(levelname)s] %(message)s"
    LOG_DATE_FORMAT: str = "%Y-%m-%d %H:%M:%S"

    @classmethod
    def validate(cls) -> bool:
        """
        Validate that required directories can be created.

        Returns:
            bool: True if configuration is valid, False otherwise
        """
        is_valid = True

        for directory in (cls.OUTPUT_DIR, cls.LOGS_DIR, cls.RUNS_DIR):
            try:
                directory.mkdir(parents=True, exist_ok=True)
                _config_logger.debug(f"Directory ready: {directory}")
            except (PermissionError, OSError) as e:
                _config_logger.error(f"Cannot create directory {directory}: {e}")
                is_valid = False

        if cls.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            _config_logger.error(f"Invalid LOG_LEVEL '{cls.LOG_LEVEL}'")
            is_valid = False

        return is_valid

    @classmethod
    def resolve_device(cls, preference: Optional[str] = None) -> str:
        """
        Resolve the torch device string.

        Args:
            preference: Optional override of DEVICE

        Returns:
            str: 'cuda' when requested (or auto) and available, else 'cpu'
        """
        import torch

        choice = (preference or cls.DEVICE).lower()
        if choice == "cpu":
            return "cpu"
        if torch.cuda.is_available():
            return "cuda"
        if choice == "cuda":
            _config_logger.warning("CUDA requested but not available, using CPU")
        return "cpu"


# Create a singleton config instance
config = Config()
