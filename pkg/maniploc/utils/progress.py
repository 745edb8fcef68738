"""
Console feedback for the CLI: step banners, status lines and batch bars.

Everything printed here goes through ``tqdm.write`` so banners never tear an
active progress bar; every message is mirrored to the log.
"""

import time
from contextlib import contextmanager
from typing import Iterable, Iterator, Optional, TypeVar

from tqdm.auto import tqdm

from maniploc.config import config
from maniploc.utils.logger import get_logger

logger = get_logger(__name__)

T = TypeVar("T")

STATUS_ICONS = {"info": "ℹ", "success": "✓", "warning": "⚠", "error": "✗"}


def _quiet() -> bool:
    return config.LOG_LEVEL not in ("DEBUG", "INFO")


@contextmanager
def step_progress(step_number: int, total_steps: int, description: str) -> Iterator[dict]:
    """
    Banner and timing for one stage of a CLI command.

    Yields a dict that receives ``elapsed_s`` when the stage ends, whether it
    succeeded or raised.

    Example:
        with step_progress(1, 2, "Corpus Synthesis"):
            samples = synthesize_corpus(pool, gen_config, 100, seed=0)
    """
    timing: dict = {}
    label = f"[{step_number}/{total_steps}] {description}"
    if not _quiet():
        tqdm.write(f"\n{label}")
    logger.info(f"Starting {label}")
    start = time.perf_counter()
    try:
        yield timing
    except BaseException:
        timing["elapsed_s"] = time.perf_counter() - start
        logger.error(f"{label} failed after {timing['elapsed_s']:.2f}s")
        raise
    timing["elapsed_s"] = time.perf_counter() - start
    if not _quiet():
        tqdm.write(f"✓ {description} ({timing['elapsed_s']:.2f}s)")
    logger.info(f"{label} done in {timing['elapsed_s']:.2f}s")


def track(iterable: Iterable[T], description: str, total: Optional[int] = None) -> Iterable[T]:
    """Wrap ``iterable`` in a tqdm bar, silent when logging is above INFO."""
    return tqdm(iterable, desc=description, total=total, leave=False, disable=_quiet())


def show_status(message: str, status: str = "info") -> None:
    """Print ``message`` with a status icon and log it at the matching level."""
    tqdm.write(f"{STATUS_ICONS.get(status, '•')} {message}")
    if status == "warning":
        logger.warning(message)
    elif status == "error":
        logger.error(message)
    else:
        logger.info(message)
