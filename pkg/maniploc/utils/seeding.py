"""
Deterministic random streams.

Every sample, epoch and distortion draws from its own numpy Generator
derived from a tuple of integers, so serial and parallel execution see the
same numbers regardless of scheduling.
"""

import random
import zlib
from typing import Union

import numpy as np
import torch

Key = Union[int, str]


def _as_int(key: Key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError(f"rng keys must be non-negative, got {key}")
    return int(key)


def derive_rng(seed: int, *keys: Key) -> np.random.Generator:
    """
    Build an independent Generator for ``(seed, *keys)``.

    String keys (class names) are hashed with CRC32 so the stream does not
    depend on Python's per-process hash randomization.

    Args:
        seed: Run seed
        *keys: Stream identifiers, e.g. ("splice", 17, 0)

    Returns:
        np.random.Generator: Fresh generator
    """
    entropy = [_as_int(seed)] + [_as_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def seed_everything(seed: int, deterministic: bool = True) -> None:
    """
    Seed python, numpy's legacy global state and torch.

    Args:
        seed: Seed value
        deterministic: Also request deterministic torch kernels
    """
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)
        if torch.backends.cudnn.is_available():
            torch.backends.cudnn.benchmark = False
            torch.backends.cudnn.deterministic = True
