"""
Deterministic checkpoint container.

Layout::

    b"MNPLCKPT" | version (u32 LE) | header length (u64 LE) | JSON header |
    tensor blob | SHA-256 of everything before it

The header is the nested checkpoint structure with every tensor replaced by
a (dtype, shape, offset, nbytes) reference into the blob. Containers keep
their type and key order, so loading a file and saving it again reproduces
it byte for byte.
"""

import hashlib
import json
import os
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import torch

from maniploc.config import config
from maniploc.exceptions import CheckpointError, FileWriteError
from maniploc.utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"MNPLCKPT"
_PREFIX = struct.Struct("<8sIQ")
_DIGEST_SIZE = 32
FORMAT_VERSION = config.CHECKPOINT_FORMAT_VERSION


@dataclass
class Checkpoint:
    """
    Everything needed to resume or reproduce a run.

    Attributes:
        model_state: Network state dict
        optimizer_state: Optimizer state dict (None for exported models)
        scheduler_state: LR scheduler state dict
        epoch: Last completed epoch
        step: Optimizer steps taken
        rng_state: python/numpy/torch generator states
        config: RunConfig snapshot (JSON-compatible dict)
        metrics: Validation metrics at save time
        format_version: Container version
    """

    model_state: Dict[str, torch.Tensor]
    optimizer_state: Optional[Dict[str, Any]] = None
    scheduler_state: Optional[Dict[str, Any]] = None
    epoch: int = 0
    step: int = 0
    rng_state: Dict[str, Any] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    metrics: Dict[str, Any] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def as_dict(self) -> Dict[str, Any]:
        return {
            "model_state": self.model_state,
            "optimizer_state": self.optimizer_state,
            "scheduler_state": self.scheduler_state,
            "epoch": self.epoch,
            "step": self.step,
            "rng_state": self.rng_state,
            "config": self.config,
            "metrics": self.metrics,
        }


def capture_rng_state() -> Dict[str, Any]:
    """Snapshot of the python, numpy-global and torch CPU generators."""
    return {
        "python": random.getstate(),
        "numpy": np.random.get_state(legacy=False),
        "torch": torch.get_rng_state(),
    }


def restore_rng_state(state: Dict[str, Any]) -> None:
    if "python" in state:
        version, internal, gauss = state["python"]
        random.setstate((version, tuple(internal), gauss))
    if "numpy" in state:
        np.random.set_state(state["numpy"])
    if "torch" in state:
        torch.set_rng_state(state["torch"])


# Encoding


def _encode(obj: Any, blob: List[bytes], offset: List[int]) -> Any:
    if isinstance(obj, torch.Tensor):
        tensor = obj.detach().cpu().contiguous()
        if tensor.dtype == torch.bfloat16:
            raise CheckpointError("<memory>", "bfloat16 tensors are not supported")
        raw = tensor.numpy().tobytes()
        ref = {"t": "tensor", "dtype": str(tensor.dtype).replace("torch.", ""),
               "shape": list(tensor.shape), "offset": offset[0], "nbytes": len(raw)}
        blob.append(raw)
        offset[0] += len(raw)
        return ref
    if isinstance(obj, np.ndarray):
        array = np.ascontiguousarray(obj)
        raw = array.tobytes()
        ref = {"t": "ndarray", "dtype": array.dtype.str, "shape": list(array.shape),
               "offset": offset[0], "nbytes": len(raw)}
        blob.append(raw)
        offset[0] += len(raw)
        return ref
    if isinstance(obj, dict):
        return {"t": "dict", "items": [[_encode(k, blob, offset), _encode(v, blob, offset)] for k, v in obj.items()]}
    if isinstance(obj, tuple):
        return {"t": "tuple", "items": [_encode(v, blob, offset) for v in obj]}
    if isinstance(obj, list):
        return {"t": "list", "items": [_encode(v, blob, offset) for v in obj]}
    if isinstance(obj, bytes):
        return {"t": "bytes", "hex": obj.hex()}
    if isinstance(obj, np.generic):
        return obj.item()
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise CheckpointError("<memory>", f"cannot serialize {type(obj).__name__}")


def _decode(node: Any, blob: bytes) -> Any:
    if not isinstance(node, dict):
        return node
    kind = node["t"]
    if kind == "dict":
        return {_decode(k, blob): _decode(v, blob) for k, v in node["items"]}
    if kind == "tuple":
        return tuple(_decode(v, blob) for v in node["items"])
    if kind == "list":
        return [_decode(v, blob) for v in node["items"]]
    if kind == "bytes":
        return bytes.fromhex(node["hex"])
    raw = blob[node["offset"]: node["offset"] + node["nbytes"]]
    if len(raw) != node["nbytes"]:
        raise ValueError("tensor reference outside the blob")
    if kind == "ndarray":
        return np.frombuffer(raw, dtype=np.dtype(node["dtype"])).reshape(node["shape"]).copy()
    if kind == "tensor":
        dtype = getattr(torch, node["dtype"])
        if not raw:
            return torch.empty(node["shape"], dtype=dtype)
        return torch.frombuffer(bytearray(raw), dtype=dtype).reshape(node["shape"]).clone()
    raise ValueError(f"unknown node type {kind!r}")


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    """Serialize to the container byte layout."""
    blob: List[bytes] = []
    header = _encode(ckpt.as_dict(), blob, [0])
    header_bytes = json.dumps(header, separators=(",", ":"), ensure_ascii=True).encode("utf-8")
    body = _PREFIX.pack(MAGIC, ckpt.format_version, len(header_bytes)) + header_bytes + b"".join(blob)
    return body + hashlib.sha256(body).digest()


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Checkpoint:
    """
    Parse and verify a container.

    Raises:
        CheckpointError: On bad magic, version mismatch or checksum failure
    """
    if len(data) < _PREFIX.size + _DIGEST_SIZE:
        raise CheckpointError(source, "file is truncated")
    body, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    magic, version, header_len = _PREFIX.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError(source, "not a maniploc checkpoint")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            source, f"format version {version}, expected {FORMAT_VERSION}"
        )
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(source, "checksum mismatch")
    try:
        header = json.loads(body[_PREFIX.size: _PREFIX.size + header_len].decode("utf-8"))
        content = _decode(header, body[_PREFIX.size + header_len:])
    except (ValueError, KeyError, TypeError, AttributeError) as e:
        raise CheckpointError(source, f"malformed header: {e}") from e
    return Checkpoint(format_version=version, **content)


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    """
    Write ``ckpt`` atomically (temporary file then rename).

    Raises:
        FileWriteError: If the file cannot be written
    """
    path = Path(path)
    data = encode_checkpoint(ckpt)
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except OSError as e:
        raise FileWriteError(str(path), cause=e) from e
    logger.debug(f"[Checkpoint] Saved epoch {ckpt.epoch} step {ckpt.step} to {path} ({len(data)} bytes)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read and verify a checkpoint; nothing is returned unless every check passes.

    Raises:
        CheckpointError: On a missing, corrupt, tampered or foreign-version file
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(str(path), f"cannot read file ({e})") from e
    return decode_checkpoint(data, str(path))


def restore_model(ckpt: Checkpoint, check_finite: bool = True):
    """
    Rebuild the network stored in a checkpoint.

    The architecture comes from the ``model`` section of the config
    snapshot; the weights keep the precision they were saved in.

    Raises:
        CheckpointError: If the snapshot has no model section or the weights do not fit
    """
    from maniploc.models.configs import ModelConfig
    from maniploc.network.model import ManipulationNet

    if "model" not in ckpt.config:
        raise CheckpointError("<checkpoint>", "config snapshot has no model section")
    model = ManipulationNet(ModelConfig(**ckpt.config["model"]), check_finite=check_finite)
    floating = [t for t in ckpt.model_state.values() if t.is_floating_point()]
    if floating:
        model.to(dtype=floating[0].dtype)
    try:
        model.load_state_dict(ckpt.model_state)
    except RuntimeError as e:
        raise CheckpointError("<checkpoint>", f"weights do not fit the configured model: {e}") from e
    model.eval()
    return model
