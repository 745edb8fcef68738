"""
On-disk corpus layout and the torch dataset over it.

A corpus directory holds ``images/*.png``, ``masks/*.png`` (single channel,
0/255) and ``index.jsonl`` with one CorpusRecord per line.
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from pydantic import ValidationError as PydanticValidationError
from torch.utils.data import Dataset

from maniploc.exceptions import ConfigurationError, FileReadError, FileWriteError
from maniploc.models.configs import DistortionSpec
from maniploc.models.reports import CorpusRecord
from maniploc.models.structures import KINDS, ForgerySample
from maniploc.services.distortions import apply_distortion
from maniploc.utils.image_io import load_image, load_mask, save_image, save_mask
from maniploc.utils.logger import get_logger
from maniploc.utils.progress import track
from maniploc.utils.seeding import derive_rng

logger = get_logger(__name__)

INDEX_FILE = "index.jsonl"


def write_corpus(samples: Sequence[ForgerySample], out_dir: Union[str, Path]) -> List[CorpusRecord]:
    """
    Write samples as PNG pairs plus ``index.jsonl``.

    Files are named ``<kind>_<n>.png`` with n counting within the kind.

    Returns:
        List[CorpusRecord]: The index, in sample order
    """
    out_dir = Path(out_dir)
    counters: Dict[str, int] = {}
    records = []
    for sample in track(samples, "Writing corpus", total=len(samples)):
        n = counters.get(sample.kind, 0)
        counters[sample.kind] = n + 1
        name = f"{sample.kind}_{n:06d}.png"
        save_image(sample.image, out_dir / "images" / name)
        save_mask(sample.gt_mask, out_dir / "masks" / name)
        records.append(
            CorpusRecord(
                image_path=f"images/{name}",
                mask_path=f"masks/{name}",
                label=sample.label,
                kind=sample.kind,
                provenance=sample.provenance,
            )
        )

    index = out_dir / INDEX_FILE
    try:
        with open(index, "w", encoding="utf-8") as f:
            for record in records:
                f.write(record.model_dump_json() + "\n")
    except OSError as e:
        raise FileWriteError(str(index), cause=e) from e
    logger.info(f"[Corpus] Wrote {len(records)} samples to {out_dir}")
    return records


def read_corpus(corpus_dir: Union[str, Path]) -> List[CorpusRecord]:
    """
    Parse ``index.jsonl``.

    Raises:
        FileReadError: If the index is missing or a line is malformed
    """
    index = Path(corpus_dir) / INDEX_FILE
    if not index.is_file():
        raise FileReadError(str(index))
    records = []
    with open(index, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(CorpusRecord(**json.loads(line)))
            except (ValueError, PydanticValidationError) as e:
                raise FileReadError(str(index), f"Malformed index line {number} in {index}", cause=e) from e
    return records


def indices_by_kind(kinds: Sequence[str]) -> Dict[str, List[int]]:
    grouped: Dict[str, List[int]] = {}
    for i, kind in enumerate(kinds):
        grouped.setdefault(kind, []).append(i)
    return grouped


def split_validation(
    records: Sequence[CorpusRecord],
    per_class: int,
    seed: int,
) -> Tuple[List[CorpusRecord], List[CorpusRecord]]:
    """
    Seeded per-class validation split.

    For every kind, ``per_class`` records are picked by a permutation from
    derive_rng(seed, "validation", kind); both halves keep corpus order.

    Raises:
        ConfigurationError: If a kind has no more than ``per_class`` records
    """
    grouped = indices_by_kind([r.kind for r in records])
    chosen = set()
    for kind in sorted(grouped):
        members = grouped[kind]
        if per_class >= len(members):
            raise ConfigurationError(
                f"Class '{kind}' has {len(members)} samples, cannot hold out {per_class}"
            )
        order = derive_rng(seed, "validation", kind).permutation(len(members))
        chosen.update(members[int(i)] for i in order[:per_class])
    train = [r for i, r in enumerate(records) if i not in chosen]
    val = [r for i, r in enumerate(records) if i in chosen]
    return train, val


class ForgeryDataset(Dataset):
    """
    Samples as (image 3×H×W, mask 1×H×W, label) float tensors.

    Items are either in-memory ForgerySamples or CorpusRecords read lazily
    from ``root``. An optional distortion is applied per item with the
    stream derive_rng(seed, "distortion", index).
    """

    def __init__(
        self,
        items: Sequence[Union[ForgerySample, CorpusRecord]],
        root: Optional[Union[str, Path]] = None,
        distortion: Optional[DistortionSpec] = None,
        seed: int = 0,
    ):
        self.items = list(items)
        self.root = Path(root) if root is not None else None
        self.distortion = distortion
        self.seed = seed
        if any(isinstance(i, CorpusRecord) for i in self.items) and self.root is None:
            raise ConfigurationError("Corpus records need the corpus root directory")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def kinds(self) -> List[str]:
        return [item.kind for item in self.items]

    @property
    def labels(self) -> List[int]:
        return [int(item.label) for item in self.items]

    def load(self, index: int) -> Tuple[np.ndarray, np.ndarray, int]:
        """Raw (image H×W×3, mask H×W, label) after the optional distortion."""
        item = self.items[index]
        if isinstance(item, ForgerySample):
            image, mask = item.image, item.gt_mask
        else:
            image = load_image(self.root / item.image_path)
            mask = load_mask(self.root / item.mask_path)
        if self.distortion is not None:
            image, mask = apply_distortion(image, mask, self.distortion, derive_rng(self.seed, "distortion", index))
        return image, mask, int(item.label)

    def __getitem__(self, index: int):
        image, mask, label = self.load(index)
        return (
            torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1),
            torch.from_numpy(np.ascontiguousarray(mask, dtype=np.float32))[None],
            torch.tensor(float(label)),
        )

    def with_distortion(self, distortion: Optional[DistortionSpec]) -> "ForgeryDataset":
        """Same items viewed through another distortion."""
        return ForgeryDataset(self.items, root=self.root, distortion=distortion, seed=self.seed)

    def class_indices(self) -> Dict[str, List[int]]:
        """Dataset indices grouped by kind, for the stratified epoch sampler."""
        grouped = indices_by_kind(self.kinds)
        return {kind: grouped[kind] for kind in KINDS if kind in grouped}
