"""
Training loop.

Each epoch draws a class-balanced stream with the epoch sampler, optimizes
the multi-scale loss with Adam, halves the learning rate on schedule and
scores the validation split. The checkpoint with the best validation pixel
AUC is kept next to the latest one; every optimizer step is appended to
``train_log.jsonl`` in the run directory.
"""

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import torch
from torch.optim import Adam
from torch.optim.lr_scheduler import StepLR
from torch.utils.data import DataLoader, Subset

from maniploc.config import config
from maniploc.exceptions import ConfigurationError, NumericError
from maniploc.models.configs import TrainConfig
from maniploc.models.reports import EpochRecord, MetricReport
from maniploc.network.model import ManipulationNet
from maniploc.services.checkpoint import (
    Checkpoint,
    capture_rng_state,
    restore_rng_state,
    save_checkpoint,
)
from maniploc.services.corpus import ForgeryDataset
from maniploc.services.criterion import build_gt_pyramid, loss_terms, resize_gt
from maniploc.services.evaluator import evaluate_localization
from maniploc.services.synth_datagen import epoch_sampler
from maniploc.utils.logger import close_record_logger, get_logger, get_record_logger
from maniploc.utils.progress import track
from maniploc.utils.seeding import derive_rng, seed_everything

logger = get_logger(__name__)

BEST_CHECKPOINT = "best.ckpt"
LAST_CHECKPOINT = "last.ckpt"
TRAIN_LOG = "train_log.jsonl"


@dataclass
class TrainResult:
    """Outcome of a training run."""

    best: Checkpoint
    last: Checkpoint
    history: List[EpochRecord] = field(default_factory=list)
    run_dir: Optional[Path] = None

    @property
    def losses(self) -> List[float]:
        return [record.mean_loss for record in self.history]


def torch_dtype(precision: str) -> torch.dtype:
    return torch.float64 if precision == "double" else torch.float32


def epoch_indices(dataset: ForgeryDataset, cfg: TrainConfig, epoch: int) -> List[int]:
    """Dataset indices visited in ``epoch``, in order."""
    stream = epoch_sampler(dataset.class_indices(), cfg.per_epoch_per_class, derive_rng(cfg.seed, "epoch", epoch))
    return [index for _, index in stream]


def _dump_batch(run_dir: Optional[Path], step: int, images, masks, labels, indices) -> str:
    if run_dir is None:
        return ""
    path = run_dir / f"nonfinite_batch_step{step:07d}.pt"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {"images": images.cpu(), "masks": masks.cpu(), "labels": labels.cpu(), "indices": list(indices)},
            path,
        )
    except OSError as e:
        logger.error(f"[Trainer] Could not save offending batch: {e}")
        return ""
    return str(path)


def train_step(
    model: ManipulationNet,
    optimizer: torch.optim.Optimizer,
    images: torch.Tensor,
    masks: torch.Tensor,
    labels: torch.Tensor,
) -> Dict[str, float]:
    """
    One optimizer step on a batch.

    Returns:
        dict: Loss terms as floats

    Raises:
        NumericError: If the loss is not finite (no update is applied)
    """
    optimizer.zero_grad(set_to_none=True)
    out = model(images)
    size = model.cfg.working_size
    resized = tuple(masks.shape[-2:]) != (size, size)
    # a tiny region may vanish on the working grid; the image label still holds
    gt = build_gt_pyramid(resize_gt(masks, size), labels, strict=not resized)
    terms = loss_terms(out.detection, out.masks, gt)
    if not torch.isfinite(terms["total"]):
        raise NumericError("loss", f"Non-finite loss: {terms['total'].item()}")
    terms["total"].backward()
    optimizer.step()
    return {name: float(value.detach()) for name, value in terms.items()}


def _snapshot(
    model: ManipulationNet,
    optimizer: torch.optim.Optimizer,
    scheduler: StepLR,
    epoch: int,
    step: int,
    run_config: Dict[str, Any],
    metrics: Dict[str, Any],
) -> Checkpoint:
    return Checkpoint(
        model_state={k: v.detach().clone() for k, v in model.state_dict().items()},
        optimizer_state=copy.deepcopy(optimizer.state_dict()),
        scheduler_state=copy.deepcopy(scheduler.state_dict()),
        epoch=epoch,
        step=step,
        rng_state=capture_rng_state(),
        config=run_config,
        metrics=metrics,
    )


def train(
    model: ManipulationNet,
    train_set: ForgeryDataset,
    cfg: TrainConfig,
    val_set: Optional[ForgeryDataset] = None,
    run_dir: Optional[Union[str, Path]] = None,
    run_config: Optional[Dict[str, Any]] = None,
    resume: Optional[Checkpoint] = None,
) -> TrainResult:
    """
    Train ``model`` in place.

    Args:
        model: Network (moved to the configured device and precision)
        train_set: Training samples
        cfg: Loop settings
        val_set: Validation split; best-model selection uses its mean pixel AUC
        run_dir: Directory for checkpoints and the step log (None = keep in memory)
        run_config: Config snapshot stored in checkpoints
        resume: Checkpoint to continue from (weights, optimizer, schedule, rng)

    Returns:
        TrainResult: Best and last checkpoints plus per-epoch records

    Raises:
        ConfigurationError: If the training set is empty or the resume point is already final
        NumericError: On a non-finite loss; the batch is saved in ``run_dir``
    """
    if len(train_set) == 0:
        raise ConfigurationError("Training set is empty")

    run_dir = Path(run_dir) if run_dir is not None else None
    run_config = run_config or {"train": cfg.model_dump(mode="json")}
    device = config.resolve_device(cfg.device)
    dtype = torch_dtype(cfg.precision)

    seed_everything(cfg.seed)
    model.to(device=device, dtype=dtype)
    optimizer = Adam(model.parameters(), lr=cfg.lr)
    scheduler = StepLR(optimizer, step_size=cfg.lr_step_epochs, gamma=cfg.lr_gamma)

    start_epoch, step = 0, 0
    if resume is not None:
        model.load_state_dict(resume.model_state)
        if resume.optimizer_state is not None:
            optimizer.load_state_dict(resume.optimizer_state)
        if resume.scheduler_state is not None:
            scheduler.load_state_dict(resume.scheduler_state)
        restore_rng_state(resume.rng_state)
        start_epoch, step = resume.epoch, resume.step
        if start_epoch >= cfg.epochs:
            raise ConfigurationError(f"Nothing to train: resume checkpoint is already at epoch {start_epoch}")
        logger.info(f"[Trainer] Resuming after epoch {start_epoch} (step {step})")

    record_logger = None
    if run_dir is not None:
        record_logger = get_record_logger(f"maniploc.runs.{run_dir.name}", run_dir / TRAIN_LOG)

    history: List[EpochRecord] = []
    best: Optional[Checkpoint] = resume
    best_auc = float(resume.metrics.get("pixel_auc") or -1.0) if resume is not None else -1.0
    last: Optional[Checkpoint] = resume
    logger.info(
        f"[Trainer] {len(train_set)} training samples, {cfg.epochs} epochs, "
        f"batch {cfg.batch_size}, lr {cfg.lr:g}, {cfg.precision} precision on {device}"
    )

    try:
        for epoch in range(start_epoch + 1, cfg.epochs + 1):
            model.train()
            lr = optimizer.param_groups[0]["lr"]
            indices = epoch_indices(train_set, cfg, epoch)
            loader = DataLoader(Subset(train_set, indices), batch_size=cfg.batch_size, shuffle=False)
            losses: List[float] = []
            stopped = False

            for batch, (images, masks, labels) in enumerate(track(loader, f"Epoch {epoch}/{cfg.epochs}")):
                batch_indices = indices[batch * cfg.batch_size: (batch + 1) * cfg.batch_size]
                images = images.to(device=device, dtype=dtype)
                try:
                    terms = train_step(model, optimizer, images, masks, labels)
                except NumericError as e:
                    dump = _dump_batch(run_dir, step + 1, images, masks, labels, batch_indices)
                    logger.error(f"[Trainer] Non-finite value at epoch {epoch}, step {step + 1} ({e.stage})")
                    raise NumericError(e.stage, e.message, dump_path=dump) from e

                step += 1
                losses.append(terms["total"])
                if record_logger is not None:
                    record_logger.info(
                        "step", extra={"record": {"epoch": epoch, "step": step, "lr": lr, **terms}}
                    )
                if step % cfg.log_every == 0:
                    logger.debug(f"[Trainer] epoch {epoch} step {step} loss {terms['total']:.5f}")
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    stopped = True
                    break

            scheduler.step()
            validation: Optional[MetricReport] = None
            final_epoch = stopped or epoch == cfg.epochs
            if val_set is not None and len(val_set) > 0 and (epoch % cfg.validate_every == 0 or final_epoch):
                validation = evaluate_localization(model, val_set, name=f"validation_epoch{epoch}")

            record = EpochRecord(
                epoch=epoch,
                lr=lr,
                mean_loss=float(sum(losses) / max(len(losses), 1)),
                steps=len(losses),
                validation=validation,
            )
            history.append(record)
            metrics = validation.model_dump() if validation is not None else {}
            last = _snapshot(model, optimizer, scheduler, epoch, step, run_config, metrics)
            if run_dir is not None:
                save_checkpoint(last, run_dir / LAST_CHECKPOINT)

            score = validation.pixel_auc if validation is not None else None
            if best is None or (score is not None and score > best_auc):
                best = last
                best_auc = score if score is not None else best_auc
                if run_dir is not None:
                    save_checkpoint(best, run_dir / BEST_CHECKPOINT)
            logger.info(
                f"[Trainer] Epoch {epoch}: loss {record.mean_loss:.5f}, lr {lr:g}"
                + (f", val pixel AUC {score:.4f}" if score is not None else "")
            )
            if stopped:
                logger.info(f"[Trainer] Reached max_steps={cfg.max_steps}")
                break
    finally:
        if record_logger is not None:
            close_record_logger(record_logger)

    return TrainResult(best=best, last=last, history=history, run_dir=run_dir)


def finetune(
    model: ManipulationNet,
    train_set: ForgeryDataset,
    cfg: Optional[TrainConfig] = None,
    **kwargs,
) -> TrainResult:
    """``train`` with the fine-tuning preset (initial lr 1e-4) and fresh optimizer state."""
    return train(model, train_set, cfg or TrainConfig.finetune(), **kwargs)
