"""
Main CLI entry point for the maniploc system.

Subcommands build a synthetic corpus, train or fine-tune the network,
evaluate it (localization, detection, robustness grid), run inference with
optional early exit and render spatial attention maps.

Exit codes: 0 success, 1 unexpected error, 2 invalid configuration or
input, 3 file I/O failure, 4 non-finite numerics.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from maniploc.config import config
from maniploc.exceptions import (
    ConfigurationError,
    FileReadError,
    ManipLocError,
    ValidationError,
    convert_exception,
)
from maniploc.models.configs import DistortionSpec, RunConfig, TrainConfig
from maniploc.models.reports import MetricReport
from maniploc.network.model import build_model
from maniploc.services import evaluator, trainer
from maniploc.services.checkpoint import load_checkpoint, restore_model
from maniploc.services.corpus import ForgeryDataset, read_corpus, split_validation, write_corpus
from maniploc.services.inference import infer, time_early_exit
from maniploc.services.source_pool import ingest_source_images
from maniploc.services.synth_datagen import synthesize_corpus
from maniploc.services.visualizer import visualize_attention
from maniploc.utils.image_io import save_image, save_mask
from maniploc.utils.input_validators import InputValidator
from maniploc.utils.logger import get_logger
from maniploc.utils.path_utils import artifact_path, sanitize_filename
from maniploc.utils.progress import show_status, step_progress

logger = get_logger(__name__)


def load_run_config(path: Optional[str]) -> RunConfig:
    """
    Read a JSON run config; no path gives the defaults.

    Raises:
        FileReadError: If the file cannot be read or is not JSON
        ConfigurationError: If a key or value is invalid
    """
    if path is None:
        return RunConfig()
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise FileReadError(str(path), cause=e) from e
    try:
        return RunConfig(**document)
    except PydanticValidationError as e:
        raise ConfigurationError(f"Invalid run config {path}", str(e)) from e


def parse_distortion(text: Optional[str]) -> Optional[DistortionSpec]:
    """``kind[:param]``, e.g. ``jpegcomp:50``, ``mixed`` or ``none``."""
    if text is None:
        return None
    kind, _, param = text.partition(":")
    try:
        return DistortionSpec(kind=kind, param=float(param) if param else None)
    except (PydanticValidationError, ValueError) as e:
        raise ConfigurationError(f"Invalid distortion '{text}'", "  → Example: jpegcomp:50, gsblur:3, mixed") from e


def parse_coords(values: Sequence[str]) -> List[Tuple[int, int]]:
    coords = []
    for value in values:
        try:
            row, col = (int(v) for v in value.split(","))
        except ValueError as e:
            raise ValidationError(f"Invalid coordinate '{value}'", "  → Use row,column, e.g. 120,64") from e
        coords.append((row, col))
    return coords


class ManipLocApp:
    """
    Main application class for the maniploc system.

    Holds the run config and dispatches each CLI subcommand to the services.
    """

    def __init__(self, run_config: RunConfig):
        logger.info("=" * 60)
        logger.info("maniploc")
        logger.info("=" * 60)
        if not config.validate():
            raise ConfigurationError("Configuration validation failed", "  → Check MANIPLOC_HOME permissions")
        self.cfg = run_config

    # Data

    def synthesize(self, out_dir: Path, per_class: int, workers: int) -> None:
        cfg = self.cfg
        with step_progress(1, 2, "Source Ingestion"):
            pool = ingest_source_images(
                cfg.source_dir,
                format=cfg.source_format,
                out_size=cfg.gen.out_size,
                annotations=cfg.source_annotations,
                seed=cfg.gen.rng_seed,
                pool_size=cfg.procedural_pool_size,
            )
            show_status(f"{len(pool)} source images, {len(pool.skipped)} skipped", "info")
        with step_progress(2, 2, "Corpus Synthesis"):
            samples = synthesize_corpus(pool, cfg.gen, per_class, seed=cfg.gen.rng_seed, workers=workers)
            write_corpus(samples, out_dir)
        show_status(f"Corpus written to {out_dir}", "success")

    def _datasets(self, corpus_dir: Path) -> Tuple[ForgeryDataset, Optional[ForgeryDataset]]:
        records = read_corpus(corpus_dir)
        seed = self.cfg.train.seed
        if self.cfg.val_per_class > 0:
            train_records, val_records = split_validation(records, self.cfg.val_per_class, seed)
            return ForgeryDataset(train_records, corpus_dir, seed=seed), ForgeryDataset(val_records, corpus_dir, seed=seed)
        return ForgeryDataset(records, corpus_dir, seed=seed), None

    # Training

    def train(self, corpus_dir: Path, run_dir: Path, resume: Optional[str] = None) -> None:
        with step_progress(1, 2, "Loading Corpus"):
            train_set, val_set = self._datasets(corpus_dir)
            show_status(f"{len(train_set)} training / {len(val_set) if val_set else 0} validation samples", "info")
        with step_progress(2, 2, "Training"):
            model = build_model(self.cfg.model, seed=self.cfg.train.seed)
            result = trainer.train(
                model,
                train_set,
                self.cfg.train,
                val_set=val_set,
                run_dir=run_dir,
                run_config=self.cfg.model_dump(mode="json"),
                resume=load_checkpoint(resume) if resume else None,
            )
        self._summarize_training(result, run_dir)

    def finetune(self, corpus_dir: Path, run_dir: Path, init: Optional[str], lr: Optional[float]) -> None:
        overrides = self.cfg.train.model_dump()
        overrides["lr"] = lr if lr is not None else TrainConfig.finetune().lr
        cfg = TrainConfig(**overrides)
        with step_progress(1, 2, "Loading Corpus"):
            train_set, val_set = self._datasets(corpus_dir)
        with step_progress(2, 2, "Fine-tuning"):
            if init:
                model = restore_model(load_checkpoint(init))
                self.cfg = self.cfg.model_copy(update={"model": model.cfg})
            else:
                model = build_model(self.cfg.model, seed=cfg.seed)
            result = trainer.finetune(
                model, train_set, cfg, val_set=val_set, run_dir=run_dir, run_config=self.cfg.model_dump(mode="json")
            )
        self._summarize_training(result, run_dir)

    @staticmethod
    def _summarize_training(result: "trainer.TrainResult", run_dir: Path) -> None:
        print("\n" + "=" * 60)
        print("SUCCESS! Training complete.")
        print("=" * 60)
        for record in result.history:
            auc = record.validation.pixel_auc if record.validation else None
            print(f"  epoch {record.epoch:3d}  loss {record.mean_loss:.5f}  lr {record.lr:.2e}"
                  + (f"  val pixel AUC {auc:.4f}" if auc is not None else ""))
        print(f"Checkpoints: {run_dir / trainer.BEST_CHECKPOINT}, {run_dir / trainer.LAST_CHECKPOINT}")
        print("=" * 60 + "\n")

    # Evaluation

    def _write_reports(self, reports: List[MetricReport], out_dir: Path, name: str) -> None:
        table = evaluator.write_report_table(reports, artifact_path(out_dir, name, ".csv"))
        document = evaluator.write_report_json(reports, artifact_path(out_dir, name, ".json"))
        for report in reports:
            show_status(
                ", ".join(f"{k}={v}" for k, v in report.model_dump(exclude={"extras", "per_scale_pixel_auc"}).items()
                          if v is not None),
                "info",
            )
        show_status(f"Reports: {table}, {document}", "success")

    def evaluate(
        self,
        task: str,
        checkpoint: str,
        corpus_dir: Path,
        out_dir: Path,
        name: str,
        distortion: Optional[DistortionSpec],
        mode: str,
        grid: bool,
    ) -> None:
        model = restore_model(load_checkpoint(checkpoint))
        dataset = ForgeryDataset(read_corpus(corpus_dir), corpus_dir, seed=self.cfg.train.seed)
        if grid:
            reports = evaluator.robustness_grid(model, dataset, task=task, mode=mode)
        elif task == "localization":
            reports = [evaluator.evaluate_localization(model, dataset, distortion, name=name)]
        else:
            reports = [evaluator.evaluate_detection(model, dataset, mode, distortion, name=name)]
        self._write_reports(reports, out_dir, name)

    # Inference

    def infer(self, checkpoint: str, image: str, stop_at: int, out_dir: Path, name: str, timing: int) -> None:
        model = restore_model(load_checkpoint(checkpoint))
        result = infer(model, image, stop_at=stop_at)
        np.save(artifact_path(out_dir, f"{name}_mask", ".npy"), result.mask)
        save_image(np.repeat(result.mask[..., None], 3, axis=2), artifact_path(out_dir, f"{name}_mask", ".png"))
        save_mask(result.mask >= 0.5, artifact_path(out_dir, f"{name}_mask_binary", ".png"))
        show_status(f"Detection score: {result.score:.4f}", "info")
        show_status(f"Mask {result.mask.shape[0]}x{result.mask.shape[1]} written to {out_dir}", "success")
        if timing:
            for scale, row in time_early_exit(model, image, repeats=timing).items():
                print(f"  stop_at={scale}: {row['median_s'] * 1000:8.1f} ms  ({row['ratio']:.2f}x)")

    def visualize(
        self, checkpoint: str, image: str, scale: int, coords: List[Tuple[int, int]], channel: int, out_dir: Path, name: str
    ) -> None:
        model = restore_model(load_checkpoint(checkpoint))
        maps = visualize_attention(model, image, scale, coords, out_dir=out_dir, channel=channel, stem=name)
        for path in maps.files:
            logger.info(f"✓ {path}")
        show_status(f"{len(maps.files)} files written to {out_dir}", "success")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maniploc",
        description="maniploc: image manipulation detection and localization",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  maniploc synthesize --config run.json --per-class 1100
  maniploc train --config run.json
  maniploc eval-loc --checkpoint runs/default/best.ckpt --corpus-dir test_corpus
  maniploc robustness --checkpoint runs/default/best.ckpt --corpus-dir test_corpus
  maniploc infer --checkpoint runs/default/best.ckpt --image photo.jpg --stop-at 2
  maniploc visualize --checkpoint runs/default/best.ckpt --image photo.jpg --coords 120,64

For more information, see README.md
        """,
    )
    parser.add_argument("--log-level", type=str, default=None, help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=str, help="JSON run config (see `maniploc config-schema`)")
        p.add_argument("--seed", type=int, help="Override the training/evaluation seed")
        p.add_argument("--device", choices=["cpu", "cuda", "auto"], help="Override the device")

    p = sub.add_parser("synthesize", help="Build a synthetic corpus")
    common(p)
    p.add_argument("--out", type=str, help="Corpus directory (default: corpus_dir from the config)")
    p.add_argument("--per-class", type=int, help="Samples per class")
    p.add_argument("--workers", type=int, help="Worker processes (0 = serial)")
    p.add_argument("--source-dir", type=str, help="Source image directory")
    p.add_argument("--source-format", choices=["directory", "coco", "procedural"])
    p.add_argument("--annotations", type=str, help="COCO annotation file")

    for command, help_text in (("train", "Train from scratch"), ("finetune", "Fine-tune on an ingested corpus")):
        p = sub.add_parser(command, help=help_text)
        common(p)
        p.add_argument("--corpus-dir", type=str)
        p.add_argument("--run-dir", type=str)
        p.add_argument("--epochs", type=int)
        p.add_argument("--max-steps", type=int)
        p.add_argument("--precision", choices=["single", "double"])
        if command == "train":
            p.add_argument("--resume", type=str, help="Checkpoint to resume from")
        else:
            p.add_argument("--init", type=str, help="Checkpoint to start from")
            p.add_argument("--lr", type=float, help="Initial learning rate (default 1e-4)")

    for command, help_text in (
        ("eval-loc", "Pixel-level localization metrics"),
        ("eval-det", "Image-level detection metrics"),
        ("robustness", "Metrics over the ten-distortion grid"),
    ):
        p = sub.add_parser(command, help=help_text)
        common(p)
        p.add_argument("--checkpoint", type=str, required=True)
        p.add_argument("--corpus-dir", type=str)
        p.add_argument("--out-dir", type=str, default=str(config.OUTPUT_DIR / "reports"))
        p.add_argument("--name", type=str, default=command.replace("-", "_"))
        p.add_argument("--mode", choices=["head", "mask_average"], default="head")
        if command == "robustness":
            p.add_argument("--task", choices=["localization", "detection"], default="localization")
        else:
            p.add_argument("--distortion", type=str, help="kind[:param], e.g. jpegcomp:50")

    p = sub.add_parser("infer", help="Score and localize one image")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--image", type=str, required=True)
    p.add_argument("--stop-at", type=int, default=1, help="Finest scale to compute (4..1)")
    p.add_argument("--out-dir", type=str, default=str(config.OUTPUT_DIR / "inference"))
    p.add_argument("--name", type=str, help="Output file stem (default: image name)")
    p.add_argument("--timing", type=int, default=0, help="Also time every stop scale over N runs")

    p = sub.add_parser("visualize", help="Spatial attention response maps")
    p.add_argument("--checkpoint", type=str, required=True)
    p.add_argument("--image", type=str, required=True)
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--coords", type=str, nargs="+", required=True, help="row,column pairs")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--out-dir", type=str, default=str(config.OUTPUT_DIR / "attention"))
    p.add_argument("--name", type=str, default="attention")

    sub.add_parser("config-schema", help="Print the JSON schema of the run config")
    return parser


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    train = {}
    for flag, key in (("seed", "seed"), ("device", "device"), ("epochs", "epochs"),
                      ("max_steps", "max_steps"), ("precision", "precision")):
        value = getattr(args, flag, None)
        if value is not None:
            train[key] = value
    top = {}
    for flag, key in (("corpus_dir", "corpus_dir"), ("run_dir", "run_dir"), ("source_dir", "source_dir"),
                      ("source_format", "source_format"), ("annotations", "source_annotations"),
                      ("workers", "workers")):
        value = getattr(args, flag, None)
        if value is not None:
            top[key] = value
    if not train and not top:
        return cfg
    document = cfg.model_dump()
    document["train"].update(train)
    document.update(top)
    try:
        return RunConfig(**document)
    except PydanticValidationError as e:
        raise ConfigurationError("Invalid command-line override", str(e)) from e


def _validated_name(name: str) -> str:
    is_valid, error_msg = InputValidator.validate_output_name(name)
    if not is_valid:
        raise ValidationError(f"Invalid output name:\n{error_msg}")
    return sanitize_filename(name)


def run(args: argparse.Namespace) -> None:
    if args.command == "config-schema":
        print(json.dumps(RunConfig.model_json_schema(), indent=2))
        return

    cfg = _apply_overrides(load_run_config(getattr(args, "config", None)), args)
    app = ManipLocApp(cfg)

    if args.command == "synthesize":
        app.synthesize(
            Path(args.out or cfg.corpus_dir),
            args.per_class if args.per_class is not None else cfg.synth_per_class,
            cfg.workers,
        )
    elif args.command == "train":
        app.train(Path(cfg.corpus_dir), Path(cfg.run_dir), resume=args.resume)
    elif args.command == "finetune":
        app.finetune(Path(cfg.corpus_dir), Path(cfg.run_dir), init=args.init, lr=args.lr)
    elif args.command in ("eval-loc", "eval-det", "robustness"):
        task = {"eval-loc": "localization", "eval-det": "detection"}.get(args.command) or args.task
        app.evaluate(
            task,
            args.checkpoint,
            Path(cfg.corpus_dir),
            Path(args.out_dir),
            _validated_name(args.name),
            parse_distortion(getattr(args, "distortion", None)),
            args.mode,
            grid=args.command == "robustness",
        )
    elif args.command == "infer":
        is_valid, error_msg = InputValidator.validate_stop_at(args.stop_at)
        if not is_valid:
            raise ConfigurationError(error_msg)
        name = _validated_name(args.name or Path(args.image).stem)
        app.infer(args.checkpoint, args.image, args.stop_at, Path(args.out_dir), name, args.timing)
    elif args.command == "visualize":
        app.visualize(
            args.checkpoint, args.image, args.scale, parse_coords(args.coords),
            args.channel, Path(args.out_dir), _validated_name(args.name),
        )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main CLI entry point.

    Returns:
        int: Process exit code
    """
    args = build_parser().parse_args(argv)
    if args.log_level:
        is_valid, error_msg = InputValidator.validate_log_level(args.log_level)
        if not is_valid:
            print(f"ERROR: {error_msg}")
            return ConfigurationError.exit_code
        logging.getLogger().setLevel(args.log_level.upper())

    try:
        run(args)
    except ManipLocError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        print(f"\nERROR: {e}")
        return e.exit_code
    except Exception as e:
        converted = convert_exception(e, args.command)
        logger.error(f"Unexpected error: {e}", exc_info=True)
        print(f"\nERROR: {converted}")
        print("Check logs for details: logs/system.log")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
