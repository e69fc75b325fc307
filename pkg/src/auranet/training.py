"""Training protocol, hyperparameter line search and the ablation driver.

train() runs the full loop: seeded split, validation holdout, per-epoch
shuffled batching with on-the-fly augmentation, composite loss, Adam, and
best/last checkpointing into a run directory:

    <run_dir>/config.snapshot
    <run_dir>/split.manifest
    <run_dir>/history.csv
    <run_dir>/checkpoints/{best,last}.pt
"""

from __future__ import annotations

import csv
import logging
import random
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .data import (
    AugmentationConfig,
    DatasetSpec,
    Sample,
    augment,
    derive_seed,
    ingest,
    resize_and_crop,
    split,
    write_split_manifest,
)
from .losses import LossConfig, combined_loss
from .metrics import DatasetReport, evaluate_dataset
from .model import ModelConfig, SegmentationNet, build, variant_label
from .weights import save_checkpoint

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "TrainHistory",
    "LineSearchRow",
    "AblationRow",
    "NonFiniteLossError",
    "TABLE_VARIANTS",
    "train",
    "line_search",
    "ablate",
    "evaluate_model",
    "predict_probabilities",
    "set_determinism",
    "resolve_device",
]

log = logging.getLogger(__name__)

# ablation toggle triples (resnet, attention, ac_loss) in report row order
TABLE_VARIANTS = [
    (False, False, False),
    (True, False, False),
    (False, True, False),
    (False, False, True),
    (True, False, True),
    (False, True, True),
    (True, True, False),
    (True, True, True),
]


class NonFiniteLossError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """All knobs of one training run. Defaults follow the experimental
    protocol: Adam, batch size 4, learning rate 3e-4."""

    dataset: DatasetSpec
    model: ModelConfig = ModelConfig()
    loss: LossConfig = LossConfig()
    augmentation: AugmentationConfig = AugmentationConfig()
    batch_size: int = 4
    learning_rate: float = 3e-4
    epochs: int = 100
    optimizer: str = "adam"
    seed: int = 0
    validation_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_checkpoint: Path | None = None
    final_checkpoint: Path | None = None
    optimizer_steps: int = 0

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "train_loss", "val_loss", "seconds"])
            for r in self.records:
                writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss),
                                 repr(r.seconds)])


@dataclass(frozen=True)
class LineSearchRow:
    value: float | tuple[float, float]
    report: DatasetReport

    @property
    def dice(self) -> float:
        return self.report.mean.dice


@dataclass(frozen=True)
class AblationRow:
    label: str
    resnet: bool
    attention: bool
    ac_loss: bool
    report: DatasetReport


def resolve_device(preference: str = "auto") -> torch.device:
    if preference == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(preference)


def set_determinism(seed: int) -> None:
    """Seed every RNG in play and prefer deterministic kernels."""
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    if torch.cuda.is_available():
        torch.cuda.manual_seed_all(seed)
    try:
        torch.use_deterministic_algorithms(True, warn_only=True)
    except Exception:  # older builds without warn_only
        pass


def _to_batch(
    samples: list[Sample], in_channels: int, device: torch.device
) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack samples: images scaled to [0,1] and replicated to the input
    channel count, masks as float maps."""
    images = np.stack([s.image for s in samples]).astype(np.float32) / 255.0
    masks = np.stack([s.mask for s in samples]).astype(np.float32)
    x = torch.from_numpy(images).unsqueeze(1)
    if in_channels > 1:
        x = x.repeat(1, in_channels, 1, 1)
    return x.to(device), torch.from_numpy(masks).to(device)


def _batch_loss(
    pred: torch.Tensor, gt: torch.Tensor, cfg: LossConfig
) -> torch.Tensor:
    # per-image losses averaged over the batch
    losses = [combined_loss(pred[i, 0], gt[i], cfg) for i in range(pred.shape[0])]
    return torch.stack(losses).mean()


def _validation_count(n_train: int, fraction: float) -> int:
    return int(round(fraction * n_train))


def _holdout(
    train_samples: list[Sample], fraction: float, seed: int
) -> tuple[list[Sample], list[Sample]]:
    n_val = _validation_count(len(train_samples), fraction)
    order = list(train_samples)
    random.Random(derive_seed(seed, "validation-holdout", 0)).shuffle(order)
    return order[n_val:], order[:n_val]


@torch.no_grad()
def _mean_loss(
    model: SegmentationNet,
    samples: list[Sample],
    cfg: LossConfig,
    batch_size: int,
    device: torch.device,
) -> float:
    model.eval()
    total, count = 0.0, 0
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        x, gt = _to_batch(chunk, model.config.in_channels, device)
        pred = model(x)
        for i in range(len(chunk)):
            total += float(combined_loss(pred[i, 0], gt[i], cfg))
            count += 1
    return total / count


@torch.no_grad()
def predict_probabilities(
    model: SegmentationNet,
    samples: list[Sample],
    device: torch.device | None = None,
    batch_size: int = 4,
) -> list[np.ndarray]:
    """Probability maps for already-preprocessed samples, in input order."""
    device = device or resolve_device()
    model = model.to(device)
    model.eval()
    out: list[np.ndarray] = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        x, _ = _to_batch(chunk, model.config.in_channels, device)
        pred = model(x)
        out.extend(pred[i, 0].cpu().numpy() for i in range(len(chunk)))
    return out


def evaluate_model(
    model: SegmentationNet,
    samples: list[Sample],
    threshold: float = 0.5,
    device: torch.device | None = None,
) -> DatasetReport:
    """Preprocessing-free evaluation: samples must already be at the
    model's working resolution."""
    probs = predict_probabilities(model, samples, device)
    pairs = [(p, s.mask) for p, s in zip(probs, samples)]
    return evaluate_dataset(pairs, threshold, ids=[s.id for s in samples])


def _snapshot_config(config: TrainConfig, path: Path) -> None:
    from .config import train_config_to_yaml

    path.write_text(train_config_to_yaml(config))


def train(
    config: TrainConfig,
    run_dir: Path,
    weights_path: Path | None = None,
    device: torch.device | None = None,
) -> tuple[SegmentationNet, TrainHistory]:
    """Run the full training loop; returns the final model and history.

    The best-validation-loss checkpoint lands in checkpoints/best.pt and
    the final state in checkpoints/last.pt. Deterministic for a fixed
    config and seed wherever the platform offers deterministic kernels.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    set_determinism(config.seed)
    device = device or resolve_device()

    samples = ingest(config.dataset)
    train_all, test_samples = split(samples, config.dataset)
    train_samples, val_samples = _holdout(
        train_all, config.validation_fraction, config.seed
    )
    write_split_manifest(
        run_dir / "split.manifest",
        {
            "train": [s.id for s in train_samples],
            "val": [s.id for s in val_samples],
            "test": [s.id for s in test_samples],
        },
    )
    _snapshot_config(config, run_dir / "config.snapshot")

    size = config.dataset.target_size
    train_samples = [resize_and_crop(s, size) for s in train_samples]
    val_samples = [resize_and_crop(s, size) for s in val_samples]
    if not val_samples:
        # degenerate holdout (tiny smoke runs): monitor the train set instead
        log.warning("validation holdout is empty; monitoring training set loss")
        val_samples = train_samples
    test_ids = {s.id for s in test_samples}

    model = build(config.model, weights_path).to(device)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    history = TrainHistory()
    checkpoints = run_dir / "checkpoints"
    best_val = float("inf")
    step = 0

    for epoch in range(config.epochs):
        t0 = time.time()
        model.train()
        order = list(train_samples)
        random.Random(derive_seed(config.seed, "batch-order", epoch)).shuffle(order)

        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            batch_ids = [s.id for s in chunk]
            overlap = test_ids.intersection(batch_ids)
            if overlap:
                raise RuntimeError(f"test ids leaked into a training batch: {overlap}")
            augmented = [
                augment(s, config.augmentation,
                        derive_seed(config.augmentation.seed, s.id, epoch))
                for s in chunk
            ]
            x, gt = _to_batch(augmented, config.model.in_channels, device)
            pred = model(x)
            loss = _batch_loss(pred, gt, config.loss)
            if not torch.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}, batch starting at "
                    f"{start}, sample ids {batch_ids}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1
            epoch_losses.append(float(loss.detach()))

        val_loss = _mean_loss(model, val_samples, config.loss,
                              config.batch_size, device)
        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(epoch_losses)),
            val_loss=val_loss,
            seconds=time.time() - t0,
        )
        history.records.append(record)
        log.info(
            "epoch %d/%d train %.6f val %.6f (%.1fs)",
            epoch + 1, config.epochs, record.train_loss, record.val_loss,
            record.seconds,
        )
        if val_loss < best_val:
            best_val = val_loss
            history.best_checkpoint = checkpoints / "best.pt"
            save_checkpoint(history.best_checkpoint, model, step=step, epoch=epoch)

    history.optimizer_steps = step
    history.final_checkpoint = checkpoints / "last.pt"
    save_checkpoint(history.final_checkpoint, model, step=step,
                    epoch=config.epochs - 1)
    history.write_csv(run_dir / "history.csv")
    return model, history


def _load_eval_partition(config: TrainConfig, partition: str,
                         run_dir: Path) -> list[Sample]:
    from .data import read_split_manifest

    manifest = read_split_manifest(Path(run_dir) / "split.manifest")
    wanted = set(manifest[partition])
    samples = [s for s in ingest(config.dataset) if s.id in wanted]
    return [resize_and_crop(s, config.dataset.target_size) for s in samples]


def line_search(
    param: str,
    grid: list,
    base: TrainConfig,
    run_root: Path,
    threshold: float = 0.5,
) -> list[LineSearchRow]:
    """One training run per grid value with identical seeds and splits,
    ranked by validation Dice.

    param "lambda" sweeps the area-term weight; "beta_gamma" takes
    (beta, gamma) pairs for the block weights.
    """
    if param not in ("lambda", "beta_gamma"):
        raise ValueError(f"param must be 'lambda' or 'beta_gamma', got {param!r}")
    if not grid:
        raise ValueError("grid must be nonempty")
    run_root = Path(run_root)

    rows = []
    for value in grid:
        if param == "lambda":
            loss_cfg = replace(base.loss, lam=float(value))
            tag = f"lambda_{value}"
        else:
            beta, gamma = value
            loss_cfg = replace(base.loss, beta=float(beta), gamma=float(gamma))
            tag = f"beta_{beta}_gamma_{gamma}"
        config = replace(base, loss=loss_cfg)
        run_dir = run_root / tag
        model, _ = train(config, run_dir)
        val_samples = _load_eval_partition(config, "val", run_dir)
        if not val_samples:
            val_samples = _load_eval_partition(config, "train", run_dir)
        report = evaluate_model(model, val_samples, threshold)
        rows.append(LineSearchRow(value=value, report=report))
    return sorted(rows, key=lambda r: r.dice, reverse=True)


def variant_configs(
    base: TrainConfig, resnet: bool, attention: bool, ac_loss: bool
) -> TrainConfig:
    """Derive one ablation variant: toggles map onto the encoder choice,
    the attention gates, and the loss block weights (AC off renormalizes
    the pixel-wise block to weight 1)."""
    model_cfg = replace(
        base.model,
        encoder="resnet18" if resnet else "plain_unet",
        pretrained=base.model.pretrained and resnet,
        attention=attention,
    )
    if ac_loss:
        loss_cfg = base.loss
    else:
        loss_cfg = replace(base.loss, gamma=0.0, beta=1.0)
    return replace(base, model=model_cfg, loss=loss_cfg)


def ablate(
    base: TrainConfig,
    variants: list[tuple[bool, bool, bool]] | None = None,
    run_root: Path = Path("ablation"),
    threshold: float = 0.5,
) -> list[AblationRow]:
    """Train and test-set-evaluate each toggle triple on one shared split."""
    if variants is None:
        variants = TABLE_VARIANTS
    if not variants:
        raise ValueError("variants must be nonempty")
    run_root = Path(run_root)

    rows = []
    manifest_ref: str | None = None
    for resnet, attention, ac_loss in variants:
        label = variant_label(resnet, attention, ac_loss)
        config = variant_configs(base, resnet, attention, ac_loss)
        run_dir = run_root / label.replace("+", "_").replace(" ", "_")
        model, _ = train(config, run_dir)

        manifest_text = (run_dir / "split.manifest").read_text()
        if manifest_ref is None:
            manifest_ref = manifest_text
        elif manifest_text != manifest_ref:
            raise RuntimeError(f"variant {label} trained on a different split")

        test_samples = _load_eval_partition(config, "test", run_dir)
        report = evaluate_model(model, test_samples, threshold)
        rows.append(AblationRow(label=label, resnet=resnet, attention=attention,
                                ac_loss=ac_loss, report=report))
    return rows
