"""Pretrained encoder weight handling and model checkpoints.

The ImageNet ResNet-18 archive is fetched from a configurable URL into a
local cache and verified by SHA-256 before use. Checkpoints bundle the
parameters with the model config and the training step counter.

Environment overrides:

    AURANET_WEIGHTS_DIR   cache directory (default ~/.cache/auranet)
    AURANET_WEIGHTS_URL   archive URL
    AURANET_WEIGHTS_FILE  path to an already-downloaded archive
"""

from __future__ import annotations

import hashlib
import logging
import os
import urllib.request
from dataclasses import asdict
from pathlib import Path

import torch

from .model import ModelConfig, SegmentationNet

__all__ = [
    "PretrainedWeightsError",
    "ChecksumMismatchError",
    "LayoutMismatchError",
    "fetch_weights",
    "resolve_weights",
    "load_pretrained_encoder",
    "save_checkpoint",
    "load_checkpoint",
    "state_dict_checksum",
]

log = logging.getLogger(__name__)

DEFAULT_WEIGHTS_URL = "https://download.pytorch.org/models/resnet18-f37072fd.pth"
# torchvision archives carry the first 8 hex chars of their SHA-256 in the name
DEFAULT_SHA256_PREFIX = "f37072fd"

CHECKPOINT_FORMAT_VERSION = 1


class PretrainedWeightsError(RuntimeError):
    """Pretrained weight archive missing, unreadable or rejected."""


class ChecksumMismatchError(PretrainedWeightsError):
    pass


class LayoutMismatchError(PretrainedWeightsError):
    pass


def cache_dir() -> Path:
    env = os.environ.get("AURANET_WEIGHTS_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "auranet"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _verify(path: Path, sha256_prefix: str | None) -> None:
    if not sha256_prefix:
        return
    digest = _sha256(path)
    if not digest.startswith(sha256_prefix):
        raise ChecksumMismatchError(
            f"checksum mismatch for {path}: sha256 {digest[:16]}... does not "
            f"start with expected {sha256_prefix}"
        )


def fetch_weights(
    url: str | None = None,
    dest_dir: Path | None = None,
    sha256_prefix: str | None = DEFAULT_SHA256_PREFIX,
) -> Path:
    """Download the encoder archive into the cache, reusing a verified copy."""
    url = url or os.environ.get("AURANET_WEIGHTS_URL", DEFAULT_WEIGHTS_URL)
    dest_dir = dest_dir or cache_dir()
    dest_dir.mkdir(parents=True, exist_ok=True)
    dest = dest_dir / url.rsplit("/", 1)[-1]
    if dest.exists():
        _verify(dest, sha256_prefix)
        return dest
    tmp = dest.with_suffix(".part")
    try:
        log.info("downloading pretrained encoder weights from %s", url)
        urllib.request.urlretrieve(url, tmp)  # noqa: S310
        _verify(tmp, sha256_prefix)
        tmp.replace(dest)
    except ChecksumMismatchError:
        tmp.unlink(missing_ok=True)
        raise
    except Exception as exc:
        tmp.unlink(missing_ok=True)
        raise PretrainedWeightsError(
            f"could not download pretrained weights from {url}: {exc}"
        ) from exc
    return dest


def resolve_weights() -> Path:
    """Locate the pretrained archive: explicit file, cache, then download."""
    explicit = os.environ.get("AURANET_WEIGHTS_FILE")
    if explicit:
        path = Path(explicit)
        if not path.exists():
            raise PretrainedWeightsError(f"AURANET_WEIGHTS_FILE not found: {path}")
        return path
    return fetch_weights()


def state_dict_checksum(state_dict: dict) -> str:
    """Order-independent SHA-256 over parameter names and tensor bytes."""
    h = hashlib.sha256()
    for name in sorted(state_dict):
        h.update(name.encode())
        tensor = state_dict[name]
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def load_pretrained_encoder(model: SegmentationNet, archive: Path) -> SegmentationNet:
    """Replace the encoder weights from an archive, leaving the decoder and
    attention gates untouched. The archive layout must match the encoder's
    stage structure (classifier weights in the archive are ignored).
    """
    if model.config.encoder != "resnet18":
        raise LayoutMismatchError(
            f"pretrained archive targets the resnet18 encoder, model has "
            f"{model.config.encoder!r}"
        )
    archive = Path(archive)
    if not archive.exists():
        raise PretrainedWeightsError(f"weight archive not found: {archive}")
    try:
        state = torch.load(archive, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise PretrainedWeightsError(f"unreadable weight archive {archive}: {exc}") from exc
    if not isinstance(state, dict):
        raise LayoutMismatchError(f"archive {archive} does not hold a state dict")

    try:
        missing, unexpected = model.encoder.load_state_dict(state, strict=False)
    except RuntimeError as exc:  # tensor shape mismatch
        raise LayoutMismatchError(f"archive layout mismatch: {exc}") from exc
    unexpected = [k for k in unexpected if not k.startswith("fc.")]
    if missing or unexpected:
        raise LayoutMismatchError(
            f"archive layout mismatch: missing={missing[:5]} unexpected={unexpected[:5]}"
        )
    log.info(
        "loaded pretrained encoder from %s (tensors sha256 %s)",
        archive,
        state_dict_checksum(model.encoder.state_dict())[:16],
    )
    return model


def save_checkpoint(
    path: Path, model: SegmentationNet, step: int = 0, epoch: int = 0
) -> None:
    """Write parameters + model config + step counter in a versioned file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_config": asdict(model.config),
        "state_dict": model.state_dict(),
        "step": int(step),
        "epoch": int(epoch),
    }
    torch.save(payload, path)


def load_checkpoint(path: Path) -> tuple[SegmentationNet, dict]:
    """Rebuild a model from a checkpoint; returns (model, metadata)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise ValueError(f"{path} is not a recognized checkpoint file")
    if payload["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format {payload['format_version']} "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    raw = dict(payload["model_config"])
    raw["input_size"] = tuple(raw["input_size"])
    config = ModelConfig(**raw)
    model = SegmentationNet(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    meta = {"step": payload["step"], "epoch": payload["epoch"]}
    return model, meta
