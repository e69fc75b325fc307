"""Dataset ingestion, deterministic splitting, resize-then-crop
preprocessing and the training-time augmentation pipeline.

Expected directory layout:

    <root>/images/*.{png,tif,...}
    <root>/masks/*.{png,tif,...}     matched to images by filename stem

Masks are read as any-nonzero-is-foreground and kept strictly binary
through every stage of the pipeline.
"""

from __future__ import annotations

import random
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np
from scipy.ndimage import gaussian_filter

__all__ = [
    "Sample",
    "DatasetSpec",
    "AugmentationConfig",
    "AugmentParams",
    "ingest",
    "split",
    "resize_and_crop",
    "resize_and_crop_image",
    "scaled_size",
    "augment",
    "draw_augment_params",
    "apply_augment_params",
    "write_split_manifest",
    "read_split_manifest",
    "derive_seed",
]

IMAGE_EXTENSIONS = (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp")


@dataclass
class Sample:
    """One image/mask pair. image is a grayscale uint8 raster, mask is
    uint8 {0,1} of the same size."""

    image: np.ndarray
    mask: np.ndarray
    id: str
    dataset_id: str = "custom"

    def validate(self) -> None:
        if self.image.shape != self.mask.shape:
            raise ValueError(
                f"sample {self.id}: image {self.image.shape} vs mask "
                f"{self.mask.shape} size mismatch"
            )
        vals = np.unique(self.mask)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError(f"sample {self.id}: mask is not binary ({vals[:5]})")


@dataclass(frozen=True)
class DatasetSpec:
    """Where a dataset lives and how it is split and sized."""

    root: Path
    target_size: int = 256
    train_count: int = 25
    test_count: int = 10
    split_seed: int = 0
    dataset_id: str = "custom"

    def __post_init__(self) -> None:
        if self.target_size < 2:
            raise ValueError(f"target_size must be >= 2, got {self.target_size}")
        if self.train_count < 1 or self.test_count < 1:
            raise ValueError("train_count and test_count must be >= 1")


@dataclass(frozen=True)
class AugmentationConfig:
    """Augmentation switches and parameter ranges.

    Zero probabilities/ranges and false flags disable each transform, so
    the all-zero config is the identity. elastic_alpha is the peak
    displacement in pixels after smoothing with elastic_sigma.
    """

    hflip_p: float = 0.5
    vflip_p: float = 0.5
    rotation_deg: float = 30.0
    shift_frac: float = 0.1
    scale_frac: float = 0.1
    shear_deg: float = 10.0
    clahe: bool = True
    clahe_clip: float = 2.0
    clahe_tiles: int = 8
    elastic: bool = True
    elastic_alpha: float = 8.0
    elastic_sigma: float = 16.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("hflip_p", "vflip_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        for name in ("rotation_deg", "shift_frac", "scale_frac", "shear_deg",
                     "elastic_alpha", "elastic_sigma", "clahe_clip"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.clahe_tiles < 1:
            raise ValueError(f"clahe_tiles must be >= 1, got {self.clahe_tiles}")

    @classmethod
    def identity(cls) -> "AugmentationConfig":
        return cls(
            hflip_p=0.0, vflip_p=0.0, rotation_deg=0.0, shift_frac=0.0,
            scale_frac=0.0, shear_deg=0.0, clahe=False, elastic=False,
        )


@dataclass
class AugmentParams:
    """Concrete transform draws for one sample; applying them is
    deterministic, which keeps image and mask in geometric lockstep."""

    hflip: bool = False
    vflip: bool = False
    angle_deg: float = 0.0
    shift_x: float = 0.0  # pixels
    shift_y: float = 0.0
    scale: float = 1.0
    shear_deg: float = 0.0
    elastic_dx: np.ndarray | None = None  # pixel displacement fields
    elastic_dy: np.ndarray | None = None
    clahe: bool = False
    clahe_clip: float = 2.0
    clahe_tiles: int = 8

    @property
    def has_affine(self) -> bool:
        return (
            self.angle_deg != 0.0
            or self.shift_x != 0.0
            or self.shift_y != 0.0
            or self.scale != 1.0
            or self.shear_deg != 0.0
        )


def derive_seed(master_seed: int, sample_id: str, epoch: int) -> int:
    """Stable per-(sample, epoch) seed so parallel workers and reruns draw
    identical augmentations."""
    key = f"{master_seed}:{sample_id}:{epoch}".encode()
    return zlib.crc32(key)


def _read_gray(path: Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise IOError(f"unreadable image file: {path}")
    return img


def ingest(spec: DatasetSpec) -> list[Sample]:
    """Load all image/mask pairs under spec.root, sorted by id.

    Masks are binarized (any nonzero value is foreground). A missing mask,
    an unreadable file or a size mismatch within a pair is an error.
    """
    root = Path(spec.root)
    images_dir = root / "images"
    masks_dir = root / "masks"
    if not images_dir.is_dir():
        raise FileNotFoundError(f"no images directory under {root}")
    image_paths = sorted(
        (p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS),
        key=lambda p: p.stem,
    )
    if not image_paths:
        raise FileNotFoundError(f"no samples found under {images_dir}")

    mask_by_stem = {
        p.stem: p
        for p in masks_dir.iterdir()
        if p.suffix.lower() in IMAGE_EXTENSIONS
    } if masks_dir.is_dir() else {}

    samples = []
    for img_path in image_paths:
        mask_path = mask_by_stem.get(img_path.stem)
        if mask_path is None:
            raise FileNotFoundError(f"no mask for image {img_path.name}")
        image = _read_gray(img_path)
        mask = (_read_gray(mask_path) > 0).astype(np.uint8)
        sample = Sample(image=image, mask=mask, id=img_path.stem,
                        dataset_id=spec.dataset_id)
        sample.validate()
        samples.append(sample)
    return samples


def split(
    samples: list[Sample], spec: DatasetSpec, manifest_path: Path | None = None
) -> tuple[list[Sample], list[Sample]]:
    """Deterministic seeded shuffle into disjoint train/test lists of the
    configured sizes; optionally persists the id manifest."""
    if spec.train_count + spec.test_count > len(samples):
        raise ValueError(
            f"cannot split {len(samples)} samples into "
            f"{spec.train_count} train + {spec.test_count} test"
        )
    order = sorted(samples, key=lambda s: s.id)
    rng = random.Random(spec.split_seed)
    rng.shuffle(order)
    train = order[: spec.train_count]
    test = order[spec.train_count : spec.train_count + spec.test_count]
    if manifest_path is not None:
        write_split_manifest(
            manifest_path, {"train": [s.id for s in train], "test": [s.id for s in test]}
        )
    return train, test


def write_split_manifest(path: Path, partitions: dict[str, list[str]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, ids in partitions.items():
        lines.append(f"[{name}]")
        lines.extend(ids)
    path.write_text("\n".join(lines) + "\n")


def read_split_manifest(path: Path) -> dict[str, list[str]]:
    partitions: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = partitions.setdefault(line[1:-1], [])
        elif current is not None:
            current.append(line)
        else:
            raise ValueError(f"malformed split manifest {path}: id before section")
    return partitions


def scaled_size(height: int, width: int, target: int) -> tuple[int, int]:
    """Aspect-preserving intermediate size: the smaller dimension becomes
    `target`, the other is rounded to nearest."""
    if height < 2 or width < 2:
        raise ValueError(f"degenerate source size {height}x{width}")
    scale = target / min(height, width)
    if height <= width:
        return target, int(round(width * scale))
    return int(round(height * scale)), target


def _center_crop(arr: np.ndarray, size: int) -> np.ndarray:
    h, w = arr.shape[:2]
    top = (h - size) // 2
    left = (w - size) // 2
    return arr[top : top + size, left : left + size]


def resize_and_crop_image(
    image: np.ndarray, target: int, interpolation: int
) -> np.ndarray:
    """Resize so the smaller dimension matches target, then center-crop the
    larger one. Returns exactly target x target."""
    h, w = image.shape[:2]
    new_h, new_w = scaled_size(h, w, target)
    if (new_h, new_w) != (h, w):
        image = cv2.resize(image, (new_w, new_h), interpolation=interpolation)
    return _center_crop(image, target)


def resize_and_crop(sample: Sample, target: int) -> Sample:
    """Preprocess one sample to target x target: bilinear for the image,
    nearest for the mask, mask re-binarized."""
    image = resize_and_crop_image(sample.image, target, cv2.INTER_LINEAR)
    mask = resize_and_crop_image(sample.mask, target, cv2.INTER_NEAREST)
    out = replace(sample, image=image, mask=(mask > 0).astype(np.uint8))
    out.validate()
    return out


def draw_augment_params(
    cfg: AugmentationConfig, draw_seed: int, shape: tuple[int, int]
) -> AugmentParams:
    """Sample concrete transform parameters for one image of the given shape.

    Draw order is fixed so identical (cfg, seed) always produce identical
    parameters.
    """
    rng = np.random.default_rng(draw_seed)
    params = AugmentParams(
        hflip=bool(rng.random() < cfg.hflip_p),
        vflip=bool(rng.random() < cfg.vflip_p),
        clahe=cfg.clahe,
        clahe_clip=cfg.clahe_clip,
        clahe_tiles=cfg.clahe_tiles,
    )
    h, w = shape
    if cfg.rotation_deg > 0:
        params.angle_deg = float(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
    if cfg.shift_frac > 0:
        params.shift_x = float(rng.uniform(-cfg.shift_frac, cfg.shift_frac) * w)
        params.shift_y = float(rng.uniform(-cfg.shift_frac, cfg.shift_frac) * h)
    if cfg.scale_frac > 0:
        params.scale = float(1.0 + rng.uniform(-cfg.scale_frac, cfg.scale_frac))
    if cfg.shear_deg > 0:
        params.shear_deg = float(rng.uniform(-cfg.shear_deg, cfg.shear_deg))
    if cfg.elastic and cfg.elastic_alpha > 0:
        dx = gaussian_filter(rng.uniform(-1, 1, size=shape), cfg.elastic_sigma,
                             mode="reflect")
        dy = gaussian_filter(rng.uniform(-1, 1, size=shape), cfg.elastic_sigma,
                             mode="reflect")
        peak = max(np.abs(dx).max(), np.abs(dy).max())
        if peak > 0:
            params.elastic_dx = (dx * (cfg.elastic_alpha / peak)).astype(np.float32)
            params.elastic_dy = (dy * (cfg.elastic_alpha / peak)).astype(np.float32)
    return params


def _affine_matrix(params: AugmentParams, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    # rotate + isotropic scale about the image center
    m = cv2.getRotationMatrix2D((cx, cy), params.angle_deg, params.scale)
    matrix = np.vstack([m, [0.0, 0.0, 1.0]])
    if params.shear_deg != 0.0:
        shear = np.tan(np.deg2rad(params.shear_deg))
        shear_m = np.array(
            [[1.0, shear, -shear * cy], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        )
        matrix = shear_m @ matrix
    matrix[0, 2] += params.shift_x
    matrix[1, 2] += params.shift_y
    return matrix[:2]


def _warp(arr: np.ndarray, matrix: np.ndarray, nearest: bool) -> np.ndarray:
    h, w = arr.shape[:2]
    flags = cv2.INTER_NEAREST if nearest else cv2.INTER_LINEAR
    return cv2.warpAffine(
        arr, matrix, (w, h), flags=flags, borderMode=cv2.BORDER_REFLECT_101
    )


def _remap(arr: np.ndarray, map_x: np.ndarray, map_y: np.ndarray,
           nearest: bool) -> np.ndarray:
    flags = cv2.INTER_NEAREST if nearest else cv2.INTER_LINEAR
    return cv2.remap(arr, map_x, map_y, interpolation=flags,
                     borderMode=cv2.BORDER_REFLECT_101)


def apply_augment_params(
    image: np.ndarray, mask: np.ndarray | None, params: AugmentParams
) -> tuple[np.ndarray, np.ndarray | None]:
    """Apply drawn parameters: geometric transforms hit image and mask
    identically (mask nearest-neighbour, re-binarized), CLAHE the image only.
    """
    if params.hflip:
        image = np.ascontiguousarray(image[:, ::-1])
        mask = np.ascontiguousarray(mask[:, ::-1]) if mask is not None else None
    if params.vflip:
        image = np.ascontiguousarray(image[::-1, :])
        mask = np.ascontiguousarray(mask[::-1, :]) if mask is not None else None
    if params.has_affine:
        matrix = _affine_matrix(params, image.shape[:2])
        image = _warp(image, matrix, nearest=False)
        if mask is not None:
            mask = _warp(mask, matrix, nearest=True)
    if params.elastic_dx is not None:
        h, w = image.shape[:2]
        grid_x, grid_y = np.meshgrid(
            np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32)
        )
        map_x = grid_x + params.elastic_dx
        map_y = grid_y + params.elastic_dy
        image = _remap(image, map_x, map_y, nearest=False)
        if mask is not None:
            mask = _remap(mask, map_x, map_y, nearest=True)
    if params.clahe:
        clahe = cv2.createCLAHE(
            clipLimit=params.clahe_clip,
            tileGridSize=(params.clahe_tiles, params.clahe_tiles),
        )
        image = clahe.apply(image)
    if mask is not None:
        mask = (mask > 0).astype(np.uint8)
    return image, mask


def augment(sample: Sample, cfg: AugmentationConfig, draw_seed: int) -> Sample:
    """One stochastic augmentation draw; identical (cfg, draw_seed) yield
    identical output, and the identity config returns the input unchanged."""
    params = draw_augment_params(cfg, draw_seed, sample.image.shape[:2])
    image, mask = apply_augment_params(sample.image, sample.mask, params)
    out = replace(sample, image=image, mask=mask)
    out.validate()
    return out
