"""Synthetic phase-contrast-like single-cell images with ground-truth masks.

Handy for smoke tests, pipeline checks and demo runs when no real
microscopy data is mounted: each image holds one blobby cell with a
bright halo, a shaded interior, an illumination gradient and sensor noise.

    python -m auranet.synthetic <root> --count 20 --size 256
"""

from __future__ import annotations

import argparse
from pathlib import Path

import cv2
import numpy as np

__all__ = ["synthetic_cell", "write_synthetic_dataset"]


def _blob_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    """Random star-convex blob occupying roughly the central third."""
    angles = np.linspace(0, 2 * np.pi, 24, endpoint=False)
    base_r = size * rng.uniform(0.16, 0.26)
    radii = base_r * (1.0 + rng.uniform(-0.35, 0.35, size=angles.shape))
    cx = size / 2 + rng.uniform(-0.08, 0.08) * size
    cy = size / 2 + rng.uniform(-0.08, 0.08) * size
    pts = np.stack(
        [cx + radii * np.cos(angles), cy + radii * np.sin(angles)], axis=1
    ).astype(np.int32)
    mask = np.zeros((size, size), np.uint8)
    cv2.fillPoly(mask, [pts], 1)
    # smooth the polygon corners into a cell-like outline
    mask = cv2.GaussianBlur(mask * 255, (0, 0), size * 0.01)
    return (mask > 127).astype(np.uint8)


def synthetic_cell(
    size: int = 256, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """One (image, mask) pair; image uint8 grayscale, mask uint8 {0,1}."""
    rng = np.random.default_rng(seed)
    mask = _blob_mask(size, rng)

    dist_in = cv2.distanceTransform(mask, cv2.DIST_L2, 3)
    dist_out = cv2.distanceTransform(1 - mask, cv2.DIST_L2, 3)

    background = 128.0
    img = np.full((size, size), background, np.float32)
    # bright halo just outside the boundary, shade-off inside
    halo_width = max(2.0, size * 0.015)
    img += 70.0 * np.exp(-((dist_out / halo_width) ** 2)) * (1 - mask)
    img -= 25.0 * np.tanh(dist_in / (size * 0.05)) * mask
    # slowly varying illumination + noise
    gx = rng.uniform(-20, 20)
    gy = rng.uniform(-20, 20)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    img += gx * xx + gy * yy
    img += rng.normal(0, 6.0, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8), mask


def write_synthetic_dataset(
    root: Path, count: int, size: int = 256, seed: int = 0
) -> list[str]:
    """Write `count` pairs under root/images and root/masks; returns ids."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    ids = []
    for k in range(count):
        image, mask = synthetic_cell(size=size, seed=seed + k)
        sample_id = f"cell_{k:03d}"
        cv2.imwrite(str(root / "images" / f"{sample_id}.png"), image)
        cv2.imwrite(str(root / "masks" / f"{sample_id}.png"), mask * 255)
        ids.append(sample_id)
    return ids


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("root", type=Path)
    parser.add_argument("--count", type=int, default=20)
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    ids = write_synthetic_dataset(args.root, args.count, args.size, args.seed)
    print(f"wrote {len(ids)} synthetic samples under {args.root}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
