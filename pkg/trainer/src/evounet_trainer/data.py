"""Paired image datasets.

On-disk format: an .npz file with two uint8 arrays, "source" and "target",
both shaped (N, H, W, 3).  Loading converts to NCHW float tensors scaled to
[-1, 1] (the generator ends in tanh).

The toy dataset is a deterministic synthetic set for CI: smooth random color
blobs as sources, and a fixed pointwise transform (channel roll + inversion)
as targets, so even a small generator can overfit it quickly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F


def load_pairs(path: str | Path) -> tuple[torch.Tensor, torch.Tensor]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with np.load(path) as archive:
        if "source" not in archive or "target" not in archive:
            raise ValueError(f"{path} must contain 'source' and 'target' arrays")
        source = archive["source"]
        target = archive["target"]
    if source.shape != target.shape or source.ndim != 4 or source.shape[-1] != 3:
        raise ValueError(f"{path}: expected matching (N, H, W, 3) arrays")
    return _to_tensor(source), _to_tensor(target)


def _to_tensor(array: np.ndarray) -> torch.Tensor:
    tensor = torch.from_numpy(array.astype(np.float32) / 127.5 - 1.0)
    return tensor.permute(0, 3, 1, 2).contiguous()


def _smooth_blobs(rng: np.random.Generator, count: int, resolution: int) -> np.ndarray:
    coarse = rng.uniform(0, 255, size=(count, 8, 8, 3)).astype(np.float32)
    t = torch.from_numpy(coarse).permute(0, 3, 1, 2)
    smooth = F.interpolate(t, size=(resolution, resolution), mode="bilinear", align_corners=False)
    return smooth.permute(0, 2, 3, 1).numpy().clip(0, 255).astype(np.uint8)


def toy_pair_arrays(
    rng: np.random.Generator, count: int, resolution: int
) -> tuple[np.ndarray, np.ndarray]:
    source = _smooth_blobs(rng, count, resolution)
    target = 255 - np.roll(source, shift=1, axis=3)
    return source, target


def make_toy_dataset(
    out_dir: str | Path, images: int = 4, resolution: int = 64, seed: int = 0
) -> tuple[Path, Path]:
    """Write deterministic train.npz / val.npz pairs; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for name in ("train", "val"):
        source, target = toy_pair_arrays(rng, images, resolution)
        path = out_dir / f"{name}.npz"
        np.savez_compressed(path, source=source, target=target)
        paths.append(path)
    return paths[0], paths[1]
