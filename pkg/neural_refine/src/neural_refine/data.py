"""Dataset loading for refinement training.

A dataset directory holds coarse/reference file pairs plus a manifest.csv
whose last two columns name the CDM1 and GFB1 files. Each pair becomes one
sample: the coarse depth normalized by the frame's bounding radius (misses
filled with MISS_FILL) as input, and normalized reference depth, frame-basis
normals and the binary hit mask as targets.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import gfbio
from .model import DOWNSAMPLE_FACTOR

# padding values for batching samples of unequal size; pads read as misses
PAD_DEPTH = gfbio.MISS_FILL
PAD_NORMAL = (0.0, 0.0, 1.0)
PAD_MASK = 0.0


@dataclass
class RefineSample:
    """One training pair, already normalized. Arrays are float32; depth and
    mask are (h, w), normals (h, w, 3)."""

    frame: gfbio.Frame
    coarse: np.ndarray
    depth: np.ndarray
    normal: np.ndarray
    mask: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.coarse.shape

def load_pair(cdm1_path, gfb1_path) -> RefineSample:
    frame, coarse = gfbio.read_cdm1(cdm1_path)
    gframe, depth, normal, mask = gfbio.read_gfb1(gfb1_path)
    if (frame.width, frame.height) != (gframe.width, gframe.height):
        raise gfbio.FormatError(
            f"{cdm1_path} and {gfb1_path} disagree on screen size")
    if not np.allclose(frame.origin, gframe.origin, atol=1e-9):
        raise gfbio.FormatError(
            f"{cdm1_path} and {gfb1_path} are views from different origins")
    hit = mask >= 0.5
    depth_n = gfbio.normalize_depth(depth, gframe)
    depth_n[~hit] = gfbio.MISS_FILL
    return RefineSample(
        frame=frame,
        coarse=gfbio.normalize_depth(coarse, frame).astype(np.float32),
        depth=depth_n.astype(np.float32),
        normal=normal.astype(np.float32),
        mask=hit.astype(np.float32),
    )


def read_manifest(dataset_dir) -> list[tuple[Path, Path]]:
    """Pairs of (cdm1, gfb1) paths listed in <dataset_dir>/manifest.csv."""
    root = Path(dataset_dir)
    manifest = root / "manifest.csv"
    if not manifest.is_file():
        raise FileNotFoundError(f"no manifest.csv under {root}")
    pairs = []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            pairs.append((root / row["cdm1"], root / row["gfb1"]))
    if not pairs:
        raise gfbio.FormatError(f"{manifest}: no sample rows")
    return pairs


def load_dataset(dataset_dir) -> list[RefineSample]:
    return [load_pair(c, g) for c, g in read_manifest(dataset_dir)]


def _padded(arr: np.ndarray, h: int, w: int, fill) -> np.ndarray:
    out = np.empty((h, w) + arr.shape[2:], dtype=arr.dtype)
    out[...] = fill
    out[:arr.shape[0], :arr.shape[1]] = arr
    return out


def collate(samples: list[RefineSample]):
    """Stack samples into batch tensors, padding every screen to the largest
    height and width present, rounded up so the network can pool it.

    Returns (coarse, depth, normal, mask) tensors shaped (B, C, H, W).
    Padded pixels look like misses on both input and target sides.
    """
    if not samples:
        raise ValueError("cannot collate an empty sample list")
    h = max(s.shape[0] for s in samples)
    w = max(s.shape[1] for s in samples)
    h += (-h) % DOWNSAMPLE_FACTOR
    w += (-w) % DOWNSAMPLE_FACTOR
    coarse = np.stack([_padded(s.coarse, h, w, PAD_DEPTH) for s in samples])
    depth = np.stack([_padded(s.depth, h, w, PAD_DEPTH) for s in samples])
    normal = np.stack([_padded(s.normal, h, w, PAD_NORMAL) for s in samples])
    mask = np.stack([_padded(s.mask, h, w, PAD_MASK) for s in samples])
    return (torch.from_numpy(coarse).unsqueeze(1),
            torch.from_numpy(depth).unsqueeze(1),
            torch.from_numpy(normal).permute(0, 3, 1, 2).contiguous(),
            torch.from_numpy(mask).unsqueeze(1))


def batches(samples: list[RefineSample], batch_size: int, rng=None):
    """Yield collated batches; shuffles sample order when rng is given.

    Samples are grouped by screen area before batching so a small screen is
    not padded out to the largest in the set, then the batch order itself is
    shuffled. Membership within each size group still varies per epoch.
    """
    order = np.arange(len(samples))
    if rng is not None:
        rng.shuffle(order)
    area = np.array([samples[i].shape[0] * samples[i].shape[1]
                     for i in order])
    order = order[np.argsort(area, kind="stable")]
    groups = [order[s:s + batch_size]
              for s in range(0, len(order), batch_size)]
    if rng is not None:
        rng.shuffle(groups)
    for group in groups:
        yield collate([samples[i] for i in group])
