"""Depth-completion network: a U-Net over ConvNeXt blocks with one shared
encoder and three structurally identical decoders for depth, normals and the
hit mask.

Four resolution levels at widths 32/64/128/256; max-pool downsampling,
sub-pixel (PixelShuffle) upsampling. Inputs must be divisible by 8 on both
spatial axes; ``pad_to_multiple`` handles arbitrary screen sizes.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

WIDTHS = (32, 64, 128, 256)
DOWNSAMPLE_FACTOR = 2 ** (len(WIDTHS) - 1)


class ConvNeXtBlock(nn.Module):
    """7x7 depthwise conv, layer norm, 4x pointwise expand, GELU, pointwise
    contract, residual."""

    def __init__(self, dim: int):
        super().__init__()
        self.dwconv = nn.Conv2d(dim, dim, kernel_size=7, padding=3, groups=dim)
        self.norm = nn.LayerNorm(dim)
        self.expand = nn.Linear(dim, 4 * dim)
        self.contract = nn.Linear(4 * dim, dim)

    def forward(self, x):
        res = x
        x = self.dwconv(x)
        x = x.permute(0, 2, 3, 1)
        x = self.norm(x)
        x = self.contract(F.gelu(self.expand(x)))
        return res + x.permute(0, 3, 1, 2)


class SubPixelUp(nn.Module):
    """Sub-pixel upsampling: conv to 4x channels then depth-to-space."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.conv = nn.Conv2d(in_dim, 4 * out_dim, kernel_size=3, padding=1)
        self.shuffle = nn.PixelShuffle(2)

    def forward(self, x):
        return self.shuffle(self.conv(x))


class Decoder(nn.Module):
    def __init__(self, out_channels: int):
        super().__init__()
        ups, fuses, blocks = [], [], []
        for hi, lo in zip(WIDTHS[:0:-1], WIDTHS[-2::-1]):
            ups.append(SubPixelUp(hi, lo))
            fuses.append(nn.Conv2d(2 * lo, lo, kernel_size=1))
            blocks.append(ConvNeXtBlock(lo))
        self.ups = nn.ModuleList(ups)
        self.fuses = nn.ModuleList(fuses)
        self.blocks = nn.ModuleList(blocks)
        self.head = nn.Conv2d(WIDTHS[0], out_channels, kernel_size=1)

    def forward(self, bottom, skips):
        x = bottom
        for up, fuse, block, skip in zip(self.ups, self.fuses, self.blocks,
                                         reversed(skips)):
            x = block(fuse(torch.cat([up(x), skip], dim=1)))
        return self.head(x)


class RefineNet(nn.Module):
    def __init__(self, blocks_per_level: int = 2):
        super().__init__()
        self.blocks_per_level = blocks_per_level
        self.stem = nn.Conv2d(1, WIDTHS[0], kernel_size=3, padding=1)
        stages, squeezes = [], []
        prev = WIDTHS[0]
        for width in WIDTHS:
            squeezes.append(nn.Identity() if width == prev
                            else nn.Conv2d(prev, width, kernel_size=1))
            stages.append(nn.Sequential(
                *[ConvNeXtBlock(width) for _ in range(blocks_per_level)]))
            prev = width
        self.squeezes = nn.ModuleList(squeezes)
        self.stages = nn.ModuleList(stages)
        self.pool = nn.MaxPool2d(2)
        self.depth_head = Decoder(1)
        self.normal_head = Decoder(3)
        self.mask_head = Decoder(1)
        # start the depth branch at an exact identity so training begins
        # from the coarse map instead of coarse plus decoder noise
        nn.init.zeros_(self.depth_head.head.weight)
        nn.init.zeros_(self.depth_head.head.bias)

    def forward(self, x):
        if x.shape[-1] % DOWNSAMPLE_FACTOR or x.shape[-2] % DOWNSAMPLE_FACTOR:
            raise ValueError(
                f"input sides must be divisible by {DOWNSAMPLE_FACTOR}, "
                f"got {tuple(x.shape[-2:])}")
        coarse = x
        x = self.stem(x)
        skips = []
        for i, (squeeze, stage) in enumerate(zip(self.squeezes, self.stages)):
            if i:
                x = squeeze(self.pool(x))
            x = stage(x)
            if i < len(WIDTHS) - 1:
                skips.append(x)
        # the depth decoder regresses the correction to the input map;
        # absolute regression cannot reach useful accuracy at small
        # training scales
        depth = coarse + self.depth_head(x, skips)
        normal = self.normal_head(x, skips)
        normal = normal / (normal.norm(dim=1, keepdim=True) + 1e-8)
        mask = torch.sigmoid(self.mask_head(x, skips))
        return depth, normal, mask


def pad_to_multiple(x: torch.Tensor, factor: int = DOWNSAMPLE_FACTOR):
    """Reflect-pad the last two axes up to a multiple of factor; returns the
    padded tensor and the original (h, w) for cropping back."""
    h, w = x.shape[-2], x.shape[-1]
    ph = (-h) % factor
    pw = (-w) % factor
    if ph or pw:
        # reflect needs pad < side; fall back for screens under 8 pixels
        mode = "reflect" if min(h, w) > max(ph, pw) else "replicate"
        x = F.pad(x, (0, pw, 0, ph), mode=mode)
    return x, (h, w)


@torch.no_grad()
def infer(model: RefineNet, coarse_n: np.ndarray):
    """Run one normalized coarse depth map through the network.

    Pads to a pool-friendly size, forwards, and crops back. Returns numpy
    (h, w) depth, (h, w, 3) normals and (h, w) hit probability.
    """
    model.eval()
    x = torch.from_numpy(np.ascontiguousarray(coarse_n, dtype=np.float32))
    x, (h, w) = pad_to_multiple(x[None, None])
    depth, normal, mask = model(x)
    return (depth[0, 0, :h, :w].numpy().astype(np.float64),
            normal[0, :, :h, :w].permute(1, 2, 0).numpy().astype(np.float64),
            mask[0, 0, :h, :w].numpy().astype(np.float64))
