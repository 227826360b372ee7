"""Learned refinement of coarse ray-traced depth maps.

Consumes CDM1 depth maps, produces GFB1 frame buffers (refined depth,
normals, hit mask). Talks to the tracing package only through those files
and the two-argument backend executable; nothing here imports it.
"""

from .gfbio import (Frame, FormatError, MISS_FILL, denormalize_depth,
                    normalize_depth, read_cdm1, read_gfb1, write_cdm1,
                    write_gfb1)
from .model import RefineNet, infer
from .training import TrainSettings, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Frame", "FormatError", "MISS_FILL", "denormalize_depth",
    "normalize_depth", "read_cdm1", "read_gfb1", "write_cdm1", "write_gfb1",
    "RefineNet", "infer", "TrainSettings", "load_checkpoint",
    "save_checkpoint", "train", "__version__",
]
