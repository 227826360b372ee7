"""Refinement executable spoken to over files.

Called as ``neural-refine-backend <in.cdm1> <out.gfb1>``. The checkpoint to
load comes from the NEURAL_REFINE_CKPT environment variable since the
two-argument call is fixed by the tracing side.

Exit codes: 0 on success, 2 on usage errors, 3 when the input file or the
checkpoint is missing or corrupt.
"""

from __future__ import annotations

import os
import sys

import numpy as np

from . import gfbio
from .model import RefineNet, infer
from .training import load_checkpoint

CKPT_ENV = "NEURAL_REFINE_CKPT"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BAD_INPUT = 3


def cleanup_prediction(frame: gfbio.Frame, depth_n, normal, mask):
    """Force raw network output into the frame-buffer contract.

    Depth becomes metric, positive and finite everywhere; normals are unit
    length and point toward the screen (positive w component) wherever the
    mask reads as a hit; the mask is clipped to [0, 1].
    """
    depth = gfbio.denormalize_depth(np.asarray(depth_n, dtype=np.float64),
                                    frame)
    far = 4.0 * frame.nominal_radius
    depth = np.where(np.isfinite(depth), depth, far)
    depth = np.maximum(depth, 1e-6 * frame.pitch)

    normal = np.asarray(normal, dtype=np.float64).copy()
    flip = normal[..., 2] < 0.0
    normal[flip] *= -1.0
    norms = np.linalg.norm(normal, axis=-1, keepdims=True)
    # degenerate rows (zero vector or w still ~0) become straight-on
    bad = (norms[..., 0] < 1e-12) | (normal[..., 2] < 1e-12)
    normal = np.where(bad[..., None], (0.0, 0.0, 1.0), normal / np.maximum(norms, 1e-12))
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)

    mask = np.clip(np.asarray(mask, dtype=np.float64), 0.0, 1.0)
    return depth, normal, mask


def refine_file(model: RefineNet, in_path, out_path) -> None:
    frame, coarse = gfbio.read_cdm1(in_path)
    coarse_n = gfbio.normalize_depth(coarse, frame)
    depth_n, normal, mask = infer(model, coarse_n)
    depth, normal, mask = cleanup_prediction(frame, depth_n, normal, mask)
    gfbio.write_gfb1(out_path, frame, depth, normal, mask)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if len(argv) != 2:
        print("usage: neural-refine-backend <in.cdm1> <out.gfb1>",
              file=sys.stderr)
        return EXIT_USAGE
    ckpt = os.environ.get(CKPT_ENV, "")
    if not ckpt:
        print(f"{CKPT_ENV} must point at a trained checkpoint",
              file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        model = load_checkpoint(ckpt)
    except Exception as exc:
        print(f"cannot load checkpoint {ckpt}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        refine_file(model, argv[0], argv[1])
    except (gfbio.FormatError, FileNotFoundError, IsADirectoryError,
            PermissionError) as exc:
        print(f"cannot refine {argv[0]}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
