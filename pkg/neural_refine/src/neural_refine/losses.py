"""Training objectives for the depth-completion network.

The depth term compares normalized depths pointwise, the normal and gradient
terms compare directions only (the latter on surface orientations implied by
the depth maps), and the mask term is a class-balanced focal loss over every
pixel. All tensors are (B, C, H, W); the mask argument is the ground-truth
hit mask and gates everything except the mask loss itself.
"""

from __future__ import annotations

import torch

DEPTH_WEIGHT = 1.0
NORMAL_WEIGHT = 0.5
MASK_WEIGHT = 1.0
GRADIENT_WEIGHT = 0.5

FOCAL_ALPHA = 0.5
FOCAL_GAMMA = 2.0
_EPS = 1e-8
_PROB_FLOOR = 1e-6


def _masked_mean(values: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean of values over pixels where mask is on; zero if none are."""
    total = mask.sum()
    if total <= 0:
        return values.sum() * 0.0
    return (values * mask).sum() / total


def _safe_norm(x: torch.Tensor, dim: int) -> torch.Tensor:
    """Euclidean norm with a floor inside the sqrt so the derivative stays
    finite at exactly zero vectors (plain norm backpropagates 0/0 there)."""
    return torch.sqrt((x * x).sum(dim=dim, keepdim=True) + _EPS * _EPS)


def direction_mismatch(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-pixel sine of the angle between two (B, 3, H, W) vector fields.

    Homogeneous of degree zero in each argument: positive rescaling of
    either field leaves the result unchanged.
    """
    cross = torch.cross(a, b, dim=1)
    return _safe_norm(cross, 1) / (_safe_norm(a, 1) * _safe_norm(b, 1) + _EPS)


def depth_loss(pred: torch.Tensor, truth: torch.Tensor,
               mask: torch.Tensor) -> torch.Tensor:
    """Mean squared normalized-depth error over true hit pixels."""
    return _masked_mean((pred - truth) ** 2, mask)


def normal_loss(pred: torch.Tensor, truth: torch.Tensor,
                mask: torch.Tensor) -> torch.Tensor:
    """Mean sine of the angle between predicted and true normals over true
    hit pixels. Invariant to positive rescaling of either argument."""
    return _masked_mean(direction_mismatch(pred, truth), mask)


def mask_loss(pred: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Class-balanced focal loss over all pixels.

    Hits are weighted by FOCAL_ALPHA, misses by 1 - FOCAL_ALPHA, and easy
    pixels are down-weighted by the (1 - p)^gamma factor.
    """
    p = pred.clamp(_PROB_FLOOR, 1.0 - _PROB_FLOOR)
    hit_term = -FOCAL_ALPHA * (1.0 - p) ** FOCAL_GAMMA * torch.log(p)
    miss_term = -(1.0 - FOCAL_ALPHA) * p ** FOCAL_GAMMA * torch.log(1.0 - p)
    return torch.where(truth > 0.5, hit_term, miss_term).mean()


def _implied_surface_gradient(depth: torch.Tensor) -> torch.Tensor:
    """Unnormalized surface gradient implied by a normalized depth map.

    A screen-aligned surface w = f(u, v) has surface gradient
    (-df/du, -df/dv, 1), which points along the outward normal. Central
    finite differences over the pixel grid give the slope components in
    normalized depth units per pixel. Keeping the third component at 1
    bounds the vector length below by 1, so the sine between two such
    fields is well conditioned even on flat patches, and it keeps this
    term's per-pixel depth sensitivity on the same order as the squared
    depth term's so neither drowns the other.
    """
    du, dv = torch.gradient(depth, dim=(-2, -1))
    ones = torch.ones_like(du)
    return torch.cat([-du, -dv, ones], dim=1)


def gradient_loss(pred: torch.Tensor, truth: torch.Tensor,
                  mask: torch.Tensor) -> torch.Tensor:
    """Mean sine of the angle between the surface orientations implied by
    the predicted and true depth maps, over true hit pixels.

    This couples neighboring depths: matching the true local slope captures
    geometric detail that the pointwise squared-depth term is blind to.
    """
    a = _implied_surface_gradient(pred)
    b = _implied_surface_gradient(truth)
    return _masked_mean(direction_mismatch(a, b), mask)


def total_loss(pred_depth, pred_normal, pred_mask,
               true_depth, true_normal, true_mask):
    """Weighted sum of the four terms; returns (total, per-term dict)."""
    terms = {
        "depth": depth_loss(pred_depth, true_depth, true_mask),
        "normal": normal_loss(pred_normal, true_normal, true_mask),
        "mask": mask_loss(pred_mask, true_mask),
        "gradient": gradient_loss(pred_depth, true_depth, true_mask),
    }
    total = (DEPTH_WEIGHT * terms["depth"]
             + NORMAL_WEIGHT * terms["normal"]
             + MASK_WEIGHT * terms["mask"]
             + GRADIENT_WEIGHT * terms["gradient"])
    return total, terms
