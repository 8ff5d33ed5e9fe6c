"""Multi-scale masked regression loss.

Each decoder scale is supervised against a valid-aware nearest-neighbor
downsampling of the ground truth (a low-res pixel is valid iff its source
pixel is valid); sums run over valid pixels only and are normalized by their
count, weighted per scale. The exponent set selects L1, L2, or their sum.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = ["multiscale_loss", "downsample_gt"]

SCALE_FACTORS = (1, 2, 4)  # full, half, quarter


def downsample_gt(gt: np.ndarray, factor: int) -> np.ndarray:
    """Nearest sampling that preserves the missing-pixel sentinel."""
    return gt[..., ::factor, ::factor]


def multiscale_loss(preds: list[Tensor], gt: np.ndarray,
                    gammas=(1.0, 0.5, 0.25), terms=(1, 2)) -> Tensor:
    """preds: [full, half, quarter] (N, 1, H/s, W/s); gt (N, 1, H, W), 0 = missing."""
    if len(preds) != len(SCALE_FACTORS):
        raise ValueError(f"expected {len(SCALE_FACTORS)} prediction scales, got {len(preds)}")
    gt = np.asarray(gt)
    total = None
    any_valid = False
    for pred, gamma, s in zip(preds, gammas, SCALE_FACTORS):
        gt_s = downsample_gt(gt, s)
        if pred.shape != gt_s.shape:
            raise ValueError(f"scale 1/{s}: prediction {pred.shape} vs gt {gt_s.shape}")
        mask = (gt_s > 0)
        n_valid = int(mask.sum())
        if n_valid == 0:
            continue
        any_valid = True
        m = mask.astype(pred.dtype)
        diff = (pred - Tensor(gt_s.astype(pred.dtype))) * Tensor(m)
        term = None
        for rho in terms:
            part = ad.reduce_sum(ad.absolute(diff)) if rho == 1 else ad.reduce_sum(diff * diff)
            term = part if term is None else term + part
        contrib = term * (gamma / n_valid)
        total = contrib if total is None else total + contrib
    if not any_valid:
        raise ValueError("no valid ground-truth pixels at any scale; nothing to supervise")
    return total
