"""Confidence-weighted spatial propagation refinement.

Depth is iteratively propagated through learned per-pixel affinities to three
dilated 3x3 neighbor rings (pixel distances 1, 2, 3; 8 neighbors each,
border-clipped). A per-pixel confidence, masked to pixels that carried a
valid sparse measurement and decaying geometrically across iterations, blends
each update back toward the initial prediction so outliers are not retained.

Affinities pass through a sigmoid and are normalized by their per-pixel sum
(floored at 1), so propagation is a convex combination of positive depths and
the refined map stays positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

__all__ = ["SpnParams", "spn_step", "spn_propagate", "spn_heads",
           "RING_OFFSETS", "ALL_OFFSETS", "spn_flops"]

RING_OFFSETS = {
    k: [(dy, dx) for dy in (-k, 0, k) for dx in (-k, 0, k) if (dy, dx) != (0, 0)]
    for k in (1, 2, 3)
}
ALL_OFFSETS = RING_OFFSETS[1] + RING_OFFSETS[2] + RING_OFFSETS[3]


@dataclass
class SpnParams:
    aff_w: Tensor    # (24, C_guide, 3, 3): one affinity per ring neighbor
    aff_b: Tensor
    beta_w: Tensor   # (2, C_guide, 1, 1): propagation-vs-keep weights
    beta_b: Tensor
    b3_w: Tensor     # (1, C_guide, 1, 1): anchor weight
    b3_b: Tensor
    conf_w: Tensor   # (1, C_guide, 1, 1): initial confidence
    conf_b: Tensor
    gamma: float = 0.5
    iterations: int = 3

    @classmethod
    def init(cls, rng, guide_channels: int, gamma: float = 0.5, iterations: int = 3) -> "SpnParams":
        if not (0.0 < gamma < 1.0):
            raise ValueError("gamma must be in (0, 1)")
        cg = guide_channels
        s3 = 1.0 / np.sqrt(9 * cg)
        s1 = 1.0 / np.sqrt(cg)
        return cls(
            aff_w=Tensor(rng.normal(0.0, s3, size=(24, cg, 3, 3)), requires_grad=True),
            aff_b=Tensor(np.zeros(24), requires_grad=True),
            beta_w=Tensor(rng.normal(0.0, s1, size=(2, cg, 1, 1)), requires_grad=True),
            beta_b=Tensor(np.zeros(2), requires_grad=True),
            b3_w=Tensor(rng.normal(0.0, s1, size=(1, cg, 1, 1)), requires_grad=True),
            b3_b=Tensor(np.zeros(1), requires_grad=True),
            conf_w=Tensor(rng.normal(0.0, s1, size=(1, cg, 1, 1)), requires_grad=True),
            conf_b=Tensor(np.zeros(1), requires_grad=True),
            gamma=gamma,
            iterations=iterations,
        )

    def named_params(self):
        return [("aff.weight", self.aff_w), ("aff.bias", self.aff_b),
                ("beta.weight", self.beta_w), ("beta.bias", self.beta_b),
                ("b3.weight", self.b3_w), ("b3.bias", self.b3_b),
                ("conf.weight", self.conf_w), ("conf.bias", self.conf_b)]


def _inbounds_masks(h: int, w: int, dtype) -> np.ndarray:
    """(24, H, W) constants: 1 where the ring neighbor exists inside the image."""
    masks = np.zeros((len(ALL_OFFSETS), h, w), dtype=dtype)
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    for ci, (dy, dx) in enumerate(ALL_OFFSETS):
        masks[ci] = ((ii + dy >= 0) & (ii + dy < h) & (jj + dx >= 0) & (jj + dx < w))
    return masks


def spn_propagate(h_t: Tensor, h_0: Tensor, affinity: Tensor, beta1: Tensor,
                  beta2: Tensor, beta3: Tensor, conf: Tensor) -> Tensor:
    """One propagation update from precomputed per-pixel heads.

    h_t, h_0, beta*, conf: (N, 1, H, W); affinity: (N, 24, H, W) ordered by
    ring then tap (RING_OFFSETS order). conf is the already-decayed C^t.
    """
    shifts = ad.ring_shift(h_t, ALL_OFFSETS)  # (N, 24, H, W)
    acc = ad.reduce_sum(affinity * shifts, axis=1, keepdims=True)
    prop = beta1 * acc + beta2 * h_t
    return prop * (1.0 - conf) + conf * beta3 * h_0


def spn_heads(p: SpnParams, guidance: Tensor, sparse_mask: np.ndarray):
    """Affinity/weight/confidence maps from decoder guidance features.

    sparse_mask (N, 1, H, W) is 1 where the network input carried a valid
    sparse depth; confidence is zero elsewhere.
    """
    n, _, h, w = guidance.shape
    aff = ad.sigmoid(ad.conv2d(guidance, p.aff_w, p.aff_b))
    masks = Tensor(np.broadcast_to(_inbounds_masks(h, w, guidance.dtype), (n, 24, h, w)).copy())
    aff = aff * masks
    denom = ad.maximum(ad.reduce_sum(aff, axis=1, keepdims=True), 1.0)
    aff = aff / ad.expand(denom, aff.shape)
    betas = ad.softmax(ad.conv2d(guidance, p.beta_w, p.beta_b), axis=1)
    beta1, beta2 = betas[:, 0:1], betas[:, 1:2]
    beta3 = ad.sigmoid(ad.conv2d(guidance, p.b3_w, p.b3_b))
    conf0 = ad.sigmoid(ad.conv2d(guidance, p.conf_w, p.conf_b)) * Tensor(
        np.asarray(sparse_mask, dtype=guidance.dtype))
    return aff, beta1, beta2, beta3, conf0


def spn_step(h_t: Tensor, h_0: Tensor, p: SpnParams, guidance: Tensor,
             t: int, sparse_mask: np.ndarray, heads=None) -> Tensor:
    """One refinement iteration; C^t = C^0 * gamma^t."""
    if t < 0:
        raise ValueError("iteration index must be >= 0")
    if heads is None:
        heads = spn_heads(p, guidance, sparse_mask)
    aff, beta1, beta2, beta3, conf0 = heads
    conf = conf0 * (p.gamma ** t)
    return spn_propagate(h_t, h_0, aff, beta1, beta2, beta3, conf)


def spn_flops(h: int, w: int, guide_channels: int, iterations: int = 3) -> int:
    hw = h * w
    heads = 2 * hw * guide_channels * 9 * 24 + 2 * hw * guide_channels * 4
    per_iter = hw * (24 * 2 + 8)
    return heads + iterations * per_iter
