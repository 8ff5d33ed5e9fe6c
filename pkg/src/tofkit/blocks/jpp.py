"""Point-descriptor pooling onto the half-resolution image grid.

Descriptors are scatter-accumulated into their source-pixel cells, the cell
vectors are softmax-normalized along channels (several descriptors may land
in one cell), then a deformable 3x3 convolution propagates information into
cells no point reached, and a per-pixel linear layer mixes channels. The
result is a dense feature map for the point-cloud modality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

__all__ = ["JppParams", "jpp_accumulate", "jpp_forward", "jpp_flops"]


@dataclass
class JppParams:
    offset_w: Tensor   # (18, C, 3, 3): 2 offset channels (dy, dx) per kernel tap
    offset_b: Tensor
    main_w: Tensor     # (C_out, C, 3, 3) deformable kernel
    main_b: Tensor
    linear_w: Tensor   # (C_out, C_out)
    linear_b: Tensor

    @classmethod
    def init(cls, rng, channels: int = 64) -> "JppParams":
        c = channels
        # zero-initialized offsets start the deformable conv on the regular grid
        return cls(
            offset_w=Tensor(np.zeros((18, c, 3, 3)), requires_grad=True),
            offset_b=Tensor(np.zeros(18), requires_grad=True),
            main_w=Tensor(rng.normal(0.0, 1.0 / np.sqrt(9 * c), size=(c, c, 3, 3)),
                          requires_grad=True),
            main_b=Tensor(np.zeros(c), requires_grad=True),
            linear_w=Tensor(rng.normal(0.0, 1.0 / np.sqrt(c), size=(c, c)), requires_grad=True),
            linear_b=Tensor(np.zeros(c), requires_grad=True),
        )

    @property
    def channels(self) -> int:
        return self.main_w.shape[1]

    def named_params(self):
        return [("offset.weight", self.offset_w), ("offset.bias", self.offset_b),
                ("main.weight", self.main_w), ("main.bias", self.main_b),
                ("linear.weight", self.linear_w), ("linear.bias", self.linear_b)]


def jpp_accumulate(descriptors: Tensor, pixels: np.ndarray, height: int, width: int) -> Tensor:
    """Sum descriptors into cells (v//2, u//2) of an (H/2, W/2, C) map.

    pixels are full-resolution (u, v) integer coordinates and must lie inside
    (width, height); cells no descriptor reaches stay zero.
    """
    if height % 2 or width % 2:
        raise ValueError("image dims must be even")
    h2, w2 = height // 2, width // 2
    c = descriptors.shape[1] if descriptors.ndim == 2 else 0
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    if len(pixels) != descriptors.shape[0]:
        raise ValueError("one pixel per descriptor required")
    if len(pixels):
        u, v = pixels[:, 0], pixels[:, 1]
        if u.min() < 0 or u.max() >= width or v.min() < 0 or v.max() >= height:
            raise ValueError("pixel coordinates outside the image")
        cell = (v // 2) * w2 + (u // 2)
        flat = ad.scatter_rows(descriptors, cell, h2 * w2)
    else:
        flat = Tensor(np.zeros((h2 * w2, c)))
    return ad.reshape(flat, (h2, w2, c))


# kernel taps in row-major order; offset channels are (dy, dx) per tap
_TAPS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


def jpp_forward(fhat: Tensor, p: JppParams) -> Tensor:
    """(H/2, W/2, C) accumulated map -> dense (H/2, W/2, C) feature map."""
    h2, w2, c = fhat.shape
    if c != p.channels:
        raise ValueError(f"expected {p.channels} channels, got {c}")
    norm = ad.softmax(fhat, axis=2)
    x = ad.reshape(ad.transpose(norm, (2, 0, 1)), (1, c, h2, w2))

    offsets = ad.conv2d(x, p.offset_w, p.offset_b)            # (1, 18, H2, W2)
    offsets = ad.reshape(offsets, (1, 9, 2, h2, w2))
    offsets = ad.transpose(offsets, (0, 3, 4, 1, 2))          # (1, H2, W2, 9, 2)
    offsets = ad.reshape(offsets, (1, h2 * w2 * 9, 2))

    gy, gx = np.meshgrid(np.arange(h2), np.arange(w2), indexing="ij")
    base = np.stack([
        gy[:, :, None] + np.array([t[0] for t in _TAPS])[None, None, :],
        gx[:, :, None] + np.array([t[1] for t in _TAPS])[None, None, :],
    ], axis=3).reshape(1, h2 * w2 * 9, 2).astype(fhat.dtype)

    coords = offsets + Tensor(base)
    samples = ad.bilinear_sample(x, coords)                  # (1, C, H2*W2*9)
    samples = ad.reshape(samples, (c, h2 * w2, 9))
    samples = ad.transpose(samples, (1, 0, 2))               # (HW, C, 9)
    samples = ad.reshape(samples, (h2 * w2, c * 9))

    w_main = ad.reshape(p.main_w, (p.main_w.shape[0], c * 9))
    y = ad.matmul(samples, ad.transpose(w_main))             # (HW, C_out)
    y = y + ad.expand(ad.reshape(p.main_b, (1, -1)), y.shape)

    y = ad.matmul(y, p.linear_w)
    y = y + ad.expand(ad.reshape(p.linear_b, (1, -1)), y.shape)
    return ad.reshape(y, (h2, w2, p.linear_w.shape[1]))


def jpp_flops(h2: int, w2: int, c: int = 64) -> int:
    hw = h2 * w2
    return (6 * hw * c                      # channel softmax
            + 2 * hw * c * 18 * 9           # offset conv
            + hw * 9 * (8 * c + 4)          # bilinear taps
            + 2 * hw * c * c * 9            # deformable kernel
            + 2 * hw * c * c)               # linear mix
