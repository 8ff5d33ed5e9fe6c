"""Channel (cross-covariance) attention.

Attention weights are computed over the d x d channel covariance instead of
the N x N token matrix, so cost is linear in the number of tokens. The
multimodal variant runs the same attention on channel-concatenated inputs,
which simultaneously yields intra- and cross-modal attention; an explicit
2x2-block assembly of the same computation is kept as an oracle path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

__all__ = [
    "XcaParams", "xca_forward", "mxca_forward", "mxca_block_decomposed",
    "quadratic_attention", "xca_flops", "quadratic_attention_flops",
]


@dataclass
class XcaParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    log_tau: Tensor  # per-head; tau = exp(log_tau) keeps the scale positive
    heads: int

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_out: int, heads: int = 1) -> "XcaParams":
        if d_out % heads != 0:
            raise ValueError(f"d_out={d_out} not divisible by heads={heads}")
        scale = 1.0 / np.sqrt(d_in)

        def w():
            return Tensor(rng.normal(0.0, scale, size=(d_in, d_out)), requires_grad=True)

        return cls(w_q=w(), w_k=w(), w_v=w(),
                   log_tau=Tensor(np.zeros(heads), requires_grad=True), heads=heads)

    @property
    def d_in(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_out(self) -> int:
        return self.w_q.shape[1]

    def named_params(self):
        return [("w_q", self.w_q), ("w_k", self.w_k), ("w_v", self.w_v),
                ("log_tau", self.log_tau)]


def xca_forward(x: Tensor, p: XcaParams) -> Tensor:
    """Tokens (N, d_in) -> (N, d_out).

    Per head: A = softmax(Q^T K / tau) over the key-channel axis (each row of
    the d x d matrix sums to 1), output = V @ A. Head outputs are concatenated.
    """
    if x.ndim != 2 or x.shape[1] != p.d_in:
        raise ValueError(f"xca: expected (N, {p.d_in}) tokens, got {x.shape}")
    q = ad.matmul(x, p.w_q)
    k = ad.matmul(x, p.w_k)
    v = ad.matmul(x, p.w_v)
    dh = p.d_out // p.heads
    outs = []
    for h in range(p.heads):
        sl = slice(h * dh, (h + 1) * dh)
        qh, kh, vh = q[:, sl], k[:, sl], v[:, sl]
        inv_tau = ad.exp(-p.log_tau[h])
        cov = ad.matmul(ad.transpose(qh), kh)
        cov = cov * ad.expand(ad.reshape(inv_tau, (1, 1)), cov.shape)
        attn = ad.softmax(cov, axis=1)
        outs.append(ad.matmul(vh, attn))
    return outs[0] if len(outs) == 1 else ad.concat(outs, axis=1)


def mxca_forward(x2d: Tensor, x3d: Tensor, p: XcaParams) -> Tensor:
    """Channel attention over the channel-concatenation [x2d | x3d]."""
    if x2d.shape[0] != x3d.shape[0]:
        raise ValueError(f"mxca: token counts differ ({x2d.shape[0]} vs {x3d.shape[0]})")
    if x3d.shape[1] == 0:
        return xca_forward(x2d, p)
    return xca_forward(ad.concat([x2d, x3d], axis=1), p)


def mxca_block_decomposed(x2d: Tensor, x3d: Tensor, p: XcaParams) -> Tensor:
    """Oracle path: assemble the 2x2 block covariance explicitly, one softmax
    over the joint key axis, multiply by [V2d | V3d].

    Only the single-head case is defined (the modality split of key channels
    is ambiguous across head partitions).
    """
    if p.heads != 1:
        raise ValueError("block-decomposed path is defined for heads=1")
    d2 = x2d.shape[1]
    x = ad.concat([x2d, x3d], axis=1)
    q = ad.matmul(x, p.w_q)
    k = ad.matmul(x, p.w_k)
    v = ad.matmul(x, p.w_v)
    q2, q3 = q[:, :d2], q[:, d2:]
    k2, k3 = k[:, :d2], k[:, d2:]
    top = ad.concat([ad.matmul(ad.transpose(q2), k2), ad.matmul(ad.transpose(q2), k3)], axis=1)
    bot = ad.concat([ad.matmul(ad.transpose(q3), k2), ad.matmul(ad.transpose(q3), k3)], axis=1)
    cov = ad.concat([top, bot], axis=0)
    inv_tau = ad.exp(-p.log_tau[0])
    cov = cov * ad.expand(ad.reshape(inv_tau, (1, 1)), cov.shape)
    attn = ad.softmax(cov, axis=1)
    return ad.matmul(v, attn)


def quadratic_attention(x: Tensor, p: XcaParams) -> Tensor:
    """Token-by-token attention, softmax(Q K^T / tau) @ V.

    Counter-scaling fixture only: its cost grows with N^2 where the channel
    attention grows with N.
    """
    if p.heads != 1:
        raise ValueError("fixture is single-head")
    q = ad.matmul(x, p.w_q)
    k = ad.matmul(x, p.w_k)
    v = ad.matmul(x, p.w_v)
    inv_tau = ad.exp(-p.log_tau[0])
    scores = ad.matmul(q, ad.transpose(k))
    scores = scores * ad.expand(ad.reshape(inv_tau, (1, 1)), scores.shape)
    return ad.matmul(ad.softmax(scores, axis=1), v)


def xca_flops(n_tokens: int, d_in: int, d_out: int, heads: int) -> int:
    """Analytic forward FLOPs (multiply and add counted separately)."""
    dh = d_out // heads
    proj = 3 * 2 * n_tokens * d_in * d_out
    cov = 2 * n_tokens * d_out * dh          # Q^T K across all heads
    out = 2 * n_tokens * d_out * dh          # V @ A
    softmax_cost = 5 * d_out * dh            # exp/sum/div on the d x d maps
    scale = d_out * dh
    return proj + cov + out + softmax_cost + scale


def quadratic_attention_flops(n_tokens: int, d: int) -> int:
    """FLOPs of the token-by-token attention core (score matrix, softmax,
    weighted sum). Projections are excluded so the quadratic scaling of the
    core is visible at any N."""
    scores = 2 * n_tokens * n_tokens * d
    softmax_cost = 5 * n_tokens * n_tokens
    weighted = 2 * n_tokens * n_tokens * d
    return scores + softmax_cost + weighted
