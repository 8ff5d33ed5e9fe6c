"""k-nearest-neighbor graphs and edge convolution over point clouds.

The graph is rebuilt per layer from the current feature space, so early
layers aggregate by spatial distance and later layers by similarity of the
learned descriptors. Neighbor indices are forward-only constants; gradients
flow through the edge features, not the graph selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

__all__ = ["knn", "EdgeConvParams", "edgeconv_forward", "edgeconv_flops"]


def knn(points: np.ndarray, k: int) -> np.ndarray:
    """Indices (N, k) of the k nearest neighbors of each point, self excluded,
    ties broken by lower index. Squared distances are summed coordinate-wise
    (same arithmetic as a scalar loop, so results match a brute-force oracle
    exactly)."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the point count {n}")
    d2 = np.empty((n, n))
    chunk = max(1, int(4_000_000 // max(n * points.shape[1], 1)))
    for i0 in range(0, n, chunk):
        diff = points[i0:i0 + chunk, None, :] - points[None, :, :]
        d2[i0:i0 + chunk] = (diff * diff).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def _knn_blas(points: np.ndarray, k: int) -> np.ndarray:
    # |a-b|^2 = |a|^2 + |b|^2 - 2ab via one matmul; used inside edgeconv where
    # the feature space is wide and the exact-diff path would be slow
    points = np.ascontiguousarray(points)
    n = points.shape[0]
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the point count {n}")
    sq = (points * points).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    np.fill_diagonal(d2, np.inf)
    # argpartition then stable sort of the short list keeps it O(N^2 + N k log k)
    part = np.argpartition(d2, k, axis=1)[:, :k]
    vals = np.take_along_axis(d2, part, axis=1)
    order = np.argsort(vals, axis=1, kind="stable")
    return np.take_along_axis(part, order, axis=1)


@dataclass
class EdgeConvParams:
    """Stacked edge convolution: per layer, MLP([h_i, h_j - h_i]) over the
    k-neighbor graph, max-aggregated over neighbors."""

    k: int
    weights: list[Tensor]  # (2*F_in, F_out) per layer
    biases: list[Tensor]

    @classmethod
    def init(cls, rng, in_dim: int, k: int = 8, layer_dims=(64, 64, 64)) -> "EdgeConvParams":
        if k < 1:
            raise ValueError("k must be >= 1")
        weights, biases = [], []
        f = in_dim
        for out_dim in layer_dims:
            weights.append(Tensor(rng.normal(0.0, 1.0 / np.sqrt(2 * f), size=(2 * f, out_dim)),
                                  requires_grad=True))
            biases.append(Tensor(np.zeros(out_dim), requires_grad=True))
            f = out_dim
        return cls(k=k, weights=weights, biases=biases)

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def named_params(self):
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out += [(f"layer{i}.weight", w), (f"layer{i}.bias", b)]
        return out


def edgeconv_forward(features: Tensor, coords: np.ndarray, p: EdgeConvParams,
                     neighbor_idx: list[np.ndarray] | None = None) -> Tensor:
    """Per-point descriptors (N_p, out_dim) from input features (N_p, F).

    coords (N_p, 3) seed the first graph; later graphs use the evolving
    feature space. Pass neighbor_idx to pin the graphs (e.g. for gradient
    checks, where the selection must not flip under perturbation).
    """
    n_p = features.shape[0]
    if n_p <= p.k:
        raise ValueError(f"need more than k={p.k} points, got {n_p}")
    h = features
    for li, (w, b) in enumerate(zip(p.weights, p.biases)):
        if neighbor_idx is not None:
            idx = neighbor_idx[li]
        elif li == 0:
            idx = _knn_blas(np.asarray(coords, dtype=h.dtype), p.k)
        else:
            idx = _knn_blas(h.data, p.k)
        f_in = h.shape[1]
        hi = ad.reshape(ad.expand(ad.reshape(h, (n_p, 1, f_in)), (n_p, p.k, f_in)),
                        (n_p * p.k, f_in))
        hj = ad.gather_rows(h, idx.reshape(-1))
        edge = ad.concat([hi, hj - hi], axis=1)           # (N_p*k, 2F)
        e = ad.matmul(edge, w)
        e = e + ad.expand(ad.reshape(b, (1, b.shape[0])), e.shape)
        e = ad.gelu(e)
        h = ad.reduce_max(ad.reshape(e, (n_p, p.k, w.shape[1])), axis=1)
    return h


def edgeconv_flops(n_points: int, k: int, in_dim: int, layer_dims=(64, 64, 64)) -> int:
    total = 0
    f = in_dim
    for out_dim in layer_dims:
        total += 3 * n_points * n_points * f          # knn distance matrix
        total += 2 * n_points * k * (2 * f) * out_dim  # edge MLP
        total += n_points * k * out_dim               # max aggregation
        f = out_dim
    return total
