"""Non-learned completion baselines used as evaluation yardsticks."""

from __future__ import annotations

import numpy as np

from .geometry import DepthMap

__all__ = ["idw_fill"]


def idw_fill(sparse: DepthMap, power: float = 2.0, eps: float = 1e-6) -> DepthMap:
    """Inverse-distance-weighted fill of missing pixels from all valid ones.

    Valid pixels keep their measured value; an all-missing map is returned
    unchanged.
    """
    d = sparse.data
    h, w = d.shape
    vy, vx = np.nonzero(d > 0)
    if len(vy) == 0:
        return sparse.copy()
    my, mx = np.nonzero(d <= 0)
    out = d.copy()
    if len(my):
        vals = d[vy, vx]
        # chunk the missing pixels to bound the (missing x valid) matrix
        chunk = max(1, int(4_000_000 // max(len(vy), 1)))
        for i0 in range(0, len(my), chunk):
            yy = my[i0:i0 + chunk, None].astype(np.float64)
            xx = mx[i0:i0 + chunk, None].astype(np.float64)
            d2 = (yy - vy[None, :]) ** 2 + (xx - vx[None, :]) ** 2
            wgt = 1.0 / (d2 ** (power / 2.0) + eps)
            out[my[i0:i0 + chunk], mx[i0:i0 + chunk]] = (wgt @ vals) / wgt.sum(axis=1)
    return DepthMap(out)
