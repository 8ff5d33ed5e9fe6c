"""Depth evaluation metrics.

All error sums are restricted to pixels with valid (nonzero) ground truth;
scoring absent supervision as error against the 0 sentinel would be
meaningless. RMSE/MAE are reported in millimeters, REL is dimensionless, and
the inlier ratios delta_n use the strict threshold max(pred/gt, gt/pred)
< 1.25**n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DepthMap

__all__ = ["MetricReport", "evaluate", "return_density", "rel_by_range",
           "validate_gt", "report_markdown", "report_csv_row", "CSV_HEADER"]


@dataclass
class MetricReport:
    rmse_mm: float
    mae_mm: float
    rel: float
    delta: dict[int, float]          # n -> inlier percentage
    return_density: float
    valid_pixel_count: int

    def __post_init__(self):
        if self.valid_pixel_count > 0:
            assert self.rmse_mm + 1e-9 >= self.mae_mm >= 0.0, \
                f"power-mean inequality violated: rmse {self.rmse_mm} < mae {self.mae_mm}"


def evaluate(pred: DepthMap, gt: DepthMap, deltas=(1, 2, 3)) -> MetricReport:
    """Compare a prediction against ground truth over valid-gt pixels."""
    if pred.data.shape != gt.data.shape:
        raise ValueError(f"shape mismatch: {pred.data.shape} vs {gt.data.shape}")
    mask = gt.data > 0
    n_valid = int(mask.sum())
    if n_valid == 0:
        raise ValueError("no valid ground-truth pixels to evaluate against")
    p = pred.data[mask]
    g = gt.data[mask]
    err = p - g
    rmse_mm = float(np.sqrt(np.mean(err ** 2)) * 1000.0)
    mae_mm = float(np.mean(np.abs(err)) * 1000.0)
    rel = float(np.mean(np.abs(err) / g))
    with np.errstate(divide="ignore"):
        ratio = np.where(p > 0, np.maximum(p / g, np.divide(g, np.where(p > 0, p, 1.0))), np.inf)
    delta = {n: float(np.mean(ratio < 1.25 ** n) * 100.0) for n in deltas}
    return MetricReport(rmse_mm=rmse_mm, mae_mm=mae_mm, rel=rel, delta=delta,
                        return_density=return_density(pred),
                        valid_pixel_count=n_valid)


def return_density(d: DepthMap) -> float:
    """Fraction of pixels carrying a valid depth value."""
    return float(np.count_nonzero(d.data > 0) / d.data.size)


def rel_by_range(pred: DepthMap, gt: DepthMap,
                 bucket_edges: list[float]) -> list[tuple[tuple[float, float], float, int]]:
    """REL bucketed by gt depth over [e_i, e_i+1) intervals.

    Empty buckets report count 0 and REL nan.
    """
    edges = list(bucket_edges)
    if edges != sorted(edges) or len(edges) < 2:
        raise ValueError("bucket edges must be sorted, at least two")
    mask = gt.data > 0
    p = pred.data[mask]
    g = gt.data[mask]
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (g >= lo) & (g < hi)
        cnt = int(sel.sum())
        rel = float(np.mean(np.abs(p[sel] - g[sel]) / g[sel])) if cnt else float("nan")
        out.append(((lo, hi), rel, cnt))
    return out


def validate_gt(d_static: DepthMap, d_motion: DepthMap) -> dict:
    """Score a moving-reconstruction depth map against a stationary-
    accumulation reference on their overlap; report both densities and the
    reference's max depth. RMSE here stays in meters."""
    if d_static.data.shape != d_motion.data.shape:
        raise ValueError("depth maps must share dimensions")
    overlap = (d_static.data > 0) & (d_motion.data > 0)
    if not np.any(overlap):
        raise ValueError("no overlapping valid pixels between the two maps")
    s = d_static.data[overlap]
    m = d_motion.data[overlap]
    return {
        "rmse_m": float(np.sqrt(np.mean((m - s) ** 2))),
        "rel": float(np.mean(np.abs(m - s) / s)),
        "max_depth_m": float(d_static.data.max()),
        "density_static": return_density(d_static),
        "density_motion": return_density(d_motion),
        "overlap_pixels": int(overlap.sum()),
    }


CSV_HEADER = "rmse_mm,mae_mm,rel,delta1,delta2,delta3,return_density,valid_pixels"


def report_csv_row(r: MetricReport) -> str:
    return (f"{r.rmse_mm:.4f},{r.mae_mm:.4f},{r.rel:.6f},"
            f"{r.delta.get(1, float('nan')):.3f},{r.delta.get(2, float('nan')):.3f},"
            f"{r.delta.get(3, float('nan')):.3f},{r.return_density:.6f},{r.valid_pixel_count}")


def report_markdown(rows: list[tuple[str, MetricReport]]) -> str:
    """Markdown table in benchmark column order (RMSE, MAE, REL, delta1)."""
    lines = ["| Method | RMSE (mm) | MAE (mm) | REL | delta1 (%) |",
             "|---|---|---|---|---|"]
    for name, r in rows:
        lines.append(f"| {name} | {r.rmse_mm:.2f} | {r.mae_mm:.2f} "
                     f"| {r.rel:.4f} | {r.delta.get(1, float('nan')):.1f} |")
    return "\n".join(lines)
