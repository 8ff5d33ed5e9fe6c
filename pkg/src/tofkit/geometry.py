"""Pinhole camera model, depth-map/point-cloud conversions, and the
reconstruction-based ground-truth pipeline (z-buffer projection followed by a
windowed minimum filter that removes background points leaking through
foreground pixel gaps).

Conventions:
  * depth = camera-frame z in meters; 0.0 encodes "missing".
  * Pose maps world to camera: x_cam = R @ x_world + t.
  * pixel (u, v): u = column, v = row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CameraIntrinsics",
    "Pose",
    "DepthMap",
    "PointCloud",
    "WindowSpec",
    "project_points",
    "min_filter",
    "back_project",
    "make_ground_truth",
]


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(**d)


@dataclass(frozen=True)
class Pose:
    """World-to-camera rigid transform: x_cam = rotation @ x_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal (tol 1e-9)")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation determinant must be +1 (tol 1e-9)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        """Transform (N, 3) world points into the camera frame."""
        return xyz @ self.rotation.T + self.translation

    def camera_center(self) -> np.ndarray:
        """Camera origin expressed in world coordinates."""
        return -self.rotation.T @ self.translation

    def compose_world_dirs(self, dirs_cam: np.ndarray) -> np.ndarray:
        """Rotate camera-frame direction vectors into the world frame."""
        return dirs_cam @ self.rotation


@dataclass
class DepthMap:
    """Raster of metric depth, shape (height, width); 0.0 encodes missing."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("depth raster must be 2-D (height, width)")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def valid_mask(self) -> np.ndarray:
        return self.data > 0

    def valid_count(self) -> int:
        return int(np.count_nonzero(self.data > 0))

    def validate(self) -> "DepthMap":
        if not np.all(np.isfinite(self.data)):
            raise ValueError("depth raster contains non-finite values")
        if np.any(self.data < 0):
            raise ValueError("depth raster contains negative values")
        return self

    def copy(self) -> "DepthMap":
        return DepthMap(self.data.copy())

    @classmethod
    def empty(cls, width: int, height: int) -> "DepthMap":
        return cls(np.zeros((height, width), dtype=np.float64))


@dataclass
class PointCloud:
    """Array-of-points: xyz (N, 3) meters; optional source pixels (N, 2) as
    (u, v) ints; optional per-point feature vectors (N, F)."""

    xyz: np.ndarray
    pixels: np.ndarray | None = None
    features: np.ndarray | None = None

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if self.pixels is not None:
            self.pixels = np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2)
            if len(self.pixels) != len(self.xyz):
                raise ValueError("pixels and xyz lengths differ")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if len(self.features) != len(self.xyz):
                raise ValueError("features and xyz lengths differ")

    def __len__(self) -> int:
        return len(self.xyz)

    def validate(self, width_ctx: int | None = None, height_ctx: int | None = None) -> "PointCloud":
        if not np.all(np.isfinite(self.xyz)):
            raise ValueError("point cloud contains non-finite coordinates")
        if self.pixels is not None and width_ctx is not None:
            u, v = self.pixels[:, 0], self.pixels[:, 1]
            if np.any(u < 0) or np.any(u >= width_ctx) or np.any(v < 0) or np.any(v >= height_ctx):
                raise ValueError("pixel coordinates out of the originating image bounds")
        return self

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))


@dataclass(frozen=True)
class WindowSpec:
    """Sliding window of size (2*radius+1) squared."""

    radius: int = 1

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("window radius must be >= 0")


# Points at or behind the camera plane are dropped.
_MIN_CAMERA_Z = 1e-6


def _round_away_from_zero(x: np.ndarray) -> np.ndarray:
    # round half away from zero (np.round would round half to even)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def project_points(cloud: PointCloud, pose: Pose, intr: CameraIntrinsics) -> DepthMap:
    """Rasterize a point cloud into a depth map; per-pixel z-buffer keeps the
    minimum camera-frame depth, untouched pixels stay missing (0)."""
    out = np.zeros((intr.height, intr.width), dtype=np.float64)
    if len(cloud) == 0:
        return DepthMap(out)
    cam = pose.apply(cloud.xyz)
    z = cam[:, 2]
    front = z > _MIN_CAMERA_Z
    if not np.any(front):
        return DepthMap(out)
    cam = cam[front]
    z = z[front]
    u = _round_away_from_zero(intr.fx * cam[:, 0] / z + intr.cx).astype(np.int64)
    v = _round_away_from_zero(intr.fy * cam[:, 1] / z + intr.cy).astype(np.int64)
    inside = (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
    if not np.any(inside):
        return DepthMap(out)
    u, v, z = u[inside], v[inside], z[inside]
    buf = np.full((intr.height, intr.width), np.inf)
    np.minimum.at(buf, (v, u), z)
    hit = np.isfinite(buf)
    out[hit] = buf[hit]
    return DepthMap(out)


def min_filter(d: DepthMap, w: WindowSpec) -> DepthMap:
    """Windowed minimum over valid (nonzero) depths; windows are clipped at the
    image borders; a window with no valid depth yields missing (0).

    Missing pixels are sentinels, not measurements, so they are excluded from
    the minimum rather than propagated as false near depth.
    """
    r = w.radius
    if r == 0:
        return d.copy()
    h, wd = d.data.shape
    masked = np.where(d.data > 0, d.data, np.inf)
    padded = np.pad(masked, r, mode="constant", constant_values=np.inf)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (2 * r + 1, 2 * r + 1))
    mins = windows.min(axis=(2, 3))
    out = np.where(np.isfinite(mins), mins, 0.0)
    assert out.shape == (h, wd)
    return DepthMap(out)


def back_project(d: DepthMap, intr: CameraIntrinsics) -> PointCloud:
    """One camera-frame point per valid pixel, row-major order, with the source
    pixel recorded so descriptors can be scattered back onto the image grid."""
    v, u = np.nonzero(d.data > 0)
    if len(u) == 0:
        return PointCloud.empty()
    z = d.data[v, u]
    x = (u - intr.cx) * z / intr.fx
    y = (v - intr.cy) * z / intr.fy
    return PointCloud(np.stack([x, y, z], axis=1), pixels=np.stack([u, v], axis=1))


def make_ground_truth(map_cloud: PointCloud, pose: Pose, intr: CameraIntrinsics,
                      w: WindowSpec = WindowSpec(1)) -> DepthMap:
    """Depth ground truth from a reconstructed scene cloud: z-buffer projection
    followed by the occlusion-removing minimum filter."""
    return min_filter(project_points(map_cloud, pose, intr), w)
