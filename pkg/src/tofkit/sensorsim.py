"""Procedural capture simulator.

Generates desk-scale stand-ins for real multi-sensor recordings: analytic
ray-cast room scenes, a short-range ToF sensor with reflectivity- and
edge-dependent dropout, corner-feature depth points mimicking a visual-SLAM
map, multi-rate timestamp alignment, and training-time augmentation. Every
operation is a pure function of (inputs, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (CameraIntrinsics, DepthMap, Pose, PointCloud, WindowSpec,
                       back_project, min_filter, project_points)
from .rng import derive_seed, substream

__all__ = [
    "SceneSpec", "ToFModel", "TimestampedStream", "FrameTriplet",
    "Plane", "Sphere", "Box", "ScenePrimitives",
    "synthesize_scene", "build_scene", "render_scene",
    "apply_tof_model", "sample_visual_points", "soft_sync", "sync_rate_analysis",
    "build_triplets", "augment", "make_trajectory", "merge_sparse",
    "simulate_gt_validation",
]


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    extent: float = 12.0
    primitive_count: int = 6
    depth_range: tuple[float, float] = (0.4, 12.0)

    def __post_init__(self):
        if self.depth_range[0] <= 0 or self.depth_range[1] <= self.depth_range[0]:
            raise ValueError(f"bad depth_range {self.depth_range}")
        if self.primitive_count < 1:
            raise ValueError("primitive_count must be >= 1")

    def to_dict(self) -> dict:
        return {"seed": self.seed, "extent": self.extent,
                "primitive_count": self.primitive_count,
                "depth_range": list(self.depth_range)}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["depth_range"] = tuple(d["depth_range"])
        return cls(**d)


@dataclass(frozen=True)
class ToFModel:
    """Short-range depth sensor model. Pixels beyond max_range return
    nothing; darker surfaces (low luminance as the reflectivity proxy) and
    pixels near depth discontinuities drop out more often; kept pixels carry
    Gaussian range noise truncated at 4 sigma."""

    max_range: float = 3.0
    base_keep: float = 0.6
    intensity_coef: float = 0.4
    edge_dropout_radius: int = 1
    edge_dropout_prob: float = 0.7
    depth_noise_sigma: float = 0.01
    edge_grad_threshold: float = 0.3

    def __post_init__(self):
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        for p in (self.base_keep, self.intensity_coef, self.edge_dropout_prob):
            if not (0.0 <= p <= 1.0):
                raise ValueError("probabilities must lie in [0, 1]")
        if self.depth_noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")

    def to_dict(self) -> dict:
        return {"max_range": self.max_range, "base_keep": self.base_keep,
                "intensity_coef": self.intensity_coef,
                "edge_dropout_radius": self.edge_dropout_radius,
                "edge_dropout_prob": self.edge_dropout_prob,
                "depth_noise_sigma": self.depth_noise_sigma,
                "edge_grad_threshold": self.edge_grad_threshold}

    @classmethod
    def from_dict(cls, d: dict) -> "ToFModel":
        return cls(**d)


@dataclass
class TimestampedStream:
    label: str
    rate_hz: float
    timestamps: np.ndarray
    jitter_sigma: float = 0.0

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        if len(self.timestamps) and np.any(np.diff(self.timestamps) <= 0):
            raise ValueError(f"stream '{self.label}': timestamps must be strictly increasing")

    @classmethod
    def ideal(cls, label: str, rate_hz: float, duration: float, phase: float = 0.0,
              jitter_sigma: float = 0.0, seed: int = 0) -> "TimestampedStream":
        n = int(math.floor(duration * rate_hz))
        ts = phase + np.arange(n) / rate_hz
        if jitter_sigma > 0:
            rng = substream(seed, "jitter", label)
            # clip keeps the sequence strictly increasing for sane sigmas
            ts = ts + np.clip(rng.normal(0.0, jitter_sigma, n),
                              -0.45 / rate_hz, 0.45 / rate_hz)
        return cls(label=label, rate_hz=rate_hz, timestamps=ts, jitter_sigma=jitter_sigma)


@dataclass
class FrameTriplet:
    rgb: np.ndarray              # (H, W, 3) uint8
    sparse_tof: DepthMap
    sparse_tof_visual: DepthMap
    gt: DepthMap
    timestamp: float

    def __post_init__(self):
        h, w, _ = self.rgb.shape
        for dm in (self.sparse_tof, self.sparse_tof_visual, self.gt):
            if (dm.height, dm.width) != (h, w):
                raise ValueError("triplet rasters must share dimensions")


# ------------------------------------------------------------------ scene


@dataclass
class Plane:
    """Axis-aligned plane bounded to the room; used only for one-off analytic
    scenes in tests (the procedural rooms use the closed-box exit instead)."""

    axis: int           # 0=x, 1=y, 2=z
    offset: float
    albedo: np.ndarray = field(default_factory=lambda: np.array([0.8, 0.8, 0.8]))
    texture_freq: float = 0.0
    texture_phase: tuple[float, float] = (0.0, 0.0)


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    albedo: np.ndarray
    texture_freq: float = 1.5
    texture_phase: tuple[float, float] = (0.0, 0.0)


@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray
    albedo: np.ndarray
    texture_freq: float = 1.5
    texture_phase: tuple[float, float] = (0.0, 0.0)


@dataclass
class ScenePrimitives:
    room_lo: np.ndarray
    room_hi: np.ndarray
    room_albedo: np.ndarray
    room_texture_freq: float
    boxes: list[Box]
    spheres: list[Sphere]
    planes: list[Plane]
    light_dir: np.ndarray  # unit, pointing from surface toward the light


def build_scene(spec: SceneSpec) -> ScenePrimitives:
    """Deterministic room + obstacle layout from the scene seed.

    World frame matches an identity camera at the origin: x right, y down,
    z forward. The room is closed so every ray terminates, and sized so that
    camera-frame depth stays inside spec.depth_range for cameras within
    ~1 m of the origin.
    """
    rng = substream(spec.seed, "scene")
    zmax = spec.depth_range[1]
    lateral = min(0.30 * zmax, 0.5 * spec.extent)
    zfar = 0.78 * zmax
    room_lo = np.array([-lateral, -0.17 * zmax, -1.0])
    room_hi = np.array([lateral, 0.12 * zmax, zfar])
    boxes, spheres = [], []
    n_spheres = spec.primitive_count // 3
    n_boxes = spec.primitive_count - n_spheres
    for kind in ["box"] * n_boxes + ["sphere"] * n_spheres:
        # rejection-free placement: radial band keeps clearance around the camera
        cz = rng.uniform(0.28 * zfar, 0.85 * zfar)
        cx = rng.uniform(-0.8 * lateral, 0.8 * lateral)
        cy = rng.uniform(-0.25 * room_hi[1], 0.85 * room_hi[1])
        size = rng.uniform(0.035, 0.1) * zmax
        albedo = rng.uniform(0.25, 0.95, size=3)
        freq = rng.uniform(0.6, 2.2) * 12.0 / zmax
        phase = (rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi))
        if kind == "box":
            half = np.array([size, size * rng.uniform(0.6, 1.6), size * rng.uniform(0.6, 1.6)])
            boxes.append(Box(lo=np.array([cx, cy, cz]) - half,
                             hi=np.array([cx, cy, cz]) + half,
                             albedo=albedo, texture_freq=freq, texture_phase=phase))
        else:
            spheres.append(Sphere(center=np.array([cx, cy, cz]), radius=size,
                                  albedo=albedo, texture_freq=freq, texture_phase=phase))
    light = rng.normal(size=3) * np.array([0.35, 0.2, 0.35]) + np.array([0.0, -1.0, -0.25])
    return ScenePrimitives(
        room_lo=room_lo, room_hi=room_hi,
        room_albedo=rng.uniform(0.45, 0.9, size=3),
        room_texture_freq=rng.uniform(0.5, 1.3) * 12.0 / zmax,
        boxes=boxes, spheres=spheres, planes=[],
        light_dir=light / np.linalg.norm(light),
    )


def _checker(p: np.ndarray, freq: float, phase: tuple[float, float],
             drop_axis: np.ndarray) -> np.ndarray:
    """Two-tone checker over the two surface coordinates not normal to the
    face, giving the corner features the visual-point sampler relies on."""
    axes = np.argsort(np.abs(drop_axis), axis=-1)[..., :2]
    a = np.take_along_axis(p, axes[..., :1], axis=-1)[..., 0]
    b = np.take_along_axis(p, axes[..., 1:2], axis=-1)[..., 0]
    s = np.sin(freq * 2 * np.pi * a + phase[0]) * np.sin(freq * 2 * np.pi * b + phase[1])
    return np.where(s > 0, 1.0, 0.72)


def render_scene(prims: ScenePrimitives, pose: Pose, intr: CameraIntrinsics,
                 want_aux: bool = False):
    """Analytic ray cast of the primitive scene.

    Returns (rgb uint8, DepthMap); with want_aux also a dict holding surface
    normals and |cos| of the incidence angle per pixel. Depth is camera-frame
    z (ray parameter of directions with unit z), matching project_points.
    """
    h, w = intr.height, intr.width
    vv, uu = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    dirs_cam = np.stack([(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy,
                         np.ones_like(uu)], axis=-1)
    dirs = pose.compose_world_dirs(dirs_cam.reshape(-1, 3)).reshape(h, w, 3)
    origin = pose.camera_center()

    t_best = np.full((h, w), np.inf)
    normal = np.zeros((h, w, 3))
    albedo = np.zeros((h, w, 3))
    tex = np.ones((h, w))

    def consider(t_hit, n_hit, alb, freq, phase):
        nonlocal t_best
        better = t_hit < t_best
        if not np.any(better):
            return
        t_best = np.where(better, t_hit, t_best)
        normal[better] = n_hit[better] if n_hit.ndim == 3 else n_hit
        albedo[better] = alb
        if freq > 0:
            t_safe = np.where(np.isfinite(t_hit), t_hit, 0.0)
            p_hit = origin + t_safe[..., None] * dirs
            tex_val = _checker(p_hit, freq, phase, n_hit if n_hit.ndim == 3 else
                               np.broadcast_to(n_hit, p_hit.shape))
            tex[better] = tex_val[better]
        else:
            tex[better] = 1.0

    eps = 1e-9
    # room interior: exit distance of each ray from the enclosing box
    t_room = np.full((h, w), np.inf)
    room_axis = np.zeros((h, w), dtype=np.int64)
    room_sign = np.zeros((h, w))
    for ax in range(3):
        d = dirs[..., ax]
        t_hi = np.where(d > eps, (prims.room_hi[ax] - origin[ax]) / np.where(d > eps, d, 1.0), np.inf)
        t_lo = np.where(d < -eps, (prims.room_lo[ax] - origin[ax]) / np.where(d < -eps, d, 1.0), np.inf)
        t_ax = np.minimum(t_hi, t_lo)
        closer = t_ax < t_room
        t_room = np.where(closer, t_ax, t_room)
        room_axis[closer] = ax
        room_sign[closer] = np.where(t_hi < t_lo, -1.0, 1.0)[closer]
    n_room = np.zeros((h, w, 3))
    for ax in range(3):
        sel = room_axis == ax
        n_room[sel, ax] = room_sign[sel]
    consider(t_room, n_room, prims.room_albedo, prims.room_texture_freq, (0.3, 1.1))

    for pl in prims.planes:
        d = dirs[..., pl.axis]
        t_pl = np.where(np.abs(d) > eps, (pl.offset - origin[pl.axis]) / np.where(np.abs(d) > eps, d, 1.0), np.inf)
        t_pl = np.where(t_pl > eps, t_pl, np.inf)
        n_pl = np.zeros(3)
        n_pl[pl.axis] = -np.sign(1.0)
        consider(t_pl, n_pl, pl.albedo, pl.texture_freq, pl.texture_phase)

    for sp in prims.spheres:
        oc = origin - sp.center
        a = (dirs * dirs).sum(axis=-1)
        b = 2.0 * (dirs * oc).sum(axis=-1)
        c = float(oc @ oc) - sp.radius ** 2
        disc = b * b - 4 * a * c
        ok = disc > 0
        root = np.sqrt(np.where(ok, disc, 0.0))
        t_sp = np.where(ok, (-b - root) / (2 * a), np.inf)
        t_sp = np.where(t_sp > eps, t_sp, np.inf)
        p_hit = origin + t_sp[..., None] * dirs
        n_sp = (p_hit - sp.center) / sp.radius
        consider(t_sp, n_sp, sp.albedo, sp.texture_freq, sp.texture_phase)

    for bx in prims.boxes:
        t_near = np.full((h, w), -np.inf)
        t_far = np.full((h, w), np.inf)
        near_axis = np.zeros((h, w), dtype=np.int64)
        for ax in range(3):
            d = dirs[..., ax]
            safe = np.where(np.abs(d) > eps, d, eps)
            t1 = (bx.lo[ax] - origin[ax]) / safe
            t2 = (bx.hi[ax] - origin[ax]) / safe
            lo_t, hi_t = np.minimum(t1, t2), np.maximum(t1, t2)
            parallel_miss = (np.abs(d) <= eps) & ((origin[ax] < bx.lo[ax]) | (origin[ax] > bx.hi[ax]))
            lo_t = np.where(parallel_miss, np.inf, lo_t)
            hi_t = np.where(parallel_miss, -np.inf, hi_t)
            upd = lo_t > t_near
            near_axis[upd] = ax
            t_near = np.maximum(t_near, lo_t)
            t_far = np.minimum(t_far, hi_t)
        hit = (t_near <= t_far) & (t_near > eps)
        t_bx = np.where(hit, t_near, np.inf)
        n_bx = np.zeros((h, w, 3))
        for ax in range(3):
            sel = hit & (near_axis == ax)
            n_bx[sel, ax] = -np.sign(dirs[sel, ax])
        consider(t_bx, n_bx, bx.albedo, bx.texture_freq, bx.texture_phase)

    depth = np.where(np.isfinite(t_best), t_best, 0.0)
    cosang = np.abs((normal * dirs).sum(axis=-1)) / np.linalg.norm(dirs, axis=-1)
    shade = 0.35 + 0.65 * np.clip((normal * (-prims.light_dir)).sum(axis=-1), 0.0, 1.0)
    rgb = np.clip(albedo * (shade * tex)[..., None], 0.0, 1.0)
    rgb = np.where(np.isfinite(t_best)[..., None], rgb, 0.0)
    rgb8 = (rgb * 255.0 + 0.5).astype(np.uint8)
    if want_aux:
        return rgb8, DepthMap(depth), {"normals": normal, "cos_incidence": cosang}
    return rgb8, DepthMap(depth)


def synthesize_scene(spec: SceneSpec, pose: Pose, intr: CameraIntrinsics):
    """Procedural (rgb, dense depth) render; deterministic in (seed, pose, intr)."""
    return render_scene(build_scene(spec), pose, intr)


# ------------------------------------------------------------------ sensors


def _luminance(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64) / 255.0
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return mask
    padded = np.pad(mask, radius, mode="constant", constant_values=False)
    win = np.lib.stride_tricks.sliding_window_view(padded, (2 * radius + 1, 2 * radius + 1))
    return win.any(axis=(2, 3))


def apply_tof_model(dense: DepthMap, rgb: np.ndarray, m: ToFModel, seed: int) -> DepthMap:
    """Simulate the short-range sensor on a rendered frame."""
    rng = substream(seed, "tof")
    d = dense.data
    h, w = d.shape
    in_range = (d > 0) & (d <= m.max_range)

    keep_prob = np.clip(m.base_keep + m.intensity_coef * _luminance(rgb), 0.0, 1.0)

    valid = d > 0
    gx = np.zeros_like(d)
    gy = np.zeros_like(d)
    both_x = valid[:, 1:] & valid[:, :-1]
    gx[:, 1:] = np.where(both_x, np.abs(d[:, 1:] - d[:, :-1]), 0.0)
    both_y = valid[1:, :] & valid[:-1, :]
    gy[1:, :] = np.where(both_y, np.abs(d[1:, :] - d[:-1, :]), 0.0)
    edges = _dilate(np.maximum(gx, gy) > m.edge_grad_threshold, m.edge_dropout_radius)
    keep_prob = np.where(edges, keep_prob * (1.0 - m.edge_dropout_prob), keep_prob)

    # full-raster draws keep the stream layout independent of scene content
    draws = rng.uniform(size=(h, w))
    noise = np.clip(rng.normal(0.0, m.depth_noise_sigma, size=(h, w)),
                    -4.0 * m.depth_noise_sigma, 4.0 * m.depth_noise_sigma)
    kept = in_range & (draws < keep_prob)
    out = np.where(kept, np.maximum(d + noise, 1e-3), 0.0)
    return DepthMap(out)


def _corner_response(rgb: np.ndarray) -> np.ndarray:
    """Structure-tensor minimum eigenvalue (3x3 box-smoothed)."""
    gray = _luminance(rgb)
    ix = np.zeros_like(gray)
    iy = np.zeros_like(gray)
    ix[:, 1:-1] = 0.5 * (gray[:, 2:] - gray[:, :-2])
    iy[1:-1, :] = 0.5 * (gray[2:, :] - gray[:-2, :])

    def box3(a):
        p = np.pad(a, 1)
        win = np.lib.stride_tricks.sliding_window_view(p, (3, 3))
        return win.sum(axis=(2, 3))

    sxx, syy, sxy = box3(ix * ix), box3(iy * iy), box3(ix * iy)
    half_tr = 0.5 * (sxx + syy)
    root = np.sqrt(np.maximum((0.5 * (sxx - syy)) ** 2 + sxy ** 2, 0.0))
    return half_tr - root


def sample_visual_points(dense: DepthMap, rgb: np.ndarray, n: int,
                         noise_sigma_rel: float, seed: int) -> DepthMap:
    """Depth at the n strongest corner features, with multiplicative noise
    (absolute error grows with depth, like triangulated map points)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    h, w = dense.data.shape
    out = np.zeros((h, w))
    if n == 0:
        return DepthMap(out)
    resp = _corner_response(rgb)
    resp[:2, :] = resp[-2:, :] = 0.0
    resp[:, :2] = resp[:, -2:] = 0.0
    resp[dense.data <= 0] = 0.0

    # non-maximum suppression over a 5x5 window, then global top-n
    padded = np.pad(resp, 2, constant_values=-np.inf)
    win = np.lib.stride_tricks.sliding_window_view(padded, (5, 5))
    is_peak = (resp >= win.max(axis=(2, 3))) & (resp > 1e-8)
    peaks = np.flatnonzero(is_peak)
    if len(peaks) == 0:
        return DepthMap(out)
    order = np.argsort(-resp.reshape(-1)[peaks], kind="stable")
    chosen = peaks[order[:n]]
    vv, uu = np.unravel_index(chosen, (h, w))

    rng = substream(seed, "visual")
    eps_rel = rng.normal(0.0, noise_sigma_rel, size=len(chosen)) if noise_sigma_rel > 0 \
        else np.zeros(len(chosen))
    vals = dense.data[vv, uu] * (1.0 + eps_rel)
    out[vv, uu] = np.maximum(vals, 1e-3)
    return DepthMap(out)


# ------------------------------------------------------------------ sync


def soft_sync(streams: list[TimestampedStream], tolerance: float | None = None) -> list[tuple]:
    """Nearest-timestamp alignment of multi-rate streams.

    For every frame of the slowest stream, find the nearest frame of each
    other stream within tolerance (ties resolve to the earlier index); frames
    missing a partner in any stream are excluded, and no index is reused
    (later frames competing for an already-claimed partner are dropped).
    Returns index tuples in stream order, sorted by time. Default tolerance
    is half the fastest stream's period.
    """
    if not streams:
        raise ValueError("need at least one stream")
    for s in streams:
        if len(s.timestamps) == 0:
            raise ValueError(f"stream '{s.label}' is empty")
    if tolerance is None:
        tolerance = 0.5 / max(s.rate_hz for s in streams)
    ref_i = int(np.argmin([s.rate_hz for s in streams]))
    ref = streams[ref_i]
    used: list[set] = [set() for _ in streams]
    matches = []
    for fi, t in enumerate(ref.timestamps):
        row: list[int | None] = [None] * len(streams)
        row[ref_i] = fi
        ok = True
        for si, s in enumerate(streams):
            if si == ref_i:
                continue
            ts = s.timestamps
            pos = int(np.searchsorted(ts, t))
            best = None
            for cand in (pos - 1, pos):
                if 0 <= cand < len(ts):
                    dist = abs(ts[cand] - t)
                    if best is None or dist < best[0] - 1e-15:
                        best = (dist, cand)
            if best is None or best[0] > tolerance or best[1] in used[si]:
                ok = False
                break
            row[si] = best[1]
        if ok:
            for si, idx in enumerate(row):
                used[si].add(idx)
            matches.append(tuple(row))
    return matches


def sync_rate_analysis(streams: list[TimestampedStream],
                       tolerance: float | None = None) -> dict:
    """Pairwise match fractions against the fastest stream, and the expected
    aligned-tuple rate under the independence arithmetic rate_fastest *
    prod(fractions) (for ideal 60/30/10 Hz streams: 60 * 1/2 * 1/6 = 5 Hz)."""
    fastest = max(streams, key=lambda s: s.rate_hz)
    fractions = {}
    rate = fastest.rate_hz
    for s in streams:
        if s is fastest:
            continue
        pairs = soft_sync([fastest, s], tolerance)
        frac = len(pairs) / len(fastest.timestamps)
        fractions[s.label] = frac
        rate *= frac
    return {"fastest": fastest.label, "fractions": fractions,
            "expected_tuple_rate_hz": rate}


# ------------------------------------------------------------------ triplets


def make_trajectory(n_poses: int, seed: int, max_offset: float = 0.8,
                    max_yaw: float = 0.18, max_pitch: float = 0.06) -> list[Pose]:
    """Smooth seeded camera path near the origin, looking forward (+z)."""
    rng = substream(seed, "trajectory")
    phase = rng.uniform(0, 2 * np.pi, size=4)
    amp = rng.uniform(0.4, 1.0, size=4)
    poses = []
    for i in range(n_poses):
        s = i / max(n_poses - 1, 1)
        cx = max_offset * amp[0] * np.sin(2 * np.pi * s + phase[0])
        cz = max_offset * amp[1] * np.sin(2 * np.pi * s * 0.5 + phase[1]) * 0.5
        cy = 0.15 * amp[2] * np.sin(2 * np.pi * s + phase[2])
        yaw = max_yaw * amp[3] * np.sin(2 * np.pi * s + phase[3])
        pitch = max_pitch * np.sin(4 * np.pi * s + phase[0])
        cy_, sy_ = np.cos(yaw), np.sin(yaw)
        cp, sp = np.cos(pitch), np.sin(pitch)
        r_yaw = np.array([[cy_, 0, sy_], [0, 1, 0], [-sy_, 0, cy_]])
        r_pitch = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
        r_c2w = r_yaw @ r_pitch
        center = np.array([cx, cy, cz])
        # world-to-camera convention: R = r_c2w^T, t = -R @ center
        r = r_c2w.T
        poses.append(Pose(r, -r @ center))
    return poses


def merge_sparse(tof: DepthMap, visual: DepthMap) -> DepthMap:
    """Union of the two sparse maps; the short-range sensor wins collisions
    (it is the trusted measurement at close range)."""
    out = np.where(tof.data > 0, tof.data, visual.data)
    return DepthMap(out)


def build_triplets(scene: SceneSpec, trajectory: list[Pose], intr: CameraIntrinsics,
                   tof: ToFModel, visual_n: int, seed: int,
                   visual_noise_rel: float = 0.02,
                   triplet_rate_hz: float = 5.0) -> list[FrameTriplet]:
    """Render a trajectory and derive per-frame sparse inputs + ground truth."""
    if not trajectory:
        raise ValueError("trajectory must be non-empty")
    prims = build_scene(scene)
    out = []
    for i, pose in enumerate(trajectory):
        rgb, dense = render_scene(prims, pose, intr)
        sp_tof = apply_tof_model(dense, rgb, tof, derive_seed(seed, "tof", i))
        vis = sample_visual_points(dense, rgb, visual_n, visual_noise_rel,
                                   derive_seed(seed, "visual", i))
        out.append(FrameTriplet(
            rgb=rgb,
            sparse_tof=sp_tof,
            sparse_tof_visual=merge_sparse(sp_tof, vis),
            gt=dense,
            timestamp=i / triplet_rate_hz,
        ))
    return out


def augment(sparse: DepthMap, seed: int, noise_sigma: float = 0.01,
            mask_count: int = 2, mask_size: int | tuple[int, int] = 8) -> DepthMap:
    """Gaussian noise on valid pixels plus random rectangular dropouts."""
    if noise_sigma < 0 or mask_count < 0:
        raise ValueError("augment parameters must be >= 0")
    rng = substream(seed, "augment")
    d = sparse.data.copy()
    h, w = d.shape
    valid = d > 0
    noise = rng.normal(0.0, 1.0, size=(h, w)) * noise_sigma
    d = np.where(valid, np.maximum(d + noise, 1e-3), 0.0)
    mh, mw = (mask_size, mask_size) if np.isscalar(mask_size) else mask_size
    for _ in range(mask_count):
        top = int(rng.integers(0, max(h - mh, 0) + 1))
        left = int(rng.integers(0, max(w - mw, 0) + 1))
        d[top:top + mh, left:left + mw] = 0.0
    return DepthMap(d)


# ------------------------------------------------------------- GT validation


def _capture_world_points(prims: ScenePrimitives, pose: Pose, intr: CameraIntrinsics,
                          rng: np.random.Generator, keep_frac: float,
                          fov_margin: float, grazing_cos: float,
                          range_noise: float) -> np.ndarray:
    """One simulated scan: per-frame random pixel subset, FoV margin crop,
    grazing-incidence dropout, range noise; returns world-frame points."""
    rgb, dense, aux = render_scene(prims, pose, intr, want_aux=True)
    h, w = dense.data.shape
    keep = rng.uniform(size=(h, w)) < keep_frac
    mh, mw = int(fov_margin * h), int(fov_margin * w)
    if mh:
        keep[:mh, :] = keep[-mh:, :] = False
    if mw:
        keep[:, :mw] = keep[:, -mw:] = False
    keep &= aux["cos_incidence"] > grazing_cos
    keep &= dense.data > 0
    d = np.where(keep, dense.data, 0.0)
    if range_noise > 0:
        noise = np.clip(rng.normal(0.0, range_noise, size=(h, w)), -4 * range_noise, 4 * range_noise)
        d = np.where(keep, np.maximum(d + noise, 1e-3), 0.0)
    cloud = back_project(DepthMap(d), intr)
    # x_world = R^T (x_cam - t)
    return (cloud.xyz - pose.translation) @ pose.rotation


def simulate_gt_validation(scene: SceneSpec, intr: CameraIntrinsics, seed: int,
                           frames: int = 30, keep_frac: float = 0.3,
                           fov_margin: float = 0.07, grazing_cos: float = 0.25,
                           range_noise: float = 0.01,
                           filter_radius: int = 1) -> tuple[DepthMap, DepthMap]:
    """Stationary-accumulation vs moving-reconstruction comparison.

    The static phase scans repeatedly from the cut-off viewpoint; the moving
    phase scans along a trajectory and its merged cloud is projected back to
    the cut-off viewpoint, where it fills margins and grazing surfaces the
    static scan cannot. Both maps get the occlusion minimum filter.
    """
    prims = build_scene(scene)
    p_s = Pose.identity()
    rng_static = substream(seed, "gtval", "static")
    rng_motion = substream(seed, "gtval", "motion")
    static_pts = [
        _capture_world_points(prims, p_s, intr, rng_static, keep_frac,
                              fov_margin, grazing_cos, range_noise)
        for _ in range(frames)
    ]
    traj = make_trajectory(frames, derive_seed(seed, "gtval-traj"),
                           max_offset=1.0, max_yaw=0.22, max_pitch=0.08)
    motion_pts = [
        _capture_world_points(prims, pose, intr, rng_motion, keep_frac,
                              fov_margin, grazing_cos, range_noise)
        for pose in traj
    ]
    w = WindowSpec(filter_radius)
    d_static = min_filter(project_points(PointCloud(np.concatenate(static_pts)), p_s, intr), w)
    d_motion = min_filter(project_points(PointCloud(np.concatenate(motion_pts)), p_s, intr), w)
    return d_static, d_motion
