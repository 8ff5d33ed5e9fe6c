"""On-disk formats.

  * ``.dmap``  — ASCII header ``DMAP <width> <height>\\n`` followed by
    width*height little-endian float32 values, row-major, meters, 0 = missing.
  * ``.ply``   — ASCII PLY with float x y z properties and optional int u v.
  * ``.ppm``   — binary PPM (P6), 8-bit RGB.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .geometry import DepthMap, PointCloud

__all__ = [
    "write_dmap", "read_dmap",
    "write_ply", "read_ply",
    "write_ppm", "read_ppm",
    "atomic_write_bytes",
]


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    """Write via a temp file + rename so readers never see partial content."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(payload)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def write_dmap(path: str | Path, d: DepthMap) -> None:
    header = f"DMAP {d.width} {d.height}\n".encode("ascii")
    payload = header + d.data.astype("<f4").tobytes()
    atomic_write_bytes(path, payload)


def read_dmap(path: str | Path) -> DepthMap:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").split()
        if len(header) != 3 or header[0] != "DMAP":
            raise ValueError(f"{path}: not a DMAP file")
        width, height = int(header[1]), int(header[2])
        raw = f.read(4 * width * height)
    if len(raw) != 4 * width * height:
        raise ValueError(f"{path}: truncated DMAP payload")
    data = np.frombuffer(raw, dtype="<f4").reshape(height, width)
    return DepthMap(data.astype(np.float64))


def write_ply(path: str | Path, cloud: PointCloud) -> None:
    with_pixels = cloud.pixels is not None
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if with_pixels:
        lines += ["property int u", "property int v"]
    lines.append("end_header")
    rows = []
    for i in range(len(cloud)):
        x, y, z = cloud.xyz[i]
        row = f"{x:.9g} {y:.9g} {z:.9g}"
        if with_pixels:
            row += f" {cloud.pixels[i, 0]} {cloud.pixels[i, 1]}"
        rows.append(row)
    atomic_write_bytes(path, ("\n".join(lines + rows) + "\n").encode("ascii"))


def read_ply(path: str | Path) -> PointCloud:
    with open(path, "r", encoding="ascii") as f:
        if f.readline().strip() != "ply":
            raise ValueError(f"{path}: not a PLY file")
        n_vertex = 0
        props: list[str] = []
        for line in f:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "element" and tok[1] == "vertex":
                n_vertex = int(tok[2])
            elif tok[0] == "property":
                props.append(tok[2])
            elif tok[0] == "end_header":
                break
        if props[:3] != ["x", "y", "z"]:
            raise ValueError(f"{path}: expected x y z as the first properties")
        has_uv = "u" in props and "v" in props
        xyz = np.zeros((n_vertex, 3))
        pix = np.zeros((n_vertex, 2), dtype=np.int64) if has_uv else None
        for i in range(n_vertex):
            vals = f.readline().split()
            xyz[i] = [float(vals[0]), float(vals[1]), float(vals[2])]
            if has_uv:
                pix[i] = [int(vals[props.index("u")]), int(vals[props.index("v")])]
    return PointCloud(xyz, pixels=pix)


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("expected (H, W, 3) uint8 image")
    h, w, _ = rgb.shape
    atomic_write_bytes(path, f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P6":
            raise ValueError(f"{path}: not a binary PPM")
        # skip comment lines
        line = f.readline()
        while line.startswith(b"#"):
            line = f.readline()
        w, h = (int(t) for t in line.split())
        maxval = int(f.readline())
        if maxval != 255:
            raise ValueError(f"{path}: only 8-bit PPM supported")
        raw = f.read(3 * w * h)
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()
