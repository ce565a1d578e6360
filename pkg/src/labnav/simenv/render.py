"""Ray-cast depth rendering over a voxel grid (along-ray range convention)."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..frames import Pose, yaw_matrix
from .scene import VoxelScene


@dataclass(frozen=True)
class CameraModel:
    width: int = 64
    height: int = 64
    hfov: float = np.pi / 2
    vfov: float = np.pi / 2
    max_range: float = 10.0
    pose: Pose = field(default_factory=lambda: Pose(0.0, 0.0, 0.3, 0.0))

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("camera resolution must be at least 8x8")
        if not (0 < self.hfov < np.pi and 0 < self.vfov < np.pi):
            raise ValueError("field of view must lie in (0, pi)")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")

    def at(self, pose: Pose) -> "CameraModel":
        return replace(self, pose=pose)

    def ray_directions(self) -> np.ndarray:
        """Unit world-frame ray directions, shape (H, W, 3); row 0 is the top."""
        u = ((np.arange(self.width) + 0.5) / self.width) * 2.0 - 1.0
        v = ((np.arange(self.height) + 0.5) / self.height) * 2.0 - 1.0
        vv, uu = np.meshgrid(v, u, indexing="ij")
        d = np.stack(
            [np.ones_like(uu), -uu * np.tan(self.hfov / 2), -vv * np.tan(self.vfov / 2)], axis=-1
        )
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return d @ yaw_matrix(self.pose.yaw).T


def render_depth(scene: VoxelScene, camera: CameraModel) -> np.ndarray:
    """Range along each pixel ray to the first occupied voxel, else ``max_range``.

    Uses an Amanatides-Woo grid traversal, vectorised over all rays.
    """
    origin = camera.pose.position
    idx0 = scene.voxel_index(origin)
    if not scene.in_bounds(idx0):
        raise ValueError(f"camera at {origin} lies outside the scene grid")
    if scene.occupancy[tuple(idx0)]:
        raise ValueError(f"camera at {origin} lies inside an occupied voxel")
    dirs = camera.ray_directions().reshape(-1, 3)
    n_rays = dirs.shape[0]
    vs = scene.voxel_size
    ext = np.array(scene.extents)

    idx = np.tile(idx0, (n_rays, 1))
    step = np.where(dirs >= 0, 1, -1)
    with np.errstate(divide="ignore"):
        inv = np.where(dirs != 0, 1.0 / dirs, np.inf)
    boundary = scene.origin + (idx + (step > 0)) * vs
    t_max = np.where(dirs != 0, (boundary - origin) * inv, np.inf)
    t_delta = np.where(dirs != 0, vs * np.abs(inv), np.inf)

    depth = np.full(n_rays, camera.max_range)
    ray = np.arange(n_rays)
    flat = scene.occupancy.ravel()
    strides = np.array([ext[1] * ext[2], ext[2], 1])
    while ray.size:
        axis = np.argmin(t_max, axis=1)
        rows = np.arange(ray.size)
        t_enter = t_max[rows, axis]
        idx[rows, axis] += step[rows, axis]
        t_max[rows, axis] += t_delta[rows, axis]
        inside = np.all((idx >= 0) & (idx < ext), axis=1) & (t_enter < camera.max_range)
        hit = np.zeros(ray.size, dtype=bool)
        hit[inside] = flat[idx[inside] @ strides]
        depth[ray[hit]] = t_enter[hit]
        keep = inside & ~hit
        if not keep.all():
            ray, idx, t_max, t_delta, step = ray[keep], idx[keep], t_max[keep], t_delta[keep], step[keep]
    return depth.reshape(camera.height, camera.width)


def write_pgm(path, depth: np.ndarray) -> None:
    """16-bit binary PGM in millimetres (big-endian per the PGM format)."""
    mm = np.clip(np.rint(np.asarray(depth) * 1000.0), 0, 65535).astype(">u2")
    h, w = mm.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(mm.tobytes())


def read_pgm(path) -> np.ndarray:
    """Inverse of :func:`write_pgm`; returns metres."""
    raw = open(path, "rb").read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.float64) / 1000.0
