"""Brute-force ground-truth collision oracle (independent of the ESDF)."""
from __future__ import annotations

import numpy as np

from .scene import VoxelScene

DEFAULT_SAFETY_RADIUS = 0.2


def nearest_obstacle_distance(scene: VoxelScene, points, chunk: int = 64) -> np.ndarray:
    """Exact distance from each point to the nearest occupied voxel center.

    Exhaustive search over every occupied voxel; ``inf`` for an empty scene.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    centers = scene.occupied_centers
    out = np.full(pts.shape[0], np.inf)
    if centers.shape[0] == 0:
        return out
    for s in range(0, pts.shape[0], chunk):
        diff = pts[s : s + chunk, None, :] - centers[None, :, :]
        out[s : s + chunk] = np.sqrt(np.min(np.einsum("pkc,pkc->pk", diff, diff), axis=1))
    return out


def check_collision(scene: VoxelScene, trajectory, safety_radius: float = DEFAULT_SAFETY_RADIUS):
    """``(collides, first_index)``: does any point come within ``safety_radius``?"""
    pts = np.asarray(trajectory, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("check_collision: empty trajectory")
    d = nearest_obstacle_distance(scene, pts)
    bad = np.flatnonzero(d < safety_radius)
    if bad.size == 0:
        return False, None
    return True, int(bad[0])
