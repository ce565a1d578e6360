"""Euclidean distance fields over voxel grids with trilinear sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .. import autodiff as ad
from .scene import VoxelScene

DEFAULT_D_MAX = 5.0


@dataclass
class Esdf:
    """Distance (m) from each voxel center to the nearest occupied voxel center."""

    distance: np.ndarray
    voxel_size: float
    origin: np.ndarray
    d_max: float = DEFAULT_D_MAX

    @property
    def extents(self) -> tuple[int, int, int]:
        return self.distance.shape

    def sample(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Trilinear interpolation at world points of shape (..., 3).

        Returns ``(distance, gradient, clamped)``.  Points outside the span of
        voxel centers are clamped onto it; the gradient along a clamped axis is
        zero and ``clamped`` flags such points.
        """
        p = np.asarray(points, dtype=np.float64)
        if not np.all(np.isfinite(p)):
            raise ValueError("sample_esdf: non-finite query point")
        lead = p.shape[:-1]
        p = p.reshape(-1, 3)
        n = np.array(self.distance.shape)
        u = (p - self.origin) / self.voxel_size - 0.5
        hi = (n - 1).astype(np.float64)
        clamped_axes = (u < 0.0) | (u > hi)
        u = np.clip(u, 0.0, hi)
        i0 = np.minimum(np.floor(u).astype(int), np.maximum(n - 2, 0))
        t = u - i0
        ad.note_branch(i0)
        ad.note_branch(clamped_axes)
        i1 = np.minimum(i0 + 1, n - 1)
        D = self.distance
        c = np.empty((p.shape[0], 2, 2, 2))
        for a, ia in enumerate((i0[:, 0], i1[:, 0])):
            for b, ib in enumerate((i0[:, 1], i1[:, 1])):
                for g, ig in enumerate((i0[:, 2], i1[:, 2])):
                    c[:, a, b, g] = D[ia, ib, ig]
        tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
        # collapse x, then y, then z
        cx = c[:, 0] * (1 - tx)[:, None, None] + c[:, 1] * tx[:, None, None]
        dcx = c[:, 1] - c[:, 0]
        cxy = cx[:, 0] * (1 - ty)[:, None] + cx[:, 1] * ty[:, None]
        d = cxy[:, 0] * (1 - tz) + cxy[:, 1] * tz
        # partial derivatives of the interpolant in index units
        dcx_y = dcx[:, 0] * (1 - ty)[:, None] + dcx[:, 1] * ty[:, None]
        gx = dcx_y[:, 0] * (1 - tz) + dcx_y[:, 1] * tz
        dcy = cx[:, 1] - cx[:, 0]
        gy = dcy[:, 0] * (1 - tz) + dcy[:, 1] * tz
        gz = cxy[:, 1] - cxy[:, 0]
        grad = np.stack([gx, gy, gz], axis=-1) / self.voxel_size
        grad[clamped_axes] = 0.0
        single = n == 1
        grad[:, single] = 0.0
        return d.reshape(lead), grad.reshape(lead + (3,)), clamped_axes.any(axis=-1).reshape(lead)


def build_esdf(scene: VoxelScene, d_max: float = DEFAULT_D_MAX) -> Esdf:
    """Exact Euclidean distance transform of the occupancy, clamped at ``d_max``."""
    occ = scene.occupancy
    if not occ.any():
        dist = np.full(occ.shape, float(d_max))
    else:
        dist = ndimage.distance_transform_edt(~occ, sampling=scene.voxel_size)
        dist = np.minimum(dist, d_max)
    return Esdf(dist.astype(np.float64), scene.voxel_size, scene.origin.copy(), float(d_max))


def sample_esdf(esdf: Esdf, p) -> tuple[float, np.ndarray]:
    """Distance and analytic gradient at a single point."""
    d, g, _ = esdf.sample(np.asarray(p, dtype=np.float64).reshape(1, 3))
    return float(d[0]), g[0]


def esdf_distance(esdf: Esdf, points: ad.Tensor) -> ad.Tensor:
    """Differentiable ESDF lookup for a (..., 3) point tensor."""
    points = ad.as_tensor(points)
    d, grad, _ = esdf.sample(points.data)
    return ad.make_node(d, (points,), lambda g: (g[..., None] * grad,))
