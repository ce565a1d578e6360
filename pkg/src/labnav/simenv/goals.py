"""Goal sampling on land or in the air."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..frames import Pose
from .collision import DEFAULT_SAFETY_RADIUS, nearest_obstacle_distance
from .scene import VoxelScene

DEFAULT_BODY_HEIGHT = 0.3
DEFAULT_AIR_RANGE = (0.8, 2.5)


@dataclass(frozen=True)
class Goal:
    position: np.ndarray

    @property
    def z(self) -> float:
        return float(self.position[2])

    def in_robot_frame(self, pose: Pose) -> np.ndarray:
        return pose.to_robot(self.position)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_goal(
    scene: VoxelScene,
    seed,
    mode: str = "mixed",
    *,
    h_R: float = DEFAULT_BODY_HEIGHT,
    air_range: tuple[float, float] = DEFAULT_AIR_RANGE,
    land_ratio: float = 0.5,
    safety_radius: float = DEFAULT_SAFETY_RADIUS,
    region: tuple[tuple[float, float], tuple[float, float]] | None = None,
    max_tries: int = 1000,
) -> Goal:
    """Uniform goal over free space.

    Land goals sit at ``z = h_R``; air goals draw ``z`` uniformly from
    ``air_range``.  ``region`` optionally restricts ``((x0, x1), (y0, y1))``.
    """
    if mode not in ("land", "air", "mixed"):
        raise ValueError(f"unknown goal mode {mode!r}")
    rng = _rng(seed)
    lo, hi = scene.origin, scene.upper
    (x0, x1), (y0, y1) = region if region is not None else ((lo[0], hi[0]), (lo[1], hi[1]))
    x0, x1 = max(x0, lo[0]), min(x1, hi[0])
    y0, y1 = max(y0, lo[1]), min(y1, hi[1])
    zmax = hi[2] - scene.voxel_size
    for _ in range(max_tries):
        land = mode == "land" or (mode == "mixed" and rng.random() < land_ratio)
        z = h_R if land else rng.uniform(air_range[0], min(air_range[1], zmax))
        p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1), z])
        if nearest_obstacle_distance(scene, p)[0] >= safety_radius and not scene.is_occupied(p[None])[0]:
            return Goal(p)
    raise RuntimeError(f"no valid {mode} goal found after {max_tries} tries")
