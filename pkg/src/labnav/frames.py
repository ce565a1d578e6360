"""Robot pose and world <-> robot frame transforms.

The robot frame is the world frame translated to the robot's ground
footprint and rotated by its yaw: x forward, y left, z up.  Heights stay
absolute, so ``z`` means the same thing in both frames and the robot body sits
at ``(0, 0, z)`` in its own frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float
    yaw: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def rotation(self) -> np.ndarray:
        """3x3 matrix taking robot-frame vectors to world-frame vectors."""
        return yaw_matrix(self.yaw)

    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, 0.0])

    def to_robot(self, p_world) -> np.ndarray:
        p = np.asarray(p_world, dtype=np.float64)
        return (p - self.translation()) @ self.rotation()

    def to_world(self, p_robot) -> np.ndarray:
        p = np.asarray(p_robot, dtype=np.float64)
        return p @ self.rotation().T + self.translation()


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
