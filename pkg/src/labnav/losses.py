"""Training objective: obstacle, motion, goal and energy costs plus the fear loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .frames import Pose
from .simenv import Esdf, VoxelScene, check_collision, esdf_distance
from .simenv.collision import DEFAULT_SAFETY_RADIUS

DEFAULT_D_SAFE = 0.5
BCE_EPS = 1e-7


@dataclass
class LossWeights:
    alpha: float = 1.0  # obstacle
    beta: float = 0.1  # motion
    gamma: float = 2.0  # goal
    delta: float = 0.5  # energy

    def __post_init__(self):
        for k, v in vars(self).items():
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"loss weight {k} must be finite and non-negative, got {v}")


@dataclass
class LossReport:
    c_obstacle: Tensor
    c_motion: Tensor
    c_goal: Tensor
    c_energy: Tensor
    fear_loss: Tensor
    total: Tensor
    collided: bool = False

    def values(self) -> dict[str, float]:
        return {
            "c_obstacle": self.c_obstacle.item(),
            "c_motion": self.c_motion.item(),
            "c_goal": self.c_goal.item(),
            "c_energy": self.c_energy.item(),
            "fear": self.fear_loss.item(),
            "total": self.total.item(),
        }


def obstacle_cost(tau, esdf: Esdf, d_safe: float = DEFAULT_D_SAFE) -> Tensor:
    """Mean hinge ``max(d_safe - esdf(p), 0)`` over world-frame points."""
    d = esdf_distance(esdf, tau)
    return ad.mean(ad.relu(ad.sub(d_safe, d)))


def motion_cost(tau) -> Tensor:
    """Mean squared second difference; zero for uniform straight motion."""
    tau = ad.as_tensor(tau)
    if tau.shape[0] < 3:
        return Tensor(0.0)
    acc = tau[2:] - tau[1:-1] * 2.0 + tau[:-2]
    return ad.mean(ad.sum(acc * acc, axis=-1))


def goal_distance(last_keypoint, goal, h_R: float) -> Tensor:
    """Planar distance when the goal is below body height, 3-D otherwise."""
    goal = np.asarray(goal, dtype=np.float64)
    diff = ad.sub(last_keypoint, goal)
    if goal[2] < h_R:
        diff = diff[:2]
    return ad.l2norm_rows(diff)


def goal_cost(keypoints, goal, h_R: float) -> Tensor:
    """``log(1 + d)`` between the last key point and the goal.

    The per-point average in the original formulation is over a constant, so
    it reduces to the single term.
    """
    K = ad.as_tensor(keypoints)
    return ad.log1p(goal_distance(K[-1], goal, h_R))


def energy_cost(tau, h_R: float) -> Tensor:
    """Mean absolute altitude deviation from body height."""
    tau = ad.as_tensor(tau)
    return ad.mean(ad.abs(ad.sub(tau[:, 2], h_R)))


def bce(mu, label: float) -> Tensor:
    mu = ad.clip(mu, BCE_EPS, 1.0 - BCE_EPS)
    if label >= 0.5:
        return -ad.log(mu)
    return -ad.log1p(-mu)


def fear_loss(mu, tau_world, scene: VoxelScene, safety_radius: float = DEFAULT_SAFETY_RADIUS):
    """BCE of the predicted collision probability against the oracle label.

    Returns ``(loss, collided)``.
    """
    pts = np.asarray(getattr(tau_world, "data", tau_world))
    collided, _ = check_collision(scene, pts, safety_radius)
    ad.note_branch(np.array(collided))
    return bce(mu, 1.0 if collided else 0.0), collided


def total_loss(
    keypoints,
    tau,
    mu,
    goal_robot,
    pose: Pose,
    scene: VoxelScene,
    esdf: Esdf,
    weights: LossWeights | None = None,
    *,
    h_R: float = 0.3,
    d_safe: float = DEFAULT_D_SAFE,
    safety_radius: float = DEFAULT_SAFETY_RADIUS,
) -> LossReport:
    """Full objective for one sample.

    ``keypoints`` (n, 3) and ``tau`` (m*n + 1, 3) are in the robot frame of
    ``pose``; ``goal_robot`` too.  Obstacle and fear terms are evaluated after
    mapping the trajectory into the world frame of ``scene``/``esdf``.
    """
    w = weights or LossWeights()
    tau = ad.as_tensor(tau)
    tau_world = ad.add(ad.matmul(tau, pose.rotation().T), pose.translation())
    c_o = obstacle_cost(tau_world, esdf, d_safe)
    c_m = motion_cost(tau)
    c_g = goal_cost(keypoints, goal_robot, h_R)
    c_e = energy_cost(tau[1:], h_R)
    f, collided = fear_loss(mu, tau_world, scene, safety_radius)
    cost = c_o * w.alpha + c_m * w.beta + c_g * w.gamma + c_e * w.delta
    return LossReport(c_o, c_m, c_g, c_e, f, cost + f, collided)
