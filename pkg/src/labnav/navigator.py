"""Two-stage closed-loop navigation with land/air modes and energy accounting."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np

from .frames import Pose
from .gkpn import GKPN, GkpnOutput
from .simenv import CameraModel, Esdf, VoxelScene, build_esdf, check_collision, render_depth
from .spline import segment_trajectory, spline_interpolate
from .trainer import fear_gate

LAND, AIR = "LAND", "AIR"
GOAL_TOLERANCE = 0.5


@dataclass
class RobotParams:
    h_R: float = 0.3
    v_land: float = 0.729
    v_air: float = 1.0
    P_land: float = 85.5
    P_air: float = 1500.0
    eps: float = 0.15
    hysteresis: float = 0.1
    horizon: float = 3.0
    step_size: float = 0.1
    d_safe: float = 0.3  # refiner clearance: safety radius plus one voxel
    safety_radius: float = 0.2
    refine_w_c: float = 10.0
    refine_w_s: float = 1.0
    refine_iters: int = 50
    refine_step: float = 0.05
    refine_tol: float = 1e-6

    def __post_init__(self):
        for k in ("h_R", "v_land", "v_air", "P_land", "P_air", "eps", "horizon", "step_size"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        if self.hysteresis < 0:
            raise ValueError("hysteresis must be non-negative")
        if not self.P_air > self.P_land:
            raise ValueError("flying must cost more power than rolling (P_air > P_land)")

    @classmethod
    def from_dict(cls, d: dict) -> "RobotParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown RobotParams keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RefineResult:
    points: np.ndarray
    collision_before: float
    collision_after: float
    iterations: int
    diverged: bool = False


def _collision_term(points, esdf: Esdf, d_safe: float) -> tuple[float, np.ndarray]:
    d, g, _ = esdf.sample(points)
    h = np.maximum(d_safe - d, 0.0)
    return float(np.sum(h * h)), -2.0 * h[:, None] * g


def _smooth_term(points) -> tuple[float, np.ndarray]:
    acc = points[2:] - 2 * points[1:-1] + points[:-2]
    grad = np.zeros_like(points)
    grad[2:] += 2 * acc
    grad[1:-1] -= 4 * acc
    grad[:-2] += 2 * acc
    return float(np.sum(acc * acc)), grad


def refine_segment(segment, esdf: Esdf, params: RobotParams | None = None) -> RefineResult:
    """Gradient descent on interior points against ESDF proximity and bending.

    Endpoints stay pinned.  If the cost rises for 10 consecutive iterations, or
    the collision term ends worse than it started, the input is returned.
    """
    p = params or RobotParams()
    pts = np.array(segment, dtype=np.float64)
    c0, _ = _collision_term(pts, esdf, p.d_safe)
    if pts.shape[0] < 3:
        return RefineResult(pts, c0, c0, 0)

    def cost(x):
        cc, gc = _collision_term(x, esdf, p.d_safe)
        cs, gs = _smooth_term(x)
        return p.refine_w_c * cc + p.refine_w_s * cs, p.refine_w_c * gc + p.refine_w_s * gs

    x = pts.copy()
    f, g = cost(x)
    rises = 0
    it = 0
    for it in range(1, p.refine_iters + 1):
        g[0] = g[-1] = 0.0
        if np.linalg.norm(g) < p.refine_tol:
            it -= 1
            break
        x = x - p.refine_step * g
        f_new, g = cost(x)
        rises = rises + 1 if f_new > f else 0
        f = f_new
        if rises >= 10:
            return RefineResult(pts, c0, c0, it, diverged=True)
    c1, _ = _collision_term(x, esdf, p.d_safe)
    if c1 > c0:
        return RefineResult(pts, c0, c0, it, diverged=True)
    return RefineResult(x, c0, c1, it)


def assign_modes(segments, params: RobotParams | None = None, initial: str = LAND) -> list[str]:
    """LAND/AIR label per segment from its peak height, with hysteresis."""
    p = params or RobotParams()
    up = p.h_R + p.eps
    down = up - p.hysteresis
    state = initial
    labels = []
    for seg in segments:
        peak = float(np.max(np.asarray(seg)[:, 2]))
        if state == LAND and peak > up:
            state = AIR
        elif state == AIR and peak < down:
            state = LAND
        labels.append(state)
    return labels


@dataclass
class EnergyReport:
    energy: float
    time: float
    land_length: float
    air_length: float


def polyline_length(points) -> float:
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def account_energy(segments, modes, params: RobotParams | None = None) -> EnergyReport:
    """Energy = sum over modes of power x (length / speed)."""
    p = params or RobotParams()
    land = sum(polyline_length(s) for s, m in zip(segments, modes) if m == LAND)
    air = sum(polyline_length(s) for s, m in zip(segments, modes) if m == AIR)
    t_land, t_air = land / p.v_land, air / p.v_air
    return EnergyReport(p.P_land * t_land + p.P_air * t_air, t_land + t_air, land, air)


def energy_for_lengths(land_length: float, air_length: float, params: RobotParams | None = None) -> EnergyReport:
    p = params or RobotParams()
    t_land, t_air = land_length / p.v_land, air_length / p.v_air
    return EnergyReport(p.P_land * t_land + p.P_air * t_air, t_land + t_air, land_length, air_length)


@dataclass
class PlanResult:
    keypoints: np.ndarray  # world frame
    trajectory: np.ndarray  # world frame, refined first segment spliced in
    modes: list[str]
    fear: float
    energy: EnergyReport
    accepted: bool = True


Planner = Callable[[np.ndarray, np.ndarray], GkpnOutput]


def model_planner(model: GKPN) -> Planner:
    return model.predict


def straight_line_planner(n: int = 5) -> Planner:
    """Key points evenly spaced toward the goal in (x, y), all at the goal's
    altitude; never afraid.  A reference planner for harness checks."""

    def plan(depth, goal_robot):
        goal_robot = np.asarray(goal_robot, dtype=np.float64)
        K = np.empty((n, 3))
        K[:, :2] = (np.arange(1, n + 1)[:, None] / n) * goal_robot[None, :2]
        K[:, 2] = goal_robot[2]
        return GkpnOutput(K, 0.0)

    return plan


def plan_once(planner: Planner | GKPN, scene: VoxelScene, pose: Pose, goal, camera: CameraModel,
              params: RobotParams, m: int = 8, esdf: Esdf | None = None) -> PlanResult:
    """Single planning step: depth -> key points -> spline -> refine -> modes."""
    if isinstance(planner, GKPN):
        planner = planner.predict
    depth = render_depth(scene, camera.at(pose))
    out = planner(depth, pose.to_robot(goal))
    tau_r = spline_interpolate(out.keypoints, m, np.array([0.0, 0.0, pose.z])).data
    tau = pose.to_world(tau_r)
    segs = segment_trajectory(tau, out.keypoints)
    if esdf is None:
        esdf = build_esdf(scene.crop(pose.position, params.horizon))
    segs[0] = refine_segment(segs[0], esdf, params).points
    modes = assign_modes(segs, params)
    full = np.concatenate([segs[0]] + [s[1:] for s in segs[1:]])
    return PlanResult(pose.to_world(out.keypoints), full, modes, out.fear,
                      account_energy(segs, modes, params), out.fear < 0.5)


@dataclass
class Episode:
    steps: list[dict] = field(default_factory=list)
    success: bool = False
    collided: bool = False
    final_distance: float = float("inf")
    land_length: float = 0.0
    air_length: float = 0.0
    time: float = 0.0
    energy: float = 0.0
    air_segments: int = 0
    fear_errors: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "summary": True,
            "success": self.success,
            "collided": self.collided,
            "steps": len(self.steps),
            "final_distance": self.final_distance,
            "length_land": self.land_length,
            "length_air": self.air_length,
            "time_s": self.time,
            "energy_J": self.energy,
            "air_steps": self.air_segments,
        }

    def to_jsonl(self) -> str:
        rows = [json.dumps(r, sort_keys=True) for r in self.steps]
        rows.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(rows) + "\n"

    @property
    def positions(self) -> np.ndarray:
        return np.array([[r["x"], r["y"], r["z"]] for r in self.steps]) if self.steps else np.zeros((0, 3))


def _advance(points: np.ndarray, dist: float) -> np.ndarray:
    """Point at arc length ``dist`` along a polyline (clamped to its end)."""
    seg = np.diff(points, axis=0)
    lens = np.linalg.norm(seg, axis=1)
    acc = 0.0
    for i, L in enumerate(lens):
        if acc + L >= dist and L > 0:
            return points[i] + seg[i] * ((dist - acc) / L)
        acc += L
    return points[-1].copy()


def _clip_to_horizon(points: np.ndarray, center: np.ndarray, horizon: float) -> np.ndarray:
    inside = np.linalg.norm(points - center, axis=1) <= horizon
    if inside.all():
        return points
    cut = int(np.argmin(inside))
    return points[: max(cut, 2)]


def navigate(
    scene: VoxelScene,
    start: Pose,
    goal,
    planner: Planner | GKPN,
    params: RobotParams | None = None,
    step_limit: int = 200,
    camera: CameraModel | None = None,
    m: int = 8,
    label_fear: bool = False,
) -> Episode:
    """Closed loop: perceive, plan, gate, refine the first segment, move one step.

    The refinement ESDF is built only from voxels inside the local horizon.
    """
    p = params or RobotParams()
    camera = camera or CameraModel()
    plan = planner.predict if isinstance(planner, GKPN) else planner
    goal = np.asarray(goal, dtype=np.float64)
    if scene.is_occupied(start.position[None])[0] or scene.is_occupied(goal[None])[0]:
        raise ValueError("start or goal lies inside an obstacle")
    ep = Episode()
    pose = start
    mode = LAND
    previous: np.ndarray | None = None  # accepted world-frame trajectory
    previous_mu = None
    visited = [pose.position]
    for step in range(step_limit):
        if np.linalg.norm(pose.position - goal) < GOAL_TOLERANCE:
            break
        depth = render_depth(scene, camera.at(pose))
        out = plan(depth, pose.to_robot(goal))
        gate = fear_gate(out, previous, here=np.array([0.0, 0.0, pose.z]))
        if gate.accepted:
            K = np.asarray(out.keypoints)
            tau = pose.to_world(spline_interpolate(K, m, np.array([0.0, 0.0, pose.z])).data)
            n = K.shape[0]
            previous, previous_mu = tau, out.fear
            if label_fear:
                hit, _ = check_collision(scene, tau, p.safety_radius)
                ep.fear_errors.append(abs(out.fear - float(hit)))
        elif gate.retained:
            tau = previous
            n = (tau.shape[0] - 1) // m
        else:
            ep.steps.append(_step_row(step, pose, mode, out.fear, None, False, ep.energy))
            continue
        # resume the held plan from the point nearest the robot
        j = int(np.argmin(np.linalg.norm(tau - pose.position, axis=1)))
        tau = tau[j:] if tau.shape[0] - j >= 2 else tau[-2:]
        tau = np.concatenate([pose.position[None], tau[1:]]) if j else tau
        first = tau[: min(m, tau.shape[0] - 1) + 1]
        first = _clip_to_horizon(first, pose.position, p.horizon)
        esdf = build_esdf(scene.crop(pose.position, p.horizon))
        refined = refine_segment(first, esdf, p).points
        rest = [tau[k : k + m + 1] for k in range(m, tau.shape[0] - 1, m)]
        labels = assign_modes([refined] + rest, p, initial=mode)
        mode = labels[0]
        target = _advance(refined, p.step_size)
        target[2] = max(target[2], p.h_R)
        moved = float(np.linalg.norm(target - pose.position))
        v, P = (p.v_air, p.P_air) if mode == AIR else (p.v_land, p.P_land)
        if mode == AIR:
            ep.air_length += moved
            ep.air_segments += 1
        else:
            ep.land_length += moved
        ep.time += moved / v
        ep.energy += P * moved / v
        dxy = target[:2] - pose.position[:2]
        yaw = float(np.arctan2(dxy[1], dxy[0])) if np.linalg.norm(dxy) > 1e-6 else pose.yaw
        pose = Pose(float(target[0]), float(target[1]), float(target[2]), yaw)
        visited.append(pose.position)
        ep.steps.append(_step_row(step, pose, mode, out.fear, previous_mu, gate.accepted, ep.energy))
    pts = np.array(visited)
    ep.collided = bool(check_collision(scene, pts, p.safety_radius)[0])
    ep.final_distance = float(np.linalg.norm(pose.position - goal))
    ep.success = ep.final_distance < GOAL_TOLERANCE
    return ep


def _step_row(step, pose, mode, mu, executed_mu, accepted, energy) -> dict:
    return {
        "step": step,
        "x": pose.x,
        "y": pose.y,
        "z": pose.z,
        "yaw": pose.yaw,
        "mode": mode,
        "mu": mu,
        "executed_mu": executed_mu,
        "accepted": accepted,
        "energy_J": energy,
    }
