"""Goal-reached evaluation over held-out scenes."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .frames import Pose
from .gkpn import GKPN
from .navigator import Episode, Planner, RobotParams, navigate
from .simenv import CameraModel, generate_scene, sample_goal
from .trainer import sample_pose, scene_seeds

HELD_OUT_OFFSET = 1_000


@dataclass
class EvalConfig:
    seed: int = 0
    trials: int = 20
    templates: tuple = ("corridor", "wall-gap")
    goal_mode: str = "land"
    land_ratio: float = 0.5
    step_limit: int = 200
    start_x: tuple = (0.5, 1.5)
    goal_x: tuple = (6.5, 7.5)
    lateral: tuple = (-1.2, 1.2)
    jobs: int = 1

    def __post_init__(self):
        self.templates = tuple(self.templates)
        self.start_x, self.goal_x, self.lateral = tuple(self.start_x), tuple(self.goal_x), tuple(self.lateral)
        if self.trials < 1 or self.step_limit < 0:
            raise ValueError("trials must be positive and step_limit non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "EvalConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown EvalConfig keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class EvalReport:
    goal_reached_rate: float
    collision_rate: float
    mean_train_loss: float | None
    fear_calibration_error: float
    trials: int
    successes: int
    collisions: int
    gate_violations: int
    episodes: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def make_trial(cfg: EvalConfig, i: int, h_R: float):
    """Held-out scene, start pose and goal for trial ``i`` (seeds disjoint from training)."""
    seed = scene_seeds(cfg.seed, cfg.trials, HELD_OUT_OFFSET)[i]
    scene = generate_scene(seed, cfg.templates[i % len(cfg.templates)])
    rng = np.random.default_rng([cfg.seed, HELD_OUT_OFFSET, i])
    start = sample_pose(scene, rng, h_R, region=(cfg.start_x, cfg.lateral))
    goal = sample_goal(scene, rng, cfg.goal_mode, h_R=h_R, land_ratio=cfg.land_ratio,
                       region=(cfg.goal_x, cfg.lateral)).position
    yaw = float(np.arctan2(goal[1] - start.y, goal[0] - start.x))
    return scene, Pose(start.x, start.y, start.z, yaw), goal


def _run_trial(args):
    planner, cfg, i, params, camera, m = args
    scene, start, goal = make_trial(cfg, i, params.h_R)
    ep = navigate(scene, start, goal, planner, params, cfg.step_limit, camera, m=m, label_fear=True)
    return ep


def gate_violations(ep: Episode) -> int:
    """Executed steps whose plan carried a fear value of 0.5 or more."""
    return sum(1 for r in ep.steps if r["executed_mu"] is not None and r["executed_mu"] >= 0.5)


def evaluate(
    planner: Planner | GKPN,
    cfg: EvalConfig | None = None,
    params: RobotParams | None = None,
    camera: CameraModel | None = None,
    mean_train_loss: float | None = None,
) -> EvalReport:
    cfg = cfg or EvalConfig()
    params = params or RobotParams()
    camera = camera or CameraModel()
    m = planner.config.m_interp if isinstance(planner, GKPN) else 8
    jobs = [(planner, cfg, i, params, camera, m) for i in range(cfg.trials)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            episodes = list(pool.map(_run_trial, jobs))
    else:
        episodes = [_run_trial(j) for j in jobs]
    succ = sum(e.success for e in episodes)
    coll = sum(e.collided for e in episodes)
    errs = [x for e in episodes for x in e.fear_errors]
    return EvalReport(
        goal_reached_rate=succ / cfg.trials,
        collision_rate=coll / cfg.trials,
        mean_train_loss=mean_train_loss,
        fear_calibration_error=float(np.mean(errs)) if errs else 0.0,
        trials=cfg.trials,
        successes=succ,
        collisions=coll,
        gate_violations=sum(gate_violations(e) for e in episodes),
        episodes=[e.summary() for e in episodes],
    )
