"""Imperative-learning training loop, fear gating and the evaluation protocol."""
from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .frames import Pose
from .gkpn import GKPN, GkpnConfig
from .losses import DEFAULT_D_SAFE, LossWeights, total_loss
from .simenv import (
    CameraModel,
    Esdf,
    VoxelScene,
    build_esdf,
    generate_scene,
    nearest_obstacle_distance,
    render_depth,
    sample_goal,
)
from .simenv.collision import DEFAULT_SAFETY_RADIUS
from .spline import spline_interpolate

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "c_obstacle", "c_motion", "c_goal", "c_energy", "fear", "total")


class NonFiniteLossError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    seed: int = 0
    batch_size: int = 8
    steps: int = 2000
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    n_scenes: int = 100
    samples_per_scene: int = 48
    templates: tuple = ("corridor", "wall-gap")
    goal_mode: str = "mixed"
    land_ratio: float = 0.5
    h_R: float = 0.3
    d_safe: float = DEFAULT_D_SAFE
    safety_radius: float = DEFAULT_SAFETY_RADIUS
    d_max: float = 5.0
    goal_min_dist: float = 0.3
    goal_max_dist: float = 8.0
    yaw_noise: float = np.pi / 6
    checkpoint_every: int = 0
    spn: bool = True
    lapn: bool = True

    def __post_init__(self):
        self.templates = tuple(self.templates)
        if self.batch_size < 1 or self.steps < 0 or self.n_scenes < 1 or self.samples_per_scene < 1:
            raise ValueError("counts must be positive")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["templates"] = list(self.templates)
        return out


@dataclass
class Sample:
    depth: np.ndarray
    goal_robot: np.ndarray
    pose: Pose
    scene_index: int


@dataclass
class Dataset:
    scenes: list[VoxelScene]
    esdfs: list[Esdf]
    samples: list[Sample]

    def save(self, directory) -> None:
        """Pre-rendered dataset: scene files plus one npz of samples."""
        from .simenv import save_scene

        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for i, s in enumerate(self.scenes):
            save_scene(s, d / f"scene_{i:04d}.json")
        np.savez_compressed(
            d / "samples.npz",
            depth=np.stack([s.depth for s in self.samples]),
            goal=np.stack([s.goal_robot for s in self.samples]),
            pose=np.array([[s.pose.x, s.pose.y, s.pose.z, s.pose.yaw] for s in self.samples]),
            scene=np.array([s.scene_index for s in self.samples]),
        )

    @classmethod
    def load(cls, directory, d_max: float = 5.0) -> "Dataset":
        from .simenv import load_scene

        d = Path(directory)
        scenes = [load_scene(p) for p in sorted(d.glob("scene_*.json"))]
        z = np.load(d / "samples.npz")
        samples = [
            Sample(z["depth"][i], z["goal"][i], Pose(*z["pose"][i]), int(z["scene"][i]))
            for i in range(z["depth"].shape[0])
        ]
        return cls(scenes, [build_esdf(s, d_max) for s in scenes], samples)


def sample_pose(scene: VoxelScene, rng: np.random.Generator, h_R: float, clearance: float = 0.4,
                region=None, max_tries: int = 1000) -> Pose:
    lo, hi = scene.origin, scene.upper
    (x0, x1), (y0, y1) = region if region is not None else ((lo[0], hi[0]), (lo[1], hi[1]))
    for _ in range(max_tries):
        p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1), h_R])
        if nearest_obstacle_distance(scene, p)[0] >= clearance:
            return Pose(p[0], p[1], h_R, 0.0)
    raise RuntimeError("could not place the robot in free space")


def make_sample(scene, esdf, rng, cfg: TrainConfig, camera: CameraModel, scene_index: int) -> Sample:
    pose = sample_pose(scene, rng, cfg.h_R)
    for _ in range(200):
        goal = sample_goal(scene, rng, cfg.goal_mode, h_R=cfg.h_R, land_ratio=cfg.land_ratio,
                           safety_radius=cfg.safety_radius)
        dist = np.linalg.norm(goal.position[:2] - pose.position[:2])
        if cfg.goal_min_dist <= dist <= cfg.goal_max_dist:
            break
    heading = np.arctan2(goal.position[1] - pose.y, goal.position[0] - pose.x)
    pose = Pose(pose.x, pose.y, pose.z, heading + rng.uniform(-cfg.yaw_noise, cfg.yaw_noise))
    depth = render_depth(scene, camera.at(pose))
    return Sample(depth, pose.to_robot(goal.position), pose, scene_index)


def scene_seeds(seed: int, count: int, offset: int = 0) -> list[int]:
    return [int(s) for s in np.random.SeedSequence([seed, offset]).generate_state(count)]


def build_dataset(cfg: TrainConfig, camera: CameraModel | None = None, seed_offset: int = 0) -> Dataset:
    """Generate scenes, distance fields and rendered samples for training."""
    camera = camera or CameraModel()
    rng = np.random.default_rng([cfg.seed, seed_offset, 1])
    scenes, esdfs, samples = [], [], []
    for i, s in enumerate(scene_seeds(cfg.seed, cfg.n_scenes, seed_offset)):
        scene = generate_scene(s, cfg.templates[i % len(cfg.templates)])
        esdf = build_esdf(scene, cfg.d_max)
        scenes.append(scene)
        esdfs.append(esdf)
        for _ in range(cfg.samples_per_scene):
            samples.append(make_sample(scene, esdf, rng, cfg, camera, i))
    return Dataset(scenes, esdfs, samples)


class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad**2
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def batch_loss(model: GKPN, data: Dataset, idx, cfg: TrainConfig, weights: LossWeights):
    """Mean total loss over a batch plus per-term means (floats)."""
    batch = [data.samples[i] for i in idx]
    depth = np.stack([s.depth for s in batch])
    goals = np.stack([s.goal_robot for s in batch])
    K, mu = model(depth, goals)
    start = np.array([0.0, 0.0, cfg.h_R])
    tau = spline_interpolate(K, model.config.m_interp, start)
    terms = {k: 0.0 for k in LOG_COLUMNS[1:]}
    total = None
    for b, s in enumerate(batch):
        rep = total_loss(
            K[b], tau[b], mu[b], s.goal_robot, s.pose, data.scenes[s.scene_index],
            data.esdfs[s.scene_index], weights, h_R=cfg.h_R, d_safe=cfg.d_safe,
            safety_radius=cfg.safety_radius,
        )
        for k, v in rep.values().items():
            terms[k] += v / len(batch)
        total = rep.total if total is None else total + rep.total
    return ad.scale(total, 1.0 / len(batch)), terms


@dataclass
class TrainResult:
    model: GKPN
    log_rows: list[dict] = field(default_factory=list)

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in self.log_rows:
            w.writerow([row["step"]] + [repr(float(row[k])) for k in LOG_COLUMNS[1:]])
        return buf.getvalue()

    @property
    def final_loss(self) -> float:
        tail = self.log_rows[-max(1, len(self.log_rows) // 10):]
        return float(np.mean([r["total"] for r in tail]))


def train(
    cfg: TrainConfig,
    model_cfg: GkpnConfig | None = None,
    weights: LossWeights | None = None,
    dataset: Dataset | None = None,
    checkpoint_dir=None,
    fixed_batch: bool = False,
) -> TrainResult:
    """Run the imperative-learning loop and return the model with its log.

    Each step: sample a batch -> network -> spline -> total loss -> backward
    -> Adam update.  With ``fixed_batch`` the same batch is reused every step
    (overfitting smoke test).
    """
    model_cfg = model_cfg or GkpnConfig(spn=cfg.spn, lapn=cfg.lapn)
    weights = weights or LossWeights()
    camera = CameraModel(width=model_cfg.width, height=model_cfg.height)
    data = dataset or build_dataset(cfg, camera)
    model = GKPN(model_cfg, seed=cfg.seed)
    opt = Adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng([cfg.seed, 2])
    n = len(data.samples)
    first = rng.choice(n, size=min(cfg.batch_size, n), replace=False)
    result = TrainResult(model)
    for step in range(cfg.steps):
        idx = first if fixed_batch else rng.choice(n, size=min(cfg.batch_size, n), replace=False)
        opt.zero_grad()
        try:
            loss, terms = batch_loss(model, data, idx, cfg, weights)
        except ValueError as exc:
            if "non-finite" not in str(exc):
                raise
            terms = {"error": float("nan")}
        if not all(np.isfinite(v) for v in terms.values()):
            ad.get_tape().clear()
            seeds = sorted({data.scenes[data.samples[i].scene_index].seed for i in idx})
            raise NonFiniteLossError(
                f"non-finite loss at step {step}: scenes={seeds} theta={model.checksum()[:16]} terms={terms}"
            )
        ad.backward(loss)
        opt.step()
        result.log_rows.append({"step": step, **terms})
        if checkpoint_dir and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            model.save(Path(checkpoint_dir) / f"ckpt_{step + 1:06d}.bin")
        if step % 100 == 0:
            log.info("step %d total %.4f", step, terms["total"])
    return result


# -------------------------------------------------------------------- ablation

EDGE_HEAVY_TEMPLATES = ("random-boxes", "room-cluster")

VARIANTS = {
    "full": (True, True),
    "no-spn": (False, True),
    "no-lapn": (True, False),
    "no-spn-no-lapn": (False, False),
}


@dataclass
class AblationResult:
    final_losses: dict[str, list[float]]

    def median(self, variant: str) -> float:
        return float(np.median(self.final_losses[variant]))


def ablation(cfg: TrainConfig, seeds, variants=("full", "no-spn-no-lapn")) -> AblationResult:
    """Train each variant once per seed on identical data; collect final losses.

    Variants of one seed share the dataset and the sampling order, so the
    comparison is paired.
    """
    out: dict[str, list[float]] = {v: [] for v in variants}
    for seed in seeds:
        base = TrainConfig(**{**cfg.to_dict(), "seed": seed})
        data = build_dataset(base)
        for v in variants:
            spn, lapn = VARIANTS[v]
            run = TrainConfig(**{**base.to_dict(), "spn": spn, "lapn": lapn})
            out[v].append(train(run, dataset=data).final_loss)
    return AblationResult(out)


# ------------------------------------------------------------------- fear gate


@dataclass
class GateDecision:
    keypoints: np.ndarray | None
    accepted: bool
    retained: bool
    stop: bool
    fear: float


FEAR_THRESHOLD = 0.5


def fear_gate(output, previous=None, threshold: float = FEAR_THRESHOLD, here=None) -> GateDecision:
    """Accept a plan only when its collision probability is strictly below 0.5.

    A rejected plan falls back to ``previous`` (any array of key points), or
    to a stop-in-place plan of length 1 holding ``here`` (robot-frame origin
    by default) when there is none.
    """
    if output.fear < threshold:
        return GateDecision(np.asarray(output.keypoints), True, False, False, output.fear)
    if previous is not None:
        return GateDecision(np.asarray(previous), False, True, False, output.fear)
    stop = np.zeros((1, 3)) if here is None else np.asarray(here, dtype=np.float64).reshape(1, 3)
    return GateDecision(stop, False, False, True, output.fear)


def params_checksum(model: GKPN) -> str:
    return model.checksum()


def hash_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()
