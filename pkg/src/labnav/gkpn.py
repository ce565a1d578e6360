"""Global key-points prediction network.

Depth image + goal -> ``n`` key points (robot frame) and a collision
probability.  Perception runs a plain conv/pool branch and a Sobel-edge branch
side by side, merges them with a residual block, and flattens space into a
feature axis of length ``M``.  Planning re-weights projected features with a
goal-conditioned softmax over ``M`` (elementwise, so cost stays linear in
``M``), appends the goal embedding, and decodes key points and fear.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Conv2d, Linear, Module, count_flops, count_params, load_weights, save_weights


@dataclass
class GkpnConfig:
    width: int = 64
    height: int = 64
    channels: int = 16  # C, split evenly between the two perception branches
    goal_channels: int = 16  # C1
    n_keypoints: int = 5  # n
    m_interp: int = 8  # m
    pool_stages: int = 3
    trunk_channels: int = 16
    fear_hidden: int = 16
    depth_scale: float = 0.1  # input depth is multiplied by this
    keypoint_init_scale: float = 0.1
    spn: bool = True
    lapn: bool = True

    def __post_init__(self):
        if self.goal_channels <= 3:
            raise ValueError("goal_channels (C1) must exceed 3")
        if self.n_keypoints < 2:
            raise ValueError("need at least 2 key points")
        if self.channels < 2 or self.channels % 2:
            raise ValueError("channels must be an even number >= 2")
        f = 2**self.pool_stages
        if self.width % f or self.height % f:
            raise ValueError(f"image size must be divisible by {f}")
        if self.feature_dim < 4:
            raise ValueError("feature dimension M must be at least 4")

    @property
    def feature_dim(self) -> int:
        """M: spatial positions left after pooling."""
        f = 2**self.pool_stages
        return (self.width // f) * (self.height // f)

    @property
    def trajectory_length(self) -> int:
        return self.m_interp * self.n_keypoints + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GkpnConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown GkpnConfig keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class GkpnOutput:
    keypoints: np.ndarray  # (n, 3)
    fear: float


class ConvPool(Module):
    """``pool_stages`` x (3x3 conv -> ReLU -> 2x2 max-pool)."""

    def __init__(self, c_in: int, c_out: int, stages: int, rng):
        self.convs = [Conv2d(c_in if i == 0 else c_out, c_out, 3, rng) for i in range(stages)]

    def forward(self, x):
        for conv in self.convs:
            x = ad.maxpool2d(ad.relu(conv(x)), 2)
        return x


class ResidualBlock(Module):
    def __init__(self, c: int, rng):
        self.conv1 = Conv2d(c, c, 3, rng)
        self.conv2 = Conv2d(c, c, 3, rng)

    def forward(self, x):
        return ad.relu(x + self.conv2(ad.relu(self.conv1(x))))


class SobelPerception(Module):
    def __init__(self, cfg: GkpnConfig, rng):
        half = cfg.channels // 2
        self._cfg = cfg
        self.depth_branch = ConvPool(1, half, cfg.pool_stages, rng)
        self.edge_branch = ConvPool(2, half, cfg.pool_stages, rng) if cfg.spn else None
        self.merge = ResidualBlock(cfg.channels, rng)

    def forward(self, depth):
        cfg = self._cfg
        depth = ad.as_tensor(depth)
        if depth.shape[-2:] != (cfg.height, cfg.width):
            raise ad.ShapeError("spn_forward", depth.shape, (cfg.height, cfg.width))
        x = ad.scale(ad.reshape(depth, (-1, 1, cfg.height, cfg.width)), cfg.depth_scale)
        a = self.depth_branch(x)
        if self.edge_branch is not None:
            b = self.edge_branch(ad.sobel_conv2d(x))
        else:
            b = Tensor(np.zeros(a.shape))
        o = self.merge(ad.concat([a, b], axis=1))
        return ad.reshape(o, (o.shape[0], cfg.channels, -1))


class AttentionPlanner(Module):
    """Goal-conditioned feature re-weighting and key-point / fear decoders."""

    def __init__(self, channels: int, feature_dim: int, goal_channels: int, n_keypoints: int, rng,
                 trunk_channels: int = 16, fear_hidden: int = 16, keypoint_init_scale: float = 0.1,
                 reweight: bool = True):
        C, M, C1 = channels, feature_dim, goal_channels
        self._dims = (C, M, C1, n_keypoints)
        self.goal_embed = Linear(3, C1 * M, rng)
        self.weight_map = Linear(C1, C1, rng) if reweight else None
        self.project = Linear(C, C1, rng)
        self.trunk = Conv2d(2 * C1, trunk_channels, (1, 3), rng)
        self.head = Linear(trunk_channels * M, 3 * n_keypoints, rng, gain=keypoint_init_scale)
        self.fear_hidden = Linear(trunk_channels, fear_hidden, rng)
        self.fear_out = Linear(fear_hidden, 1, rng)

    def attention(self, feats, goal):
        """Returns ``(re-weighted features, goal embedding, weights)``, all (N, C1, M)."""
        C, M, C1, n = self._dims
        feats, goal = ad.as_tensor(feats), ad.as_tensor(goal)
        if feats.ndim != 3 or feats.shape[1:] != (C, M):
            raise ad.ShapeError("lapn_forward", feats.shape, (C, M))
        goal = ad.reshape(goal, (-1, 3))
        if goal.shape[0] != feats.shape[0]:
            raise ad.ShapeError("lapn_forward", feats.shape, goal.shape, detail="batch")
        g = ad.reshape(self.goal_embed(goal), (-1, C1, M))
        # per-position channel maps keep every step O(M)
        proj = ad.transpose(self.project(ad.transpose(feats, (0, 2, 1))), (0, 2, 1))
        if self.weight_map is None:
            return proj, g, None
        logits = ad.transpose(self.weight_map(ad.transpose(g, (0, 2, 1))), (0, 2, 1))
        w = ad.softmax(logits, axis=-1)
        return proj * w, g, w

    def forward(self, feats, goal):
        C, M, C1, n = self._dims
        att, g, _ = self.attention(feats, goal)
        fused = ad.concat([att, g], axis=1)  # (N, 2*C1, M)
        N = fused.shape[0]
        h = ad.relu(self.trunk(ad.reshape(fused, (N, 2 * C1, 1, M))))
        h = ad.reshape(h, (N, -1, M))
        K = ad.reshape(self.head(ad.reshape(h, (N, -1))), (N, n, 3))
        pooled = ad.mean(h, axis=-1)
        mu = ad.sigmoid(self.fear_out(ad.relu(self.fear_hidden(pooled))))
        return K, ad.reshape(mu, (N,))


class QuadraticAttentionBlock(Module):
    """Standard scaled dot-product self-attention over the ``M`` positions.

    Reference point for costing only; it materialises an M x M score matrix.
    """

    def __init__(self, channels: int, feature_dim: int, goal_channels: int, rng):
        C, C1 = channels, goal_channels
        self._dims = (C, feature_dim, C1)
        self.query = Linear(C, C1, rng)
        self.key = Linear(C, C1, rng)
        self.value = Linear(C, C1, rng)

    def forward(self, feats, goal=None):
        C, M, C1 = self._dims
        x = ad.transpose(ad.as_tensor(feats), (0, 2, 1))  # (N, M, C)
        q, k, v = self.query(x), self.key(x), self.value(x)
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(C1))
        a = ad.softmax(scores, axis=-1)  # (N, M, M)
        return ad.transpose(ad.matmul(a, v), (0, 2, 1))  # (N, C1, M)


class LightweightAttentionBlock(Module):
    """The re-weighting step of :class:`AttentionPlanner` on its own."""

    def __init__(self, channels: int, feature_dim: int, goal_channels: int, rng):
        C, C1 = channels, goal_channels
        self._dims = (C, feature_dim, C1)
        self.goal_embed = Linear(3, C1 * feature_dim, rng)
        self.weight_map = Linear(C1, C1, rng)
        self.project = Linear(C, C1, rng)

    def forward(self, feats, goal):
        C, M, C1 = self._dims
        g = ad.reshape(self.goal_embed(ad.reshape(goal, (-1, 3))), (-1, C1, M))
        proj = ad.transpose(self.project(ad.transpose(feats, (0, 2, 1))), (0, 2, 1))
        w = ad.softmax(ad.transpose(self.weight_map(ad.transpose(g, (0, 2, 1))), (0, 2, 1)), axis=-1)
        return proj * w


class QuadraticAttentionPlanner(AttentionPlanner):
    """Same decoders as :class:`AttentionPlanner`, dot-product attention in front."""

    def __init__(self, channels, feature_dim, goal_channels, n_keypoints, rng, **kw):
        super().__init__(channels, feature_dim, goal_channels, n_keypoints, rng, reweight=False, **kw)
        self.attn = QuadraticAttentionBlock(channels, feature_dim, goal_channels, rng)
        self.project = None

    def attention(self, feats, goal):
        C, M, C1, n = self._dims
        g = ad.reshape(self.goal_embed(ad.reshape(goal, (-1, 3))), (-1, C1, M))
        return self.attn(feats), g, None


class GKPN(Module):
    def __init__(self, cfg: GkpnConfig | None = None, seed: int = 0):
        cfg = cfg or GkpnConfig()
        rng = np.random.default_rng(seed)
        self.config = cfg
        self.seed = seed
        self.spn = SobelPerception(cfg, rng)
        self.lapn = AttentionPlanner(
            cfg.channels, cfg.feature_dim, cfg.goal_channels, cfg.n_keypoints, rng,
            trunk_channels=cfg.trunk_channels, fear_hidden=cfg.fear_hidden,
            keypoint_init_scale=cfg.keypoint_init_scale, reweight=cfg.lapn,
        )

    def forward(self, depth, goal):
        """Batched: depth (N, H, W), goal (N, 3) -> K (N, n, 3), mu (N,)."""
        return self.lapn(self.spn(depth), goal)

    def predict(self, depth, goal) -> GkpnOutput:
        """Single-sample inference without recording a tape."""
        with ad.no_grad():
            K, mu = self.forward(np.asarray(depth)[None], np.asarray(goal, dtype=np.float64)[None])
        return GkpnOutput(K.data[0].copy(), float(mu.data[0]))

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()

    def save(self, path) -> None:
        """Weights in the binary tensor format plus a JSON config sidecar."""
        path = Path(path)
        save_weights(path, self.state_dict())
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(self.config.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "GKPN":
        path = Path(path)
        cfg = GkpnConfig.from_dict(json.loads(path.with_suffix(path.suffix + ".json").read_text()))
        model = cls(cfg)
        model.load_state_dict(load_weights(path))
        return model


def spn_forward(model: GKPN, depth):
    return model.spn(depth)


def lapn_forward(model: GKPN, feats, goal):
    return model.lapn(feats, goal)


def gkpn_forward(model: GKPN, depth, goal) -> GkpnOutput:
    return model.predict(depth, goal)


@dataclass
class ParamReport:
    lapn_params: int
    baseline_params: int
    lapn_flops: int
    baseline_flops: int
    lapn_score_entries: int
    baseline_score_entries: int

    @property
    def lapn_smaller(self) -> bool:
        return self.lapn_params < self.baseline_params and self.lapn_flops < self.baseline_flops


def compare_params(cfg: GkpnConfig | None = None, feature_dim: int | None = None, seed: int = 0) -> ParamReport:
    """Parameter/FLOP counts of the planner with re-weighting vs dot-product attention."""
    cfg = cfg or GkpnConfig()
    M = feature_dim or cfg.feature_dim
    rng = np.random.default_rng(seed)
    kw = dict(trunk_channels=cfg.trunk_channels, fear_hidden=cfg.fear_hidden)
    lapn = AttentionPlanner(cfg.channels, M, cfg.goal_channels, cfg.n_keypoints, rng, **kw)
    base = QuadraticAttentionPlanner(cfg.channels, M, cfg.goal_channels, cfg.n_keypoints, rng, **kw)
    shapes = ((1, cfg.channels, M), (1, 3))
    return ParamReport(
        count_params(lapn), count_params(base),
        count_flops(lapn, *shapes), count_flops(base, *shapes),
        0, M * M,
    )
