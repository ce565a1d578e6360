"""Key-point navigation for land-air robots on a small numpy autodiff core."""
from . import autodiff, simenv
from .config import RunConfig
from .evaluation import EvalConfig, EvalReport, evaluate
from .frames import Pose
from .gkpn import GKPN, GkpnConfig, GkpnOutput, compare_params, gkpn_forward, lapn_forward, spn_forward
from .losses import LossWeights, total_loss
from .navigator import (
    AIR,
    LAND,
    PlanResult,
    RobotParams,
    account_energy,
    assign_modes,
    navigate,
    plan_once,
    refine_segment,
    straight_line_planner,
)
from .spline import segment_trajectory, spline_interpolate
from .trainer import TrainConfig, build_dataset, fear_gate, train

__version__ = "0.1.0"

__all__ = [
    "AIR",
    "GKPN",
    "LAND",
    "EvalConfig",
    "EvalReport",
    "GkpnConfig",
    "GkpnOutput",
    "LossWeights",
    "PlanResult",
    "Pose",
    "RobotParams",
    "RunConfig",
    "TrainConfig",
    "account_energy",
    "assign_modes",
    "autodiff",
    "build_dataset",
    "compare_params",
    "evaluate",
    "fear_gate",
    "gkpn_forward",
    "lapn_forward",
    "navigate",
    "plan_once",
    "refine_segment",
    "segment_trajectory",
    "simenv",
    "spline_interpolate",
    "spn_forward",
    "total_loss",
    "train",
]
