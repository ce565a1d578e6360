"""Synthetic voxel worlds: scenes, distance fields, depth rendering, goals."""
from .collision import DEFAULT_SAFETY_RADIUS, check_collision, nearest_obstacle_distance
from .esdf import DEFAULT_D_MAX, Esdf, build_esdf, esdf_distance, sample_esdf
from .goals import DEFAULT_AIR_RANGE, DEFAULT_BODY_HEIGHT, Goal, sample_goal
from .render import CameraModel, read_pgm, render_depth, write_pgm
from .scene import TEMPLATES, VoxelScene, generate_scene, load_scene, save_scene, scene_params

__all__ = [
    "DEFAULT_AIR_RANGE",
    "DEFAULT_BODY_HEIGHT",
    "DEFAULT_D_MAX",
    "DEFAULT_SAFETY_RADIUS",
    "TEMPLATES",
    "CameraModel",
    "Esdf",
    "Goal",
    "VoxelScene",
    "build_esdf",
    "check_collision",
    "esdf_distance",
    "generate_scene",
    "load_scene",
    "nearest_obstacle_distance",
    "read_pgm",
    "render_depth",
    "sample_esdf",
    "sample_goal",
    "save_scene",
    "scene_params",
    "write_pgm",
]
