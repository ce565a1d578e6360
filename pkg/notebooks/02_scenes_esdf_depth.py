"""
Voxel scenes, distance fields and depth
=======================================

A wall with a gap, its Euclidean distance field, and a rendered depth image
exported as a 16-bit PGM.
"""

from pathlib import Path

import numpy as np

from labnav.frames import Pose
from labnav.simenv import CameraModel, build_esdf, check_collision, generate_scene, render_depth, write_pgm

out = Path("out")
out.mkdir(exist_ok=True)

scene = generate_scene(3, "wall-gap", {"wall_x": 3.0})
print(scene.template, scene.extents, "occupied voxels:", int(scene.occupancy.sum()))
gap = scene.params["_gap"]
print("gap:", gap)

esdf = build_esdf(scene, d_max=5.0)
probe = np.array([[1.0, 0.0, 0.3], [2.9, 0.0, 0.3]])
d, grad, _ = esdf.sample(probe)
print("distance", d.round(3), "gradient", grad.round(3))

# look at the wall from 2 m away
cam = CameraModel().at(Pose(1.0, 0.0, 0.3, 0.0))
depth = render_depth(scene, cam)
print("centre pixel range", depth[32, 32])
write_pgm(out / "depth.pgm", depth)

# the collision oracle works on whole trajectories
line = np.column_stack([np.linspace(1, 5, 50), np.zeros(50), np.full(50, 0.3)])
print("straight line collides:", check_collision(scene, line, 0.2))
