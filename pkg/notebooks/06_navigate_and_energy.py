"""
Closed-loop navigation, modes and energy
========================================

Drive the reference straight-line planner to a land goal and to a goal in
the air, then export top-down and side-profile plots.  Pass a weights file
as the first argument to drive a trained network instead.
"""

import sys
from pathlib import Path

import numpy as np

from labnav.frames import Pose
from labnav.gkpn import GKPN
from labnav.navigator import RobotParams, energy_for_lengths, navigate, straight_line_planner
from labnav.plots import write_plots
from labnav.simenv import VoxelScene, generate_scene

out = Path("out")
out.mkdir(exist_ok=True)
planner = GKPN.load(sys.argv[1]) if len(sys.argv) > 1 else straight_line_planner()
params = RobotParams()

empty = VoxelScene(np.zeros((80, 40, 30), bool), 0.1, np.array([0.0, -2.0, 0.0]))
for name, goal in [("land", [6.0, 0.5, 0.3]), ("air", [2.0, 0.0, 1.5])]:
    ep = navigate(empty, Pose(2.0 if name == "air" else 1.0, 0.0, 0.3, 0.0), goal, planner, params)
    s = ep.summary()
    print(name, "success", s["success"], "steps", s["steps"], "land/air m",
          round(s["length_land"], 2), round(s["length_air"], 2), "energy J", round(s["energy_J"], 1))
    write_plots(ep.positions, [r["mode"] for r in ep.steps], out, name, scene=empty,
                goal=np.array(goal), h_R=params.h_R)

# the calibrated land row
e = energy_for_lengths(8.6, 0.0, params)
print("8.6 m on land:", round(e.time, 2), "s", round(e.energy, 1), "J")

# a corridor with pillars
scene = generate_scene(4, "corridor")
ep = navigate(scene, Pose(0.8, 0.0, 0.3, 0.0), [7.0, 0.0, 0.3], planner, params)
print("corridor success", ep.success, "collided", ep.collided)
