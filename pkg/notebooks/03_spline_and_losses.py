"""
Key points, splines and the training objective
==============================================

Five key points become a 41-point natural cubic spline.  Every loss term is
evaluated on it and differentiated back to the key points.
"""

import numpy as np

from labnav import autodiff as ad
from labnav.frames import Pose
from labnav.losses import LossWeights, goal_cost, total_loss
from labnav.simenv import build_esdf, generate_scene
from labnav.spline import spline_interpolate

h_R = 0.3
scene = generate_scene(1, "corridor")
esdf = build_esdf(scene)
pose = Pose(1.0, 0.0, h_R, 0.0)
goal = np.array([5.0, 0.5, h_R])  # robot frame

K = ad.Tensor(np.column_stack([np.linspace(1, 5, 5), np.linspace(0, 0.5, 5), np.full(5, h_R)]),
              requires_grad=True)
tau = spline_interpolate(K, 8, np.array([0.0, 0.0, h_R]))
print("trajectory", tau.shape)

rep = total_loss(K, tau, ad.Tensor(0.2), goal, pose, scene, esdf, LossWeights())
for name, v in rep.values().items():
    print(f"{name:>10s} {v:.4f}")
ad.backward(rep.total)
print("dL/dK\n", K.grad.round(4))

# a land goal ignores altitude: the z column of the goal gradient is zero
K2 = ad.Tensor(K.data.copy(), requires_grad=True)
ad.backward(goal_cost(K2, goal, h_R))
print("goal-only z gradient", K2.grad[:, 2])
