import math

import numpy as np
import pytest

from labnav import autodiff as ad
from labnav.frames import Pose
from labnav.losses import (
    LossWeights,
    bce,
    energy_cost,
    fear_loss,
    goal_cost,
    motion_cost,
    obstacle_cost,
    total_loss,
)
from labnav.simenv import VoxelScene, build_esdf, sample_esdf
from labnav.spline import spline_interpolate

from conftest import numeric_grad, rel_err

H_R = 0.3


def box_scene():
    occ = np.zeros((40, 20, 20), bool)
    occ[20:22, 8:12, :] = True
    return VoxelScene(occ, 0.1, np.array([0.0, -1.0, 0.0]))


def test_obstacle_hinge():
    s = box_scene()
    e = build_esdf(s)
    far = np.array([[0.5, 0.0, 0.3], [0.6, 0.0, 0.3]])
    assert obstacle_cost(far, e, 0.5).item() == 0.0
    p = np.array([[1.95, 0.05, 0.35]])  # voxel center 0.1 m in front of the box
    d, _ = sample_esdf(e, p[0])
    assert abs(d - 0.1) < 1e-12
    assert abs(obstacle_cost(p, e, 0.5).item() - 0.4) < 1e-12


def test_obstacle_gradient_points_away():
    e = build_esdf(box_scene())
    p = ad.Tensor(np.array([[1.83, 0.07, 0.42]]), requires_grad=True)
    ad.backward(obstacle_cost(p, e, 0.5))
    _, g = sample_esdf(e, p.data[0])
    assert float(p.grad[0] @ g) < 0


def test_motion_cost():
    line = np.outer(np.arange(6), [1.0, 0.5, 0.0])
    assert motion_cost(line).item() == 0.0
    assert motion_cost(np.array([[0, 0, 0], [1, 0, 0], [2, 1, 0.0]])).item() == 1.0
    assert motion_cost(np.zeros((2, 3))).item() == 0.0
    zig = np.array([[i, (-1) ** i, 0.0] for i in range(9)])
    chord = np.outer(np.linspace(0, 1, 9), zig[-1] - zig[0]) + zig[0]
    vals = [motion_cost((1 - a) * zig + a * chord).item() for a in np.linspace(0, 1, 11)]
    assert all(b < a for a, b in zip(vals, vals[1:-1])) and vals[-1] <= vals[-2]


def test_goal_cost_cases():
    assert goal_cost(np.array([[1, 2, 0.3], [3, 4, 0.3]]), [3, 4, 0.3], H_R).item() == 0.0
    assert goal_cost(np.array([[3, 4, 0.9]]), [3, 4, 0.1], H_R).item() == 0.0
    expected = math.log(1 + math.sqrt(9 + 16 + 1.7**2))
    assert abs(expected - 1.8375) < 1e-4
    assert abs(goal_cost(np.array([[0, 0, 0.3]]), [3, 4, 2.0], H_R).item() - expected) < 1e-12


def test_goal_gradient_bound():
    for d in (0.5, 2.0, 10.0):
        K = ad.Tensor(np.array([[d, 0.0, 0.3]]), requires_grad=True)
        ad.backward(goal_cost(K, [0.0, 0.0, 0.3], H_R))
        assert abs(abs(K.grad[0, 0]) - 1 / (d + 1)) < 1e-12


def test_energy_cost():
    z = np.full(10, H_R)
    pts = np.column_stack([np.arange(10.0), np.zeros(10), z])
    assert energy_cost(pts, H_R).item() == 0.0
    pts[:, 2] = H_R + 0.5
    assert abs(energy_cost(pts, H_R).item() - 0.5) < 1e-15
    pts[:5, 2] = H_R
    pts[5:, 2] = H_R + 1.0
    assert abs(energy_cost(pts, H_R).item() - 0.5) < 1e-15


def test_bce_values():
    for label in (0.0, 1.0):
        assert abs(bce(ad.Tensor(0.5), label).item() - 0.693147) <= 1e-6
    assert abs(bce(ad.Tensor(0.9), 1.0).item() - 0.105361) < 1e-6
    assert abs(bce(ad.Tensor(0.9), 0.0).item() - 2.302585) < 1e-6
    assert np.isfinite(bce(ad.Tensor(0.0), 1.0).item())
    assert np.isfinite(bce(ad.Tensor(1.0), 0.0).item())


def test_fear_label_from_oracle():
    s = box_scene()
    hit = np.array([[1.0, 0.0, 0.3], [2.05, 0.05, 0.3]])
    miss = np.array([[0.5, 0.0, 0.3], [1.0, 0.0, 0.3]])
    assert fear_loss(ad.Tensor(0.9), hit, s)[1] is True
    assert fear_loss(ad.Tensor(0.9), miss, s)[1] is False


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(alpha=-1)
    with pytest.raises(ValueError):
        LossWeights(beta=float("nan"))


def _setup(seed):
    r = np.random.default_rng(seed)
    s = box_scene()
    K = r.normal(scale=0.6, size=(5, 3)) + np.array([[0.4 * (i + 1), 0, 0.3] for i in range(5)])
    goal = np.array([3.0, r.uniform(-0.5, 0.5), r.choice([0.1, 1.5])])
    return s, build_esdf(s), K, goal


def test_total_composition():
    s, e, K, goal = _setup(0)
    pose = Pose(0.5, 0.1, 0.3, 0.2)
    tau = spline_interpolate(K, 8, [0, 0, 0.3])
    mu = ad.Tensor(0.3)
    for w in (LossWeights(), LossWeights(0, 0, 0, 0), LossWeights(1.3, 0.7, 0.2, 2.0)):
        r = total_loss(K, tau, mu, goal, pose, s, e, w)
        expect = (w.alpha * r.c_obstacle.item() + w.beta * r.c_motion.item() + w.gamma * r.c_goal.item()
                  + w.delta * r.c_energy.item() + r.fear_loss.item())
        assert abs(r.total.item() - expect) < 1e-12
        assert all(v >= 0 for v in r.values().values())
    zero = total_loss(K, tau, mu, goal, pose, s, e, LossWeights(0, 0, 0, 0))
    assert zero.total.item() == zero.fear_loss.item()


@pytest.mark.parametrize("seed", range(5))
def test_total_gradient_wrt_keypoints(seed):
    s, e, K, goal = _setup(seed)
    pose = Pose(0.4, -0.2, 0.3, 0.3)

    def loss(Kv):
        tau = spline_interpolate(Kv, 8, [0, 0, 0.3])
        return total_loss(Kv, tau, ad.Tensor(0.4), goal, pose, s, e).total

    Kt = ad.Tensor(K.copy(), requires_grad=True)
    ad.backward(loss(Kt))

    def f():
        with ad.no_grad():
            return loss(K).item()

    num = numeric_grad(f, K)
    assert rel_err(Kt.grad, num).max() <= 1e-4


def test_conditional_goal_z_gradient():
    K = ad.Tensor(np.array([[1.0, 2.0, 0.7], [2.0, 1.0, 1.3]]), requires_grad=True)
    ad.backward(goal_cost(K, [4.0, 4.0, 0.1], H_R))
    assert np.all(K.grad[:, 2] == 0.0)
    K.grad = None
    ad.backward(goal_cost(K, [4.0, 4.0, 0.3], H_R))
    assert K.grad[-1, 2] != 0.0
