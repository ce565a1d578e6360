import numpy as np
import pytest

from labnav.evaluation import EvalConfig, evaluate, make_trial
from labnav.gkpn import GKPN, GkpnConfig, GkpnOutput
from labnav.navigator import straight_line_planner
from labnav.nn import count_params
from labnav.simenv import CameraModel
from labnav.trainer import (
    LOG_COLUMNS,
    Dataset,
    NonFiniteLossError,
    TrainConfig,
    build_dataset,
    fear_gate,
    scene_seeds,
    train,
)

SMALL_MODEL = dict(width=16, height=16, channels=4, goal_channels=4, n_keypoints=3, pool_stages=2,
                   trunk_channels=4, fear_hidden=4)


def tiny_cfg(**kw):
    base = dict(n_scenes=2, samples_per_scene=4, steps=5, batch_size=4, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def tiny_data():
    cfg = tiny_cfg()
    return build_dataset(cfg, CameraModel(width=16, height=16))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(KeyError):
        TrainConfig.from_dict({"bogus": 1})
    cfg = TrainConfig()
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_scene_seeds_disjoint_from_held_out():
    train_s = set(scene_seeds(0, 100))
    held = set(scene_seeds(0, 20, 1000))
    assert len(train_s) == 100 and not train_s & held


def test_fear_gate():
    K = np.ones((5, 3))
    assert fear_gate(GkpnOutput(K, 0.49)).accepted
    d = fear_gate(GkpnOutput(K, 0.5))
    assert not d.accepted and d.stop
    d = fear_gate(GkpnOutput(K, 0.9))
    assert d.stop and d.keypoints.shape == (1, 3)
    prev = np.zeros((5, 3))
    d = fear_gate(GkpnOutput(K, 0.7), previous=prev)
    assert d.retained and not d.accepted and d.keypoints is not None
    np.testing.assert_array_equal(d.keypoints, prev)


def test_overfit_fixed_batch(tiny_data):
    cfg = tiny_cfg(steps=50, lr=1e-3)
    res = train(cfg, GkpnConfig(**SMALL_MODEL), dataset=tiny_data, fixed_batch=True)
    first, last = res.log_rows[0]["total"], res.log_rows[-1]["total"]
    assert last <= 0.8 * first


def test_determinism_and_log(tiny_data):
    a = train(tiny_cfg(), GkpnConfig(**SMALL_MODEL), dataset=tiny_data)
    b = train(tiny_cfg(), GkpnConfig(**SMALL_MODEL), dataset=tiny_data)
    assert a.model.checksum() == b.model.checksum()
    assert a.log_csv() == b.log_csv()
    header = a.log_csv().splitlines()[0]
    assert header == ",".join(LOG_COLUMNS)
    assert all(np.isfinite(r[k]) for r in a.log_rows for k in LOG_COLUMNS)


def test_ablation_param_count():
    assert count_params(GKPN(GkpnConfig(spn=False))) < count_params(GKPN(GkpnConfig()))


def test_non_finite_aborts_with_diagnostics(tiny_data):
    from dataclasses import replace

    bad_goal = np.array([np.nan, 0.0, 0.3])
    broken = Dataset(tiny_data.scenes, tiny_data.esdfs, [replace(s, goal_robot=bad_goal) for s in tiny_data.samples])
    with pytest.raises(NonFiniteLossError, match="scenes=.*theta="):
        train(tiny_cfg(), GkpnConfig(**SMALL_MODEL), dataset=broken)


def test_checkpoints(tmp_path, tiny_data):
    train(tiny_cfg(steps=4, checkpoint_every=2), GkpnConfig(**SMALL_MODEL), dataset=tiny_data,
          checkpoint_dir=tmp_path)
    names = sorted(p.name for p in tmp_path.glob("ckpt_*.bin"))
    assert names == ["ckpt_000002.bin", "ckpt_000004.bin"]
    GKPN.load(tmp_path / names[-1])


def test_dataset_roundtrip(tmp_path, tiny_data):
    tiny_data.save(tmp_path / "ds")
    back = Dataset.load(tmp_path / "ds")
    assert len(back.samples) == len(tiny_data.samples)
    np.testing.assert_array_equal(back.samples[3].depth, tiny_data.samples[3].depth)
    np.testing.assert_array_equal(back.scenes[1].occupancy, tiny_data.scenes[1].occupancy)


def test_eval_untrained_model_runs():
    cfg = GkpnConfig(**SMALL_MODEL)
    rep = evaluate(GKPN(cfg), EvalConfig(trials=2, step_limit=5), camera=CameraModel(width=16, height=16))
    assert 0.0 <= rep.goal_reached_rate <= 1.0 and rep.trials == 2
    assert rep.gate_violations == 0


def test_eval_oracle_planner_empty_scenes():
    cfg = EvalConfig(trials=4, templates=("random-boxes",), step_limit=120)
    import labnav.evaluation as ev

    orig = ev.generate_scene
    ev.generate_scene = lambda seed, template: orig(seed, "random-boxes", {"density": 0.0})
    try:
        rep = evaluate(straight_line_planner(5), cfg, camera=CameraModel(width=16, height=16))
    finally:
        ev.generate_scene = orig
    assert rep.goal_reached_rate == 1.0 and rep.collision_rate == 0.0


def test_eval_report_deterministic():
    cfg = EvalConfig(trials=2, step_limit=10)
    cam = CameraModel(width=16, height=16)
    a = evaluate(straight_line_planner(), cfg, camera=cam).to_json()
    b = evaluate(straight_line_planner(), cfg, camera=cam).to_json()
    assert a == b


def test_trials_start_and_goal_free():
    from labnav.simenv import nearest_obstacle_distance

    cfg = EvalConfig(trials=6)
    for i in range(6):
        scene, start, goal = make_trial(cfg, i, 0.3)
        assert nearest_obstacle_distance(scene, np.array([start.position, goal])).min() >= 0.2
