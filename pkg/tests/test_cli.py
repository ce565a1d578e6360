import csv
import json
import subprocess
import sys

import pytest
import yaml

from labnav.cli import build_parser, main
from labnav.config import RunConfig
from labnav.gkpn import GKPN, GkpnConfig


@pytest.fixture(scope="module")
def weights(tmp_path_factory):
    path = tmp_path_factory.mktemp("w") / "model.bin"
    GKPN(GkpnConfig(), seed=0).save(path)
    return path


def test_config_roundtrip_and_defaults():
    cfg = RunConfig()
    assert RunConfig.parse(cfg.dump()) == cfg
    custom = RunConfig.from_dict({"seed": 3, "train": {"steps": 7, "templates": ["corridor"]}, "robot": {"eps": 0.2}})
    assert custom.train.steps == 7 and custom.robot.eps == 0.2 and custom.model == GkpnConfig()
    assert RunConfig.parse(custom.dump()) == custom


@pytest.mark.parametrize("doc", [{"bogus": 1}, {"train": {"nope": 2}}, {"model": {"C": 3}}, {"scenes": {"x": 1}}])
def test_config_rejects_unknown_keys(doc):
    with pytest.raises(ValueError):
        RunConfig.from_dict(doc)


def test_help_documents_every_flag(capsys):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, sp in sub.choices.items():
        text = sp.format_help()
        for action in sp._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)
            if action.option_strings and action.dest != "help":
                assert action.help, (name, action.dest)


def test_gen_scenes_deterministic(tmp_path):
    assert main(["gen-scenes", "--template", "corridor", "--count", "5", "--seed", "7", "--out", str(tmp_path / "a")]) == 0
    assert main(["gen-scenes", "--template", "corridor", "--count", "5", "--seed", "7", "--out", str(tmp_path / "b"),
                 "--jobs", "2"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").glob("scene_*.json"))
    assert len(files) == 5
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    echoed = RunConfig.load(tmp_path / "a" / "config.yaml")
    assert echoed.seed == 7


def test_plan_empty_scene_41_rows(tmp_path, weights):
    out = tmp_path / "plan"
    rc = main(["plan", "--scene", "empty", "--goal", "5,0,0.3", "--weights", str(weights), "--out", str(out)])
    assert rc == 0
    rows = list(csv.DictReader((out / "trajectory.csv").open()))
    assert len(rows) == 41
    assert list(rows[0]) == ["index", "x", "y", "z", "segment", "mode"]
    info = json.loads((out / "plan.json").read_text())
    assert 0.0 <= info["fear"] <= 1.0
    assert len(list(csv.DictReader((out / "keypoints.csv").open()))) == 5


def test_navigate_and_render(tmp_path):
    out = tmp_path / "nav"
    rc = main(["navigate", "--scene", "empty", "--goal", "4,0,0.3", "--straight", "--step-limit", "60",
               "--out", str(out), "--plots"])
    assert rc == 0
    lines = (out / "episode.jsonl").read_text().splitlines()
    assert json.loads(lines[-1])["success"] is True
    assert (out / "episode_top.svg").read_text().startswith("<svg")
    assert main(["render", str(out / "episode.jsonl"), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "episode_side.svg").exists()


def test_eval_byte_identical(tmp_path):
    args = ["eval", "--straight", "--trials", "2", "--seed", "4"]
    assert main(args + ["--out", str(tmp_path / "e1")]) == 0
    assert main(args + ["--out", str(tmp_path / "e2")]) == 0
    a = (tmp_path / "e1" / "eval_report.json").read_bytes()
    assert a == (tmp_path / "e2" / "eval_report.json").read_bytes()
    assert json.loads(a)["trials"] == 2


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(yaml.safe_dump({"seed": 1, "scenes": {"template": "wall-gap", "count": 2}}))
    out = tmp_path / "s"
    assert main(["gen-scenes", "--config", str(cfg), "--count", "3", "--seed", "9", "--out", str(out)]) == 0
    assert len(list(out.glob("scene_*.json"))) == 3
    echoed = yaml.safe_load((out / "config.yaml").read_text())
    assert echoed["seed"] == 9 and echoed["scenes"]["template"] == "wall-gap"


def test_exit_codes(tmp_path, weights, capsys):
    assert main([]) == 1
    with pytest.raises(SystemExit) as e:
        main(["plan", "--scene", "empty"])  # missing --goal
    assert e.value.code == 1
    assert main(["plan", "--scene", "empty", "--goal", "1,0,0.3", "--out", str(tmp_path / "x")]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("train:\n  bogus: 1\n")
    assert main(["train", "--config", str(bad)]) == 1
    # goal inside a wall -> runtime failure with a diagnostic file
    rc = main(["navigate", "--scene", "corridor:1", "--goal", "4,1.9,0.3", "--straight", "--out", str(tmp_path / "f")])
    assert rc == 2
    assert (tmp_path / "f" / "error.log").exists()
    assert "error.log" in capsys.readouterr().err


def test_train_smoke(tmp_path):
    cfg = tmp_path / "t.yaml"
    cfg.write_text(yaml.safe_dump({
        "model": {"width": 16, "height": 16, "channels": 4, "goal_channels": 4, "pool_stages": 2,
                  "trunk_channels": 4, "fear_hidden": 4},
        "train": {"n_scenes": 2, "samples_per_scene": 2, "batch_size": 2},
    }))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--steps", "3", "--out", str(out), "--no-spn"]) == 0
    log = (out / "train_log.csv").read_text().splitlines()
    assert log[0] == "step,c_obstacle,c_motion,c_goal,c_energy,fear,total" and len(log) == 4
    model = GKPN.load(out / "model.bin")
    assert model.config.spn is False


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "labnav", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "gen-scenes" in r.stdout
