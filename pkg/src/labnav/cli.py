"""Command-line entry point: ``labnav <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime failure (the message names
a diagnostic file inside the run directory).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig
from .evaluation import evaluate
from .frames import Pose
from .gkpn import GKPN
from .navigator import navigate, plan_once, straight_line_planner
from .plots import read_trajectory, write_plots
from .simenv import TEMPLATES, CameraModel, generate_scene, load_scene, save_scene
from .trainer import Dataset, build_dataset, scene_seeds, train

log = logging.getLogger("labnav")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ helpers


def _triple(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected three numbers, got {text!r}") from e
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three numbers, got {text!r}")
    return np.array(vals)


def _run_dir(args, cfg: RunConfig, name: str) -> Path:
    if args.out:
        d = Path(args.out)
    else:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        d = Path(cfg.output_dir) / f"{stamp}_seed{cfg.seed}_{name}"
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.yaml").write_text(cfg.dump())
    return d


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _scene_from_arg(text: str, h_R: float):
    if text == "empty":
        return generate_scene(0, "random-boxes", {"density": 0.0})
    if ":" in text and not Path(text).exists():
        template, seed = text.split(":", 1)
        return generate_scene(int(seed), template)
    p = Path(text)
    if not p.exists():
        raise UsageError(f"scene file not found: {text}")
    return load_scene(p)


def _planner(args, cfg: RunConfig):
    if getattr(args, "weights", None):
        return GKPN.load(args.weights)
    if getattr(args, "straight", False):
        return straight_line_planner(cfg.model.n_keypoints)
    raise UsageError("give --weights PATH or --straight")


def _start_pose(args, scene, goal, h_R: float) -> Pose:
    if args.start is not None:
        x, y = float(args.start[0]), float(args.start[1])
    else:
        x, y = float(scene.origin[0]) + 1.0, float(scene.origin[1] + scene.upper[1]) / 2
    yaw = args.yaw if args.yaw is not None else float(np.arctan2(goal[1] - y, goal[0] - x))
    return Pose(x, y, h_R, yaw)


def _write_trajectory_csv(path: Path, points, m: int, n: int, modes) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y", "z", "segment", "mode"])
        for i, p in enumerate(points):
            seg = min(max(i - 1, 0) // m, n - 1)
            w.writerow([i, repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), seg, modes[seg]])


def _gen_one(job):
    seed, template, params, path = job
    save_scene(generate_scene(seed, template, params), path)
    return str(path)


# ------------------------------------------------------------- subcommands


def cmd_gen_scenes(args, cfg: RunConfig) -> Path:
    sc = cfg.scenes
    template = args.template or sc.template
    count = args.count if args.count is not None else sc.count
    if template not in TEMPLATES:
        raise UsageError(f"unknown template {template!r}; choose from {', '.join(TEMPLATES)}")
    if count < 1:
        raise UsageError("--count must be positive")
    out = _run_dir(args, cfg, "scenes")
    seeds = scene_seeds(cfg.seed, count)
    jobs = [(s, template, sc.params, out / f"scene_{i:04d}.json") for i, s in enumerate(seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            list(pool.map(_gen_one, jobs))
    else:
        for j in jobs:
            _gen_one(j)
    print(f"wrote {count} scenes to {out}")
    return out


def cmd_train(args, cfg: RunConfig) -> Path:
    t = cfg.train
    t.seed = cfg.seed
    if args.steps is not None:
        t.steps = args.steps
    if args.n_scenes is not None:
        t.n_scenes = args.n_scenes
    if args.lr is not None:
        t.lr = args.lr
    if args.no_spn:
        t.spn = cfg.model.spn = False
    if args.no_lapn:
        t.lapn = cfg.model.lapn = False
    t.__post_init__()
    cfg.model.spn, cfg.model.lapn = t.spn, t.lapn
    out = _run_dir(args, cfg, "train")
    camera = CameraModel(width=cfg.model.width, height=cfg.model.height)
    data = Dataset.load(args.dataset, t.d_max) if args.dataset else build_dataset(t, camera)
    if args.save_dataset:
        data.save(out / "dataset")
    result = train(t, cfg.model, cfg.loss, data, checkpoint_dir=out)
    (out / "train_log.csv").write_text(result.log_csv())
    result.model.save(out / "model.bin")
    (out / "train_summary.json").write_text(
        json.dumps({"final_loss": result.final_loss, "checksum": result.model.checksum()}, indent=2, sort_keys=True) + "\n"
    )
    print(f"final loss {result.final_loss:.6f}; weights at {out / 'model.bin'}")
    return out


def cmd_eval(args, cfg: RunConfig) -> Path:
    e = cfg.eval
    e.seed = cfg.seed
    if args.trials is not None:
        e.trials = args.trials
    if args.jobs is not None:
        e.jobs = args.jobs
    if args.goal_mode is not None:
        e.goal_mode = args.goal_mode
    e.__post_init__()
    planner = _planner(args, cfg)
    camera = CameraModel(width=cfg.model.width, height=cfg.model.height)
    mean_loss = None
    if args.train_log:
        with open(args.train_log, newline="") as fh:
            rows = list(csv.DictReader(fh))
        tail = rows[-max(1, len(rows) // 10):]
        mean_loss = float(np.mean([float(r["total"]) for r in tail]))
    out = _run_dir(args, cfg, "eval")
    report = evaluate(planner, e, cfg.robot, camera, mean_loss)
    (out / "eval_report.json").write_text(report.to_json())
    print(f"goal reached {report.goal_reached_rate:.2f}, collisions {report.collision_rate:.2f}, "
          f"gate violations {report.gate_violations}")
    return out


def cmd_plan(args, cfg: RunConfig) -> Path:
    if not args.weights:
        raise UsageError("plan needs --weights")
    model = GKPN.load(args.weights)
    h_R = cfg.robot.h_R
    scene = _scene_from_arg(args.scene, h_R)
    goal = args.goal
    pose = _start_pose(args, scene, goal, h_R)
    camera = CameraModel(width=model.config.width, height=model.config.height)
    res = plan_once(model.predict, scene, pose, goal, camera, cfg.robot, m=model.config.m_interp)
    out = _run_dir(args, cfg, "plan")
    n, m = model.config.n_keypoints, model.config.m_interp
    _write_trajectory_csv(out / "trajectory.csv", res.trajectory, m, n, res.modes)
    with (out / "keypoints.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y", "z"])
        for i, p in enumerate(res.keypoints):
            w.writerow([i, *(repr(float(v)) for v in p)])
    (out / "plan.json").write_text(json.dumps({
        "fear": res.fear,
        "accepted": res.accepted,
        "modes": res.modes,
        "energy_J": res.energy.energy,
        "time_s": res.energy.time,
        "length_land": res.energy.land_length,
        "length_air": res.energy.air_length,
    }, indent=2, sort_keys=True) + "\n")
    print(f"mu={res.fear:.4f} accepted={res.accepted}; {len(res.trajectory)} trajectory rows in {out}")
    return out


def cmd_navigate(args, cfg: RunConfig) -> Path:
    planner = _planner(args, cfg)
    h_R = cfg.robot.h_R
    scene = _scene_from_arg(args.scene, h_R)
    goal = args.goal
    pose = _start_pose(args, scene, goal, h_R)
    mc = planner.config if isinstance(planner, GKPN) else cfg.model
    camera = CameraModel(width=mc.width, height=mc.height)
    ep = navigate(scene, pose, goal, planner, cfg.robot, args.step_limit, camera, m=mc.m_interp)
    out = _run_dir(args, cfg, "navigate")
    (out / "episode.jsonl").write_text(ep.to_jsonl())
    (out / "summary.json").write_text(json.dumps(ep.summary(), indent=2, sort_keys=True) + "\n")
    if args.plots:
        pts = np.vstack([pose.position[None], ep.positions])
        modes = ["LAND"] + [r["mode"] for r in ep.steps]
        write_plots(pts, modes, out, "episode", scene=scene, goal=goal, h_R=h_R)
    s = ep.summary()
    print(f"success={s['success']} collided={s['collided']} steps={s['steps']} energy={s['energy_J']:.1f} J")
    return out


def cmd_render(args, cfg: RunConfig) -> Path:
    src = Path(args.input)
    if not src.exists():
        raise UsageError(f"input not found: {src}")
    pts, modes = read_trajectory(src)
    scene = load_scene(args.scene) if args.scene else None
    out = Path(args.out) if args.out else src.parent
    paths = write_plots(pts, modes, out, src.stem, scene=scene, goal=args.goal, h_R=cfg.robot.h_R)
    print("wrote " + ", ".join(str(p) for p in paths))
    return out


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="labnav", description="Land-air key-point navigation: scenes, training, evaluation, planning.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def common(sp, seed=True, out=True):
        sp.add_argument("--config", help="YAML run config; flags override its values")
        if seed:
            sp.add_argument("--seed", type=int, help="run seed (overrides config)")
        if out:
            sp.add_argument("--out", help="output directory (default: <output_dir>/<timestamp>_seed<seed>_<cmd>)")

    g = sub.add_parser("gen-scenes", help="write procedural scene files")
    common(g)
    g.add_argument("--template", help=f"scene template: {', '.join(TEMPLATES)}")
    g.add_argument("--count", type=int, help="number of scenes")
    g.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    g.set_defaults(func=cmd_gen_scenes)

    t = sub.add_parser("train", help="train the key-point network")
    common(t)
    t.add_argument("--steps", type=int, help="optimizer steps")
    t.add_argument("--n-scenes", type=int, help="training scenes")
    t.add_argument("--lr", type=float, help="learning rate")
    t.add_argument("--no-spn", action="store_true", help="drop the Sobel perception branch")
    t.add_argument("--no-lapn", action="store_true", help="drop goal-conditioned reweighting")
    t.add_argument("--dataset", help="pre-rendered dataset directory instead of generating one")
    t.add_argument("--save-dataset", action="store_true", help="also write the generated dataset")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="closed-loop evaluation on held-out scenes")
    common(e)
    e.add_argument("--weights", help="trained weights file")
    e.add_argument("--straight", action="store_true", help="use the straight-line reference planner")
    e.add_argument("--trials", type=int, help="number of trials")
    e.add_argument("--goal-mode", choices=["land", "air", "mixed"], help="goal sampling mode")
    e.add_argument("--train-log", help="training log CSV, for the mean train loss column")
    e.add_argument("--jobs", type=int, help="parallel worker processes")
    e.set_defaults(func=cmd_eval)

    for name, func, hlp in (("plan", cmd_plan, "single-shot plan"), ("navigate", cmd_navigate, "closed-loop episode")):
        s = sub.add_parser(name, help=hlp)
        common(s)
        s.add_argument("--scene", required=True, help="scene file, TEMPLATE:SEED, or 'empty'")
        s.add_argument("--goal", required=True, type=_triple, help="goal 'x,y,z' in world frame")
        s.add_argument("--start", type=_triple, help="start 'x,y,z' (z ignored; robot starts at body height)")
        s.add_argument("--yaw", type=float, help="start heading in radians (default: toward the goal)")
        s.add_argument("--weights", help="trained weights file")
        if name == "navigate":
            s.add_argument("--straight", action="store_true", help="use the straight-line reference planner")
            s.add_argument("--step-limit", type=int, default=200, help="maximum control steps")
            s.add_argument("--plots", action="store_true", help="also write SVG plots")
        s.set_defaults(func=func)

    r = sub.add_parser("render", help="SVG plots from a trajectory CSV or episode JSONL")
    common(r, seed=False)
    r.add_argument("input", help="trajectory.csv or episode.jsonl")
    r.add_argument("--scene", help="scene file for the obstacle footprint")
    r.add_argument("--goal", type=_triple, help="goal marker 'x,y,z'")
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _load_config(args)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"labnav: config error: {exc}", file=sys.stderr)
        return 1
    try:
        args.func(args, cfg)
    except UsageError as exc:
        print(f"labnav {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        diag = Path(args.out or cfg.output_dir)
        diag.mkdir(parents=True, exist_ok=True)
        path = diag / "error.log"
        path.write_text(traceback.format_exc())
        print(f"labnav {args.command}: failed: {exc} (details in {path})", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
