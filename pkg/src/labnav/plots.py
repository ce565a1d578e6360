"""Minimal SVG plots of trajectories: top-down and side profile."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .simenv import VoxelScene

W, H, PAD = 480, 320, 36
MODE_COLORS = {"LAND": "#2b6cb0", "AIR": "#c05621"}


def read_trajectory(path) -> tuple[np.ndarray, list[str]]:
    """Points and mode labels from a trajectory CSV or an episode JSONL."""
    path = Path(path)
    if path.suffix == ".jsonl":
        rows = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        rows = [r for r in rows if not r.get("summary")]
        pts = np.array([[r["x"], r["y"], r["z"]] for r in rows], dtype=np.float64).reshape(-1, 3)
        return pts, [r["mode"] for r in rows]
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    pts = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows]).reshape(-1, 3)
    return pts, [r.get("mode", "LAND") for r in rows]


class _Axes:
    def __init__(self, xlim, ylim, equal=False):
        (x0, x1), (y0, y1) = xlim, ylim
        if x1 - x0 < 1e-9:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 - y0 < 1e-9:
            y0, y1 = y0 - 0.5, y1 + 0.5
        sx = (W - 2 * PAD) / (x1 - x0)
        sy = (H - 2 * PAD) / (y1 - y0)
        if equal:
            sx = sy = min(sx, sy)
        self.x0, self.y0, self.sx, self.sy = x0, y0, sx, sy

    def __call__(self, x, y):
        return PAD + (x - self.x0) * self.sx, H - PAD - (y - self.y0) * self.sy


def _polyline(ax, xs, ys, modes) -> list[str]:
    out = []
    for i in range(len(xs) - 1):
        (a, b), (c, d) = ax(xs[i], ys[i]), ax(xs[i + 1], ys[i + 1])
        color = MODE_COLORS.get(modes[i + 1] if i + 1 < len(modes) else "LAND", "#333")
        out.append(f'<line x1="{a:.2f}" y1="{b:.2f}" x2="{c:.2f}" y2="{d:.2f}" stroke="{color}" stroke-width="2"/>')
    return out


def _doc(title: str, body: list[str], xlabel: str, ylabel: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="16" text-anchor="middle" font-size="13" font-family="sans-serif">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle" font-size="11" font-family="sans-serif">{escape(xlabel)}</text>',
        f'<text x="12" y="{H / 2}" font-size="11" font-family="sans-serif" transform="rotate(-90 12 {H / 2})">{escape(ylabel)}</text>',
        f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="#999"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def top_down_svg(points, modes=None, scene: VoxelScene | None = None, goal=None, title="top-down") -> str:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    modes = list(modes or ["LAND"] * len(pts))
    if scene is not None:
        xlim, ylim = (scene.origin[0], scene.upper[0]), (scene.origin[1], scene.upper[1])
    else:
        allp = pts if goal is None else np.vstack([pts, np.asarray(goal)[None]])
        xlim, ylim = (allp[:, 0].min(), allp[:, 0].max()), (allp[:, 1].min(), allp[:, 1].max())
    ax = _Axes(xlim, ylim, equal=True)
    body = []
    if scene is not None:
        # obstacles below body height plus anything taller, projected on the floor
        foot = scene.occupancy.any(axis=2)
        vs = scene.voxel_size
        w, h = vs * ax.sx, vs * ax.sy
        for i, j in zip(*np.nonzero(foot)):
            x, y = ax(scene.origin[0] + i * vs, scene.origin[1] + (j + 1) * vs)
            body.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="#bbb"/>')
    body += _polyline(ax, pts[:, 0], pts[:, 1], modes)
    if len(pts):
        x, y = ax(pts[0, 0], pts[0, 1])
        body.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="#2f855a"/>')
    if goal is not None:
        x, y = ax(goal[0], goal[1])
        body.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="5" fill="none" stroke="#c53030" stroke-width="2"/>')
    return _doc(title, body, "x [m]", "y [m]")


def side_profile_svg(points, modes=None, h_R: float | None = None, title="side profile") -> str:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    modes = list(modes or ["LAND"] * len(pts))
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))]) if len(pts) else np.zeros(0)
    z = pts[:, 2]
    zmax = max(float(z.max()) if len(z) else 1.0, h_R or 0.0) + 0.2
    ax = _Axes((0.0, float(s[-1]) if len(s) else 1.0), (0.0, zmax))
    body = []
    if h_R is not None:
        (a, b), (c, _) = ax(ax.x0, h_R), ax(s[-1] if len(s) else 1.0, h_R)
        body.append(f'<line x1="{a:.2f}" y1="{b:.2f}" x2="{c:.2f}" y2="{b:.2f}" stroke="#999" stroke-dasharray="4 3"/>')
    body += _polyline(ax, s, z, modes)
    return _doc(title, body, "path length [m]", "z [m]")


def write_plots(points, modes, out_dir, stem: str = "trajectory", scene=None, goal=None, h_R=None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    top = out_dir / f"{stem}_top.svg"
    side = out_dir / f"{stem}_side.svg"
    top.write_text(top_down_svg(points, modes, scene, goal))
    side.write_text(side_profile_svg(points, modes, h_R))
    return [top, side]
