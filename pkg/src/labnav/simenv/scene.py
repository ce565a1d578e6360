"""Procedural voxel worlds and the scene file format."""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

TEMPLATES = ("corridor", "room-cluster", "wall-gap", "random-boxes")

_COMMON = {"length": 8.0, "width": 4.0, "height": 3.0, "voxel_size": 0.1}

_DEFAULTS = {
    "corridor": {"corridor_width": 3.0, "n_pillars": 2, "pillar_size": 0.4},
    "wall-gap": {
        "side_walls": True,
        "wall_x": None,
        "wall_thickness": 0.2,
        "wall_height": None,
        "gap_width": 1.4,
        "gap_height": 1.0,
        "gap_y": None,
    },
    "room-cluster": {"rooms_x": 2, "rooms_y": 2, "door_width": 1.0, "wall_thickness": 0.2},
    "random-boxes": {"density": 0.1, "min_box": 0.3, "max_box": 1.0},
}


@dataclass
class VoxelScene:
    """Boolean occupancy grid; ``occupancy[i, j, k]`` is the voxel whose
    minimum corner sits at ``origin + voxel_size * (i, j, k)``."""

    occupancy: np.ndarray
    voxel_size: float
    origin: np.ndarray
    template: str = "custom"
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        self.origin = np.asarray(self.origin, dtype=np.float64)
        if self.occupancy.ndim != 3 or min(self.occupancy.shape) < 1:
            raise ValueError(f"occupancy must be a non-empty 3-D grid, got {self.occupancy.shape}")
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")

    @property
    def extents(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.occupancy.shape)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.voxel_size * np.array(self.extents)

    @cached_property
    def occupied_centers(self) -> np.ndarray:
        idx = np.argwhere(self.occupancy)
        return self.origin + (idx + 0.5) * self.voxel_size

    def voxel_index(self, p) -> np.ndarray:
        return np.floor((np.asarray(p, dtype=np.float64) - self.origin) / self.voxel_size).astype(int)

    def in_bounds(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return np.all((idx >= 0) & (idx < np.array(self.extents)), axis=-1)

    def is_occupied(self, p) -> np.ndarray:
        """Occupancy at world points; anything outside the grid is free."""
        idx = self.voxel_index(p)
        inside = self.in_bounds(idx)
        out = np.zeros(idx.shape[:-1], dtype=bool)
        if np.any(inside):
            ii = idx[inside]
            out[inside] = self.occupancy[ii[:, 0], ii[:, 1], ii[:, 2]]
        return out

    def crop(self, center, half_extent: float) -> "VoxelScene":
        """Sub-grid of voxels within an axis-aligned box around ``center``."""
        lo = self.voxel_index(np.asarray(center) - half_extent)
        hi = self.voxel_index(np.asarray(center) + half_extent) + 1
        lo = np.clip(lo, 0, np.array(self.extents) - 1)
        hi = np.clip(hi, lo + 1, np.array(self.extents))
        occ = self.occupancy[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
        return VoxelScene(occ.copy(), self.voxel_size, self.origin + lo * self.voxel_size, self.template, self.seed)


def _grid(params) -> tuple[np.ndarray, float, np.ndarray]:
    vs = float(params["voxel_size"])
    dims = [params["length"], params["width"], params["height"]]
    if vs <= 0 or min(dims) <= 0:
        raise ValueError(f"degenerate scene extents {dims} / voxel size {vs}")
    n = [int(round(d / vs)) for d in dims]
    if min(n) < 1:
        raise ValueError(f"degenerate scene extents {dims} / voxel size {vs}")
    origin = np.array([0.0, -params["width"] / 2.0, 0.0])
    return np.zeros(n, dtype=bool), vs, origin


def _cells(value: float, vs: float) -> int:
    return int(round(value / vs))


def _corridor(occ, vs, origin, p, rng):
    nx, ny, nz = occ.shape
    half = p["corridor_width"] / 2.0
    yc = origin[1] + (np.arange(ny) + 0.5) * vs
    walls = np.abs(yc) > half
    occ[:, walls, :] = True
    free_j = np.flatnonzero(~walls)
    size = max(1, _cells(p["pillar_size"], vs))
    margin = _cells(2.0, vs)
    for _ in range(int(p["n_pillars"])):
        x0 = int(rng.integers(margin, max(margin + 1, nx - margin - size)))
        y0 = int(rng.integers(free_j[0], max(free_j[0] + 1, free_j[-1] + 2 - size)))
        occ[x0 : x0 + size, y0 : y0 + size, :] = True


def _wall_gap(occ, vs, origin, p, rng):
    nx, ny, nz = occ.shape
    if p["side_walls"]:
        occ[:, 0, :] = True
        occ[:, -1, :] = True
    thick = max(1, _cells(p["wall_thickness"], vs))
    wall_x = p["wall_x"] if p["wall_x"] is not None else rng.uniform(0.35, 0.6) * nx * vs
    x0 = _cells(wall_x, vs)
    top = nz if p["wall_height"] is None else min(nz, _cells(p["wall_height"], vs))
    gw = _cells(p["gap_width"], vs)
    gh = min(top, _cells(p["gap_height"], vs))
    inner_lo, inner_hi = (1, ny - 1) if p["side_walls"] else (0, ny)
    if p["gap_y"] is None:
        g0 = int(rng.integers(inner_lo, max(inner_lo + 1, inner_hi - gw + 1)))
    else:
        g0 = _cells(p["gap_y"] - origin[1], vs) - gw // 2
    g0 = int(np.clip(g0, 0, ny - gw))
    occ[x0 : x0 + thick, :, :top] = True
    occ[x0 : x0 + thick, g0 : g0 + gw, :gh] = False
    p["_gap"] = {"x0": x0, "thickness": thick, "y0": g0, "width": gw, "height": gh, "top": top}


def _room_cluster(occ, vs, origin, p, rng):
    nx, ny, nz = occ.shape
    t = max(1, _cells(p["wall_thickness"], vs))
    occ[:t, :, :] = occ[-t:, :, :] = True
    occ[:, :t, :] = occ[:, -t:, :] = True
    door = _cells(p["door_width"], vs)
    rx, ry = int(p["rooms_x"]), int(p["rooms_y"])
    xs = [int(round(i * nx / rx)) for i in range(1, rx)]
    ys = [int(round(j * ny / ry)) for j in range(1, ry)]
    for x in xs:
        occ[x : x + t, :, :] = True
    for y in ys:
        occ[:, y : y + t, :] = True
    # one door per wall piece between neighbouring rooms
    ybounds = [0] + ys + [ny]
    xbounds = [0] + xs + [nx]
    for x in xs:
        for j in range(ry):
            lo, hi = ybounds[j] + t, ybounds[j + 1] - door
            y0 = int(rng.integers(lo, max(lo + 1, hi)))
            occ[x : x + t, y0 : y0 + door, :] = False
    for y in ys:
        for i in range(rx):
            lo, hi = xbounds[i] + t, xbounds[i + 1] - door
            x0 = int(rng.integers(lo, max(lo + 1, hi)))
            occ[x0 : x0 + door, y : y + t, :] = False


def _random_boxes(occ, vs, origin, p, rng):
    nx, ny, nz = occ.shape
    density = float(p["density"])
    if not 0.0 <= density < 1.0:
        raise ValueError("random-boxes density must lie in [0, 1)")
    floor = np.zeros((nx, ny), dtype=bool)
    lo, hi = max(1, _cells(p["min_box"], vs)), max(1, _cells(p["max_box"], vs))
    tries = 0
    while floor.mean() < density and tries < 10_000:
        tries += 1
        sx, sy = rng.integers(lo, hi + 1, size=2)
        x0 = rng.integers(0, max(1, nx - sx + 1))
        y0 = rng.integers(0, max(1, ny - sy + 1))
        h = rng.integers(max(1, nz // 6), nz + 1)
        occ[x0 : x0 + sx, y0 : y0 + sy, :h] = True
        floor[x0 : x0 + sx, y0 : y0 + sy] = True


_BUILDERS = {
    "corridor": _corridor,
    "wall-gap": _wall_gap,
    "room-cluster": _room_cluster,
    "random-boxes": _random_boxes,
}


def scene_params(template: str, params: dict | None = None) -> dict:
    if template not in _DEFAULTS:
        raise ValueError(f"unknown template {template!r}; choose from {TEMPLATES}")
    merged = dict(_COMMON)
    merged.update(_DEFAULTS[template])
    for key, val in (params or {}).items():
        if key not in merged:
            raise ValueError(f"unknown parameter {key!r} for template {template!r}")
        merged[key] = val
    return merged


def generate_scene(seed: int, template: str, params: dict | None = None) -> VoxelScene:
    """Deterministic procedural scene for ``(seed, template, params)``."""
    p = scene_params(template, params)
    occ, vs, origin = _grid(p)
    rng = np.random.default_rng(seed)
    _BUILDERS[template](occ, vs, origin, p, rng)
    if occ.all():
        raise ValueError("scene has no free voxel")
    return VoxelScene(occ, vs, origin, template=template, seed=seed, params=p)


def save_scene(scene: VoxelScene, path) -> None:
    """JSON header plus base64 bit-packed occupancy (C order)."""
    params = {k: v for k, v in scene.params.items() if not k.startswith("_")}
    doc = {
        "extents": list(scene.extents),
        "voxel_size": scene.voxel_size,
        "origin": [float(v) for v in scene.origin],
        "template": scene.template,
        "seed": scene.seed,
        "params": params,
        "occupancy": base64.b64encode(np.packbits(scene.occupancy.ravel())).decode("ascii"),
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_scene(path) -> VoxelScene:
    doc = json.loads(Path(path).read_text())
    n = int(np.prod(doc["extents"]))
    bits = np.unpackbits(np.frombuffer(base64.b64decode(doc["occupancy"]), dtype=np.uint8))[:n]
    occ = bits.astype(bool).reshape(doc["extents"])
    return VoxelScene(occ, float(doc["voxel_size"]), np.array(doc["origin"]), doc.get("template", "custom"),
                      doc.get("seed"), doc.get("params", {}))
