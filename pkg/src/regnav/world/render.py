"""Deterministic ray-cast observations on the grid."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .scene import Scene

HEADINGS = (0, 90, 180, 270)
# y grows "up": heading 0 faces +x, 90 faces +y.
HEADING_VEC = {0: (1, 0), 90: (0, 1), 180: (-1, 0), 270: (0, -1)}
WALL_CLASS = 0


class Pose(NamedTuple):
    x: int
    y: int
    heading: int


class RenderConfig(NamedTuple):
    rays: int = 9
    d_max: float = 8.0
    fov_deg: float = 90.0


def view_dim(rays: int, object_classes: int) -> int:
    return rays * (object_classes + 2)


def ray_offsets(rays: int, fov_deg: float = 90.0) -> np.ndarray:
    """Bin-centred angular offsets in degrees; positive is counter-clockwise."""
    step = fov_deg / rays
    return -fov_deg / 2 + step * (np.arange(rays) + 0.5)


def cast_ray(scene: Scene, x: int, y: int, dx: float, dy: float, d_max: float) -> tuple[float, int]:
    """Trace one ray from the centre of cell (x, y).

    Returns ``(distance, class)`` where distance is measured between cell
    centres, in cells, and class is 0 for a wall or the object class. A hit
    farther than ``d_max`` is reported as ``(d_max, wall)``.
    """
    ox, oy = x + 0.5, y + 0.5
    cx, cy = x, y
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    if dx != 0:
        t_max_x = ((cx + 1 - ox) / dx) if dx > 0 else ((ox - cx) / -dx)
        t_dx = 1.0 / abs(dx)
    else:
        t_max_x, t_dx = math.inf, math.inf
    if dy != 0:
        t_max_y = ((cy + 1 - oy) / dy) if dy > 0 else ((oy - cy) / -dy)
        t_dy = 1.0 / abs(dy)
    else:
        t_max_y, t_dy = math.inf, math.inf
    while True:
        if t_max_x <= t_max_y:
            t_entry = t_max_x
            cx += step_x
            t_max_x += t_dx
        else:
            t_entry = t_max_y
            cy += step_y
            t_max_y += t_dy
        if t_entry > d_max + 1.0 or not (0 <= cx < scene.width and 0 <= cy < scene.height):
            return d_max, WALL_CLASS
        if not scene.is_free(cx, cy):
            dist = math.hypot(cx - x, cy - y)
            if dist > d_max:
                return d_max, WALL_CLASS
            return dist, scene.object_at(cx, cy)


def trace_view(scene: Scene, pose: Pose, cfg: RenderConfig = RenderConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Per-ray hit distances (cells) and hit classes for the view facing ``pose.heading``."""
    hx, hy = HEADING_VEC[pose.heading % 360]
    lx, ly = -hy, hx
    dists = np.empty(cfg.rays)
    classes = np.empty(cfg.rays, dtype=np.int64)
    for i, off in enumerate(np.deg2rad(ray_offsets(cfg.rays, cfg.fov_deg))):
        c, s = math.cos(off), math.sin(off)
        dists[i], classes[i] = cast_ray(scene, pose.x, pose.y, c * hx + s * lx, c * hy + s * ly, cfg.d_max)
    return dists, classes


def encode_view(dists: np.ndarray, classes: np.ndarray, object_classes: int, d_max: float) -> np.ndarray:
    rays = len(dists)
    out = np.zeros((rays, object_classes + 2))
    out[:, 0] = np.minimum(dists, d_max) / d_max
    out[np.arange(rays), 1 + classes] = 1.0
    return out.reshape(-1)


def render_view(scene: Scene, pose: Pose, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    """Flat view vector of length ``rays * (K + 2)``: per ray, depth then class one-hot."""
    dists, classes = trace_view(scene, pose, cfg)
    return encode_view(dists, classes, scene.object_classes, cfg.d_max)


def observe(scene: Scene, pose: Pose, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    """Four views (front, left, back, right) stacked as a ``(4, D)`` array."""
    return np.stack([render_view(scene, Pose(pose.x, pose.y, (pose.heading + rel) % 360), cfg)
                     for rel in HEADINGS])


def view_classes(view: np.ndarray, object_classes: int) -> set[int]:
    """Object classes (excluding walls) present in a flat view vector."""
    per_ray = view.reshape(-1, object_classes + 2)[:, 1:]
    return {int(c) for c in np.argmax(per_ray, axis=1) if c != WALL_CLASS}


class ViewTable:
    """Every (cell, heading) view of a scene, rendered once.

    Scenes are immutable so the table is safe to share between workers.
    """

    def __init__(self, scene: Scene, cfg: RenderConfig = RenderConfig()):
        self.scene = scene
        self.cfg = cfg
        self.dim = view_dim(cfg.rays, scene.object_classes)
        cells = scene.free_cells()
        self.index = {}
        n = len(cells) * 4
        self.views = np.zeros((n, self.dim))
        self.hit_dist = np.zeros((n, cfg.rays))
        self.hit_class = np.zeros((n, cfg.rays), dtype=np.int64)
        for ci, (x, y) in enumerate(cells):
            for hi, h in enumerate(HEADINGS):
                row = ci * 4 + hi
                d, c = trace_view(scene, Pose(x, y, h), cfg)
                self.hit_dist[row], self.hit_class[row] = d, c
                self.views[row] = encode_view(d, c, scene.object_classes, cfg.d_max)
                self.index[Pose(x, y, h)] = row
        self.views.setflags(write=False)

    def view(self, pose: Pose) -> np.ndarray:
        return self.views[self.index[pose]]

    def observation(self, pose: Pose) -> np.ndarray:
        rows = [self.index[Pose(pose.x, pose.y, (pose.heading + rel) % 360)] for rel in HEADINGS]
        return self.views[rows]

    def sees(self, pose: Pose, cls: int, max_dist: float = math.inf) -> bool:
        row = self.index[pose]
        hits = self.hit_class[row] == cls
        return bool(np.any(hits & (self.hit_dist[row] <= max_dist)))
