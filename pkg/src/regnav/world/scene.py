"""Procedural grid scenes and their JSON interchange format."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FREE = 0
WALL = 1


class SceneGenerationError(RuntimeError):
    """Raised when no valid scene could be produced within the retry budget."""


@dataclass(frozen=True)
class SceneSpec:
    width: int = 11
    height: int = 11
    wall_density: float = 0.15
    object_classes: int = 6
    objects_per_scene: int = 4
    cell_size_m: float = 0.5
    max_retries: int = 200

    def validate(self) -> None:
        if self.width < 5 or self.height < 5:
            raise ValueError(f"scene must be at least 5x5, got {self.width}x{self.height}")
        if not 0.0 <= self.wall_density <= 0.35:
            raise ValueError(f"wall_density must lie in [0, 0.35], got {self.wall_density}")
        if not 1 <= self.objects_per_scene <= self.object_classes:
            raise ValueError("objects_per_scene must be in 1..object_classes")


@dataclass(frozen=True, eq=False)
class Scene:
    """An immutable grid world.

    ``occupancy[y, x]`` is FREE or WALL. Objects sit on wall cells that touch
    at least one free cell, so they never change connectivity.
    """

    id: int
    width: int
    height: int
    occupancy: np.ndarray
    objects: tuple[tuple[int, tuple[int, int]], ...]
    cell_size_m: float = 0.5
    object_classes: int = 6
    _object_at: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=np.int8)
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "_object_at", {cell: cls for cls, cell in self.objects})

    def is_free(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height and self.occupancy[y, x] == FREE

    def object_at(self, x: int, y: int) -> int:
        """Object class on a cell, 0 if none."""
        return self._object_at.get((x, y), 0)

    def free_cells(self) -> list[tuple[int, int]]:
        ys, xs = np.nonzero(self.occupancy == FREE)
        return sorted(zip(xs.tolist(), ys.tolist()), key=lambda c: (c[1], c[0]))

    def object_classes_present(self) -> list[int]:
        return sorted({cls for cls, _ in self.objects})

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __hash__(self):
        return hash(self.to_json())

    # -- interchange -------------------------------------------------------
    def to_dict(self) -> dict:
        rows = ["".join("#" if v == WALL else "." for v in row) for row in self.occupancy.tolist()]
        return {
            "id": int(self.id),
            "width": int(self.width),
            "height": int(self.height),
            "cell_size_m": float(self.cell_size_m),
            "object_classes": int(self.object_classes),
            "occupancy": rows,
            "objects": [{"class": int(c), "x": int(x), "y": int(y)} for c, (x, y) in self.objects],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        rows = d["occupancy"]
        if len(rows) != d["height"] or any(len(r) != d["width"] for r in rows):
            raise ValueError("occupancy rows do not match width/height")
        occ = np.array([[WALL if ch == "#" else FREE for ch in row] for row in rows], dtype=np.int8)
        objects = tuple((int(o["class"]), (int(o["x"]), int(o["y"]))) for o in d["objects"])
        k = int(d.get("object_classes", max([c for c, _ in objects], default=1)))
        scene = cls(id=int(d["id"]), width=int(d["width"]), height=int(d["height"]),
                    occupancy=occ, objects=objects, cell_size_m=float(d.get("cell_size_m", 0.5)),
                    object_classes=k)
        check_scene(scene)
        return scene


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), sort_keys=True, indent=1) + "\n")


def load_scene(path) -> Scene:
    return Scene.from_dict(json.loads(Path(path).read_text()))


def flood_fill(occupancy: np.ndarray, start: tuple[int, int]) -> set[tuple[int, int]]:
    h, w = occupancy.shape
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and occupancy[ny, nx] == FREE and (nx, ny) not in seen:
                seen.add((nx, ny))
                queue.append((nx, ny))
    return seen


def check_scene(scene: Scene) -> None:
    """Raise ValueError if the scene breaks a structural invariant."""
    occ = scene.occupancy
    if occ.shape != (scene.height, scene.width):
        raise ValueError("occupancy shape mismatch")
    if not (occ[0].all() and occ[-1].all() and occ[:, 0].all() and occ[:, -1].all()):
        raise ValueError("border cells must be walls")
    free = scene.free_cells()
    if not free:
        raise ValueError("scene has no free cells")
    if len(flood_fill(occ, free[0])) != len(free):
        raise ValueError("free space is not connected")
    cells = [cell for _, cell in scene.objects]
    if len(set(cells)) != len(cells):
        raise ValueError("objects overlap")
    for cls, (x, y) in scene.objects:
        if not 1 <= cls <= scene.object_classes:
            raise ValueError(f"object class {cls} out of range")
        if occ[y, x] != WALL or not _touches_free(occ, x, y):
            raise ValueError(f"object at {(x, y)} is not wall-mounted")


def _touches_free(occ: np.ndarray, x: int, y: int) -> bool:
    h, w = occ.shape
    return any(0 <= x + dx < w and 0 <= y + dy < h and occ[y + dy, x + dx] == FREE
               for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)))


def generate_scene(seed: int, spec: SceneSpec = SceneSpec(), scene_id: int | None = None) -> Scene:
    """Generate a connected scene; a pure function of ``(seed, spec)``.

    Interior walls are dropped independently with probability
    ``wall_density``; free pockets cut off from the largest free region are
    walled in. Attempts that leave too little room are retried.
    """
    spec.validate()
    rng = np.random.default_rng([seed, spec.width, spec.height])
    interior = (spec.width - 2) * (spec.height - 2)
    for _ in range(spec.max_retries):
        occ = np.ones((spec.height, spec.width), dtype=np.int8)
        occ[1:-1, 1:-1] = (rng.random((spec.height - 2, spec.width - 2)) < spec.wall_density).astype(np.int8)
        free = list(zip(*np.nonzero(occ == FREE)[::-1]))
        if not free:
            continue
        remaining = set(free)
        best: set = set()
        while remaining:
            comp = flood_fill(occ, min(remaining, key=lambda c: (c[1], c[0])))
            remaining -= comp
            if len(comp) > len(best):
                best = comp
        if len(best) < max(4, interior // 2):
            continue
        for cell in free:
            if cell not in best:
                occ[cell[1], cell[0]] = WALL
        slots = [(x, y) for y in range(spec.height) for x in range(spec.width)
                 if occ[y, x] == WALL and _touches_free(occ, x, y)]
        if len(slots) < spec.objects_per_scene:
            continue
        classes = rng.choice(np.arange(1, spec.object_classes + 1), size=spec.objects_per_scene, replace=False)
        picks = rng.choice(len(slots), size=spec.objects_per_scene, replace=False)
        objects = tuple(sorted((int(c), slots[int(i)]) for c, i in zip(classes, picks)))
        scene = Scene(id=seed if scene_id is None else scene_id, width=spec.width, height=spec.height,
                      occupancy=occ, objects=objects, cell_size_m=spec.cell_size_m,
                      object_classes=spec.object_classes)
        check_scene(scene)
        return scene
    raise SceneGenerationError(
        f"could not build a connected {spec.width}x{spec.height} scene at density "
        f"{spec.wall_density} within {spec.max_retries} attempts (seed={seed})")


def scene_difficulty(scene: Scene) -> float:
    """Free area scaled up by interior clutter; used to rank scenes for curriculum staging."""
    interior = (scene.width - 2) * (scene.height - 2)
    free = int(np.sum(scene.occupancy == FREE))
    return free * (1.0 + (interior - free) / interior)


def difficulty_groups(scenes, n_groups: int = 4) -> dict[int, int]:
    """Assign scene ids to groups ``1..n_groups`` by difficulty quantile (ties broken by id)."""
    ranked = sorted(scenes, key=lambda s: (scene_difficulty(s), s.id))
    n = len(ranked)
    return {s.id: 1 + (i * n_groups) // max(n, 1) for i, s in enumerate(ranked)}


SPLIT_NAMES = ("train", "val", "test")


def generate_scene_sets(seed: int = 0, counts=(20, 5, 5), min_size: int = 9, max_size: int = 13,
                        wall_density: float = 0.15, object_classes: int = 6,
                        objects_per_scene: int = 4) -> dict[str, list[Scene]]:
    """Train/val/test scene lists with distinct ids ``0..sum(counts)-1``; sizes drawn per scene."""
    if min_size > max_size:
        raise ValueError(f"min_size {min_size} exceeds max_size {max_size}")
    rng = np.random.default_rng([seed, 424242])
    out, sid = {}, 0
    for name, n in zip(SPLIT_NAMES, counts):
        out[name] = []
        for _ in range(n):
            w, h = (int(v) for v in rng.integers(min_size, max_size + 1, size=2))
            spec = SceneSpec(w, h, wall_density, object_classes, objects_per_scene)
            out[name].append(generate_scene(seed * 100003 + sid, spec, scene_id=sid))
            sid += 1
    return out
