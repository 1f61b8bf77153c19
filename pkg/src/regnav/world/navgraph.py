"""Pose graph, geodesic distances and the shortest-path expert."""

from __future__ import annotations

import math
from collections import deque
from enum import IntEnum
from typing import Iterable

from .render import HEADING_VEC, HEADINGS, Pose
from .scene import Scene

UNREACHABLE = math.inf


class Action(IntEnum):
    FORWARD = 0
    BACK = 1
    LEFT = 2
    RIGHT = 3
    ROTATE_CCW = 4
    ROTATE_CW = 5
    STOP = 6


ACTIONS = tuple(Action)
NUM_ACTIONS = len(ACTIONS)
MOVE_ACTIONS = (Action.FORWARD, Action.BACK, Action.LEFT, Action.RIGHT)


class UnreachableGoalError(RuntimeError):
    pass


def move_delta(heading: int, action: Action) -> tuple[int, int]:
    hx, hy = HEADING_VEC[heading]
    if action == Action.FORWARD:
        return hx, hy
    if action == Action.BACK:
        return -hx, -hy
    if action == Action.LEFT:
        return -hy, hx
    if action == Action.RIGHT:
        return hy, -hx
    raise ValueError(f"{action!r} is not a move")


def apply_action(scene: Scene, pose: Pose, action: int) -> tuple[Pose, bool]:
    """Successor pose and whether the move was blocked.

    Moves translate without turning; stop leaves the pose unchanged.
    """
    action = Action(action)
    if action == Action.ROTATE_CCW:
        return Pose(pose.x, pose.y, (pose.heading + 90) % 360), False
    if action == Action.ROTATE_CW:
        return Pose(pose.x, pose.y, (pose.heading - 90) % 360), False
    if action == Action.STOP:
        return pose, False
    dx, dy = move_delta(pose.heading, action)
    if scene.is_free(pose.x + dx, pose.y + dy):
        return Pose(pose.x + dx, pose.y + dy, pose.heading), False
    return pose, True


class NavGraph:
    """Directed pose graph; edges are labelled by the six non-stop actions."""

    def __init__(self, scene: Scene):
        self.scene = scene
        self.edges: dict[Pose, list[tuple[Action, Pose]]] = {}
        for x, y in scene.free_cells():
            for h in HEADINGS:
                pose = Pose(x, y, h)
                out = []
                for a in ACTIONS[:-1]:
                    nxt, blocked = apply_action(scene, pose, a)
                    if not blocked:
                        out.append((a, nxt))
                self.edges[pose] = out
        self.reverse: dict[Pose, list[tuple[Action, Pose]]] = {p: [] for p in self.edges}
        for pose, out in self.edges.items():
            for a, nxt in out:
                self.reverse[nxt].append((a, pose))

    @property
    def poses(self) -> list[Pose]:
        return list(self.edges)

    def num_edges(self) -> int:
        return sum(len(v) for v in self.edges.values())

    def pose_distances(self, goal_poses: Iterable[Pose]) -> dict[Pose, int]:
        """Steps (excluding the final stop) from every pose to its nearest goal pose."""
        dist = {}
        queue = deque()
        for g in sorted(goal_poses):
            if g not in self.edges:
                raise ValueError(f"goal pose {g} is not a valid pose")
            dist[g] = 0
            queue.append(g)
        while queue:
            p = queue.popleft()
            for _, prev in self.reverse[p]:
                if prev not in dist:
                    dist[prev] = dist[p] + 1
                    queue.append(prev)
        return dist


def build_nav_graph(scene: Scene) -> NavGraph:
    return NavGraph(scene)


def geodesic_map(scene: Scene, goal_cells: Iterable[tuple[int, int]]) -> dict[tuple[int, int], int]:
    """4-connected free-space BFS distances (cells) from the nearest goal cell."""
    dist = {}
    queue = deque()
    for c in sorted(set(goal_cells)):
        dist[c] = 0
        queue.append(c)
    while queue:
        x, y = queue.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (x + dx, y + dy)
            if n not in dist and scene.is_free(*n):
                dist[n] = dist[(x, y)] + 1
                queue.append(n)
    return dist


def geodesic(scene: Scene, cell: tuple[int, int], goal_poses: Iterable[Pose]) -> float:
    """Heading-agnostic cell distance to the nearest goal pose; ``UNREACHABLE`` if none."""
    goal_cells = {(p.x, p.y) for p in goal_poses}
    if not goal_cells:
        raise ValueError("goal set is empty")
    if not scene.is_free(*cell):
        raise ValueError(f"cell {cell} is not free")
    return geodesic_map(scene, goal_cells).get(tuple(cell), UNREACHABLE)


def first_expert_action(graph: NavGraph, pose: Pose, dist: dict[Pose, int]) -> Action:
    if pose not in dist:
        raise UnreachableGoalError(f"no goal pose reachable from {pose}")
    d = dist[pose]
    if d == 0:
        return Action.STOP
    for a, nxt in graph.edges[pose]:
        if dist.get(nxt) == d - 1:
            return a
    raise AssertionError("distance table is inconsistent")


def expert_shortest_path(graph: NavGraph, start: Pose, goal_poses: Iterable[Pose],
                         dist: dict[Pose, int] | None = None) -> list[Action]:
    """Minimal action sequence ending in stop; ties go to the lowest action index."""
    if dist is None:
        dist = graph.pose_distances(goal_poses)
    path = []
    pose = start
    while True:
        a = first_expert_action(graph, pose, dist)
        path.append(a)
        if a == Action.STOP:
            return path
        pose, _ = apply_action(graph.scene, pose, a)
