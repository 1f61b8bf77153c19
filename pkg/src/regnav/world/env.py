"""Episode dynamics, shaped reward and expert supervision."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .navgraph import (Action, NavGraph, UnreachableGoalError, apply_action, expert_shortest_path,
                       first_expert_action, geodesic_map)
from .render import HEADINGS, Pose, RenderConfig, ViewTable
from .scene import Scene

STEP_PENALTY = -0.01
SUCCESS_REWARD = 10.0
COLLISION_PENALTY = -0.2


class EpisodeFinishedError(RuntimeError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    render: RenderConfig = RenderConfig()
    visibility_threshold: float = 3.0
    success_radius: int = 1
    max_steps: int = 100
    target_mode: str = "view"
    expert_mode: str = "recompute"
    auto_stop: bool = False

    def __post_init__(self):
        if self.target_mode not in ("view", "class"):
            raise ValueError(f"target_mode must be 'view' or 'class', got {self.target_mode!r}")
        if self.expert_mode not in ("recompute", "fixed"):
            raise ValueError(f"expert_mode must be 'recompute' or 'fixed', got {self.expert_mode!r}")


@dataclass(frozen=True)
class Target:
    mode: str
    vector: np.ndarray
    goal_class: int
    pose: Pose | None = None


@dataclass(frozen=True)
class GoalInfo:
    goal_class: int
    goal_poses: frozenset
    cell_dist: dict
    pose_dist: dict


@dataclass(frozen=True)
class NavTask:
    scene_id: int
    start: Pose
    goal_class: int
    goal_poses: frozenset
    target: Target
    optimal_length: int
    geodesic_start: int
    euclidean_start_goal: float
    shortest_path_m: float

    @property
    def path_ratio(self) -> float:
        if self.euclidean_start_goal <= 0:
            return 1.0
        return self.shortest_path_m / self.euclidean_start_goal


class SceneContext:
    """Precomputed, read-only lookup tables for one scene."""

    def __init__(self, scene: Scene, cfg: WorldConfig = WorldConfig()):
        self.scene = scene
        self.cfg = cfg
        self.views = ViewTable(scene, cfg.render)
        self.graph = NavGraph(scene)
        self._goals: dict[int, GoalInfo] = {}
        self._lock = threading.Lock()

    def goal(self, cls: int) -> GoalInfo:
        with self._lock:
            info = self._goals.get(cls)
            if info is None:
                poses = frozenset(p for p in self.graph.poses
                                  if self.views.sees(p, cls, self.cfg.visibility_threshold))
                if not poses:
                    raise UnreachableGoalError(f"class {cls} is not visible anywhere in scene {self.scene.id}")
                info = GoalInfo(cls, poses, geodesic_map(self.scene, {(p.x, p.y) for p in poses}),
                                self.graph.pose_distances(poses))
                self._goals[cls] = info
            return info

    def geo(self, pose: Pose, cls: int) -> float:
        return self.goal(cls).cell_dist.get((pose.x, pose.y), math.inf)

    def is_success_state(self, pose: Pose, cls: int) -> bool:
        return (self.views.sees(pose, cls)
                and self.geo(pose, cls) <= self.cfg.success_radius)

    def make_target(self, cls: int, pose: Pose | None = None) -> Target:
        k = self.scene.object_classes
        if self.cfg.target_mode == "class":
            vec = np.zeros(k)
            vec[cls - 1] = 1.0
            return Target("class", vec, cls, None)
        return Target("view", self.views.view(pose), cls, pose)

    def make_task(self, start: Pose, cls: int, target_pose: Pose) -> NavTask:
        info = self.goal(cls)
        if target_pose not in info.goal_poses:
            raise ValueError("target pose does not see the goal object")
        if start not in info.pose_dist:
            raise UnreachableGoalError(f"goal class {cls} unreachable from {start}")
        if self.is_success_state(start, cls):
            raise ValueError("start pose is already a success state")
        path = expert_shortest_path(self.graph, start, info.goal_poses, info.pose_dist)
        geo = info.cell_dist[(start.x, start.y)]
        from_start = geodesic_map(self.scene, {(start.x, start.y)})
        nearest = [c for c, d in info.cell_dist.items() if d == 0 and from_start[c] == geo]
        eucl = min(math.hypot(c[0] - start.x, c[1] - start.y) for c in nearest)
        size = self.scene.cell_size_m
        return NavTask(self.scene.id, start, cls, info.goal_poses, self.make_target(cls, target_pose),
                       len(path), int(geo), eucl * size, geo * size)


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    collided: bool
    success: bool
    done: bool
    geodesic_after: float


@dataclass
class EpisodeState:
    ctx: SceneContext
    task: NavTask
    pose: Pose
    t: int = 0
    done: bool = False
    success: bool = False
    poses: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    collisions: list = field(default_factory=list)
    fixed_path: list | None = None
    auto_stop: bool = False
    max_steps: int = 100

    @property
    def observation(self) -> np.ndarray:
        return self.ctx.views.observation(self.pose)

    @property
    def geo(self) -> float:
        return self.ctx.geo(self.pose, self.task.goal_class)


def start_episode(ctx: SceneContext, task: NavTask, auto_stop: bool | None = None,
                  max_steps: int | None = None) -> EpisodeState:
    """Fresh episode; ``auto_stop`` and ``max_steps`` default to the context's world config."""
    ep = EpisodeState(ctx, task, task.start, poses=[task.start],
                      auto_stop=ctx.cfg.auto_stop if auto_stop is None else bool(auto_stop),
                      max_steps=ctx.cfg.max_steps if max_steps is None else int(max_steps))
    if ctx.cfg.expert_mode == "fixed":
        info = ctx.goal(task.goal_class)
        ep.fixed_path = expert_shortest_path(ctx.graph, task.start, info.goal_poses, info.pose_dist)
    return ep


def shaped_reward(t: int, success: bool, collided: bool, geo_before: float, geo_after: float) -> float:
    if t == 0:
        return STEP_PENALTY
    if success:
        return SUCCESS_REWARD
    if collided:
        return COLLISION_PENALTY
    return (geo_before - geo_after) + STEP_PENALTY


def step(ep: EpisodeState, action: int) -> StepResult:
    if ep.done:
        raise EpisodeFinishedError("episode already finished")
    action = Action(action)
    ctx, cls = ep.ctx, ep.task.goal_class
    geo_before = ep.geo
    pose, collided = apply_action(ctx.scene, ep.pose, action)
    ep.pose = pose
    success = False
    if action == Action.STOP or ep.auto_stop:
        success = ctx.is_success_state(pose, cls)
    geo_after = ep.geo
    reward = shaped_reward(ep.t, success, collided, geo_before, geo_after)
    ep.t += 1
    ep.done = success or action == Action.STOP or ep.t >= ep.max_steps
    ep.success = success
    ep.poses.append(pose)
    ep.actions.append(int(action))
    ep.rewards.append(reward)
    ep.collisions.append(collided)
    return StepResult(ep.observation, reward, collided, success, ep.done, geo_after)


def expert_action(ep: EpisodeState) -> Action:
    if ep.fixed_path is not None:
        return ep.fixed_path[ep.t] if ep.t < len(ep.fixed_path) else Action.STOP
    info = ep.ctx.goal(ep.task.goal_class)
    return first_expert_action(ep.ctx.graph, ep.pose, info.pose_dist)


def expert_tuple(ep: EpisodeState) -> tuple[Action, np.ndarray]:
    """Expert action from the current pose and the observation it leads to."""
    a = expert_action(ep)
    if a == Action.STOP:
        return a, ep.observation
    nxt, _ = apply_action(ep.ctx.scene, ep.pose, a)
    return a, ep.ctx.views.observation(nxt)


def sample_start(ctx: SceneContext, cls: int, rng: np.random.Generator, min_geo: int = 2) -> Pose:
    info = ctx.goal(cls)
    cands = [Pose(x, y, h) for (x, y), d in sorted(info.cell_dist.items())
             if d >= min_geo for h in HEADINGS if not ctx.is_success_state(Pose(x, y, h), cls)]
    if not cands:
        raise UnreachableGoalError(f"no start cell with geodesic >= {min_geo} for class {cls}")
    return cands[int(rng.integers(len(cands)))]


def sample_task(ctx: SceneContext, rng: np.random.Generator, classes=None, min_geo: int = 2) -> NavTask:
    """Uniform goal class (restricted to ``classes``), start pose and target view."""
    present = [c for c in ctx.scene.object_classes_present() if classes is None or c in classes]
    if not present:
        raise UnreachableGoalError(f"scene {ctx.scene.id} has none of the classes {classes}")
    cls = present[int(rng.integers(len(present)))]
    start = sample_start(ctx, cls, rng, min_geo)
    goals = sorted(ctx.goal(cls).goal_poses)
    target_pose = goals[int(rng.integers(len(goals)))]
    return ctx.make_task(start, cls, target_pose)
