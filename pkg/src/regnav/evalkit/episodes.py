"""Episode execution for learned, random and expert policies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..navmodel import NavModel
from ..world.env import EpisodeState, NavTask, SceneContext, expert_action, shaped_reward, start_episode, step
from ..world.navgraph import NUM_ACTIONS, Action, apply_action

DEFAULT_CHUNK = 25


@dataclass
class Trajectory:
    scene_id: int
    goal_class: int
    start: tuple
    optimal_length: int
    geodesic_start: int
    poses: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    collisions: list = field(default_factory=list)
    success: bool = False

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def collided(self) -> bool:
        return any(self.collisions)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    @classmethod
    def from_episode(cls, ep: EpisodeState) -> "Trajectory":
        t = ep.task
        return cls(t.scene_id, t.goal_class, tuple(t.start), t.optimal_length, t.geodesic_start,
                   [tuple(p) for p in ep.poses], list(ep.actions), list(ep.rewards), list(ep.collisions),
                   bool(ep.success))


def replay_rewards(ctx: SceneContext, task: NavTask, actions, auto_stop: bool = False) -> list[float]:
    """Recompute the shaped reward of an action sequence from geodesic lookups alone."""
    pose, out = task.start, []
    for t, a in enumerate(actions):
        before = ctx.geo(pose, task.goal_class)
        pose, collided = apply_action(ctx.scene, pose, a)
        success = (a == Action.STOP or auto_stop) and ctx.is_success_state(pose, task.goal_class)
        out.append(shaped_reward(t, success, collided, before, ctx.geo(pose, task.goal_class)))
    return out


class Policy:
    """Chooses actions for a fixed-size slot array of episodes.

    ``active`` marks live slots; inactive slots must not consume randomness.
    """

    name = "policy"

    def choose(self, episodes, active, prev_actions, rngs, forbid_stop: bool) -> np.ndarray:
        raise NotImplementedError


class ModelPolicy(Policy):
    name = "model"

    def __init__(self, model: NavModel, params: dict, mode: str = "greedy"):
        self.model, self.params, self.mode = model, params, mode

    def choose(self, episodes, active, prev_actions, rngs, forbid_stop):
        n = len(episodes)
        ref = next(ep for ep, a in zip(episodes, active) if a)
        obs = np.zeros((n,) + ref.observation.shape)
        targets = np.zeros((n,) + ref.task.target.vector.shape)
        noise = np.zeros((n, self.model.cfg.latent_dim))
        uniforms = np.zeros((n, 2))
        for i, (ep, live) in enumerate(zip(episodes, active)):
            if not live:
                continue
            obs[i] = ep.observation
            targets[i] = ep.task.target.vector
            noise[i] = rngs[i].standard_normal(self.model.cfg.latent_dim)
            if self.mode == "sample":
                uniforms[i] = rngs[i].random(2)
        return self.model.act_batch(self.params, obs, targets, prev_actions, noise, self.mode,
                                    forbid_stop=forbid_stop, uniforms=uniforms)


class RandomPolicy(Policy):
    name = "random"

    def choose(self, episodes, active, prev_actions, rngs, forbid_stop):
        out = np.full(len(episodes), int(Action.STOP))
        for i, live in enumerate(active):
            if live:
                a = int(rngs[i].integers(NUM_ACTIONS))
                if forbid_stop and a == Action.STOP:
                    a = int(rngs[i].integers(NUM_ACTIONS - 1))
                out[i] = a
        return out


class ExpertPolicy(Policy):
    name = "expert"

    def choose(self, episodes, active, prev_actions, rngs, forbid_stop):
        return np.array([int(expert_action(ep)) if live else int(Action.STOP)
                         for ep, live in zip(episodes, active)])


def run_suite(policy: Policy, tasks, contexts: dict, seed: int = 0, auto_stop: bool = False,
              max_steps: int = 100, chunk: int = DEFAULT_CHUNK) -> list[Trajectory]:
    """Run every task to completion in lockstep chunks of ``chunk`` slots.

    Episode ``i`` draws all its randomness from ``default_rng([seed, i])`` and
    always occupies the same slot of a constant-shape batch, so results do
    not depend on how long the other episodes last.
    """
    tasks = list(tasks)
    out = []
    for lo in range(0, len(tasks), chunk):
        part = tasks[lo:lo + chunk]
        eps = [start_episode(contexts[t.scene_id], t, auto_stop, max_steps) for t in part]
        rngs = [np.random.default_rng([seed, lo + j]) for j in range(len(part))]
        pad = chunk - len(part)
        slots = eps + [eps[0]] * pad
        prev = np.full(chunk, -1)
        while True:
            active = [not ep.done for ep in eps] + [False] * pad
            if not any(active):
                break
            acts = policy.choose(slots, active, prev, rngs + [None] * pad, forbid_stop=auto_stop)
            for i, ep in enumerate(eps):
                if active[i]:
                    step(ep, int(acts[i]))
                    prev[i] = int(acts[i])
        out += [Trajectory.from_episode(ep) for ep in eps]
    return out


def run_episode(policy: Policy, task: NavTask, ctx: SceneContext, seed: int = 0, auto_stop: bool = False,
                max_steps: int = 100) -> Trajectory:
    return run_suite(policy, [task], {task.scene_id: ctx}, seed, auto_stop, max_steps, chunk=1)[0]
