"""Evaluation task suites and the difficulty ratio P."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..world.env import NavTask, sample_task
from ..world.navgraph import UnreachableGoalError

SPLITS = ("train", "val", "unseen_known_targets", "unseen_novel_targets")
STRAIGHT_RATIO = (1.0, 1.1)


class SuiteError(RuntimeError):
    """Task constraints cannot be met with the given scenes."""


@dataclass
class TaskSuite:
    tasks: list
    split: str
    seed: int
    classes: tuple | None = None
    P: float = 0.0
    scene_ids: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.tasks)


def is_straight(task: NavTask, bounds=STRAIGHT_RATIO) -> bool:
    lo, hi = bounds
    return lo <= task.path_ratio <= hi + 1e-12


def difficulty_ratio(tasks) -> float:
    """Percentage of tasks whose shortest-path / Euclidean ratio lies in [1, 1.1]."""
    tasks = list(tasks)
    if not tasks:
        return 0.0
    return 100.0 * sum(is_straight(t) for t in tasks) / len(tasks)


def check_disjoint(suite_scene_ids, train_scene_ids=(), suite_classes=None, train_classes=None, split="") -> None:
    """Assert the separation an unseen or novel-target split promises."""
    if split.startswith("unseen") or split == "val":
        overlap = set(suite_scene_ids) & set(train_scene_ids)
        if overlap:
            raise SuiteError(f"{split} suite shares scenes with training: {sorted(overlap)}")
    if split == "unseen_novel_targets" and train_classes is not None:
        overlap = set(suite_classes or ()) & set(train_classes)
        if overlap:
            raise SuiteError(f"novel-target suite reuses training target classes {sorted(overlap)}")


def sample_tasks(contexts, split: str, n: int, seed: int, min_geo: int = 2, classes=None,
                 train_scene_ids=(), train_classes=None, max_attempts: int | None = None) -> TaskSuite:
    """Draw ``n`` solvable tasks, cycling over ``contexts`` (SceneContext objects) in order.

    Draw ``k`` uses the generator ``default_rng([seed, k])`` on scene
    ``k mod len(contexts)``, so suites are prefix-stable: a larger ``n``
    extends a smaller suite.
    """
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}; expected one of {SPLITS}")
    contexts = list(contexts)
    if not contexts:
        raise SuiteError("no scenes given")
    classes = None if classes is None else tuple(sorted(classes))
    check_disjoint([c.scene.id for c in contexts], train_scene_ids, classes, train_classes, split)
    max_attempts = 20 * n + 100 if max_attempts is None else max_attempts
    tasks, failures, attempt = [], 0, 0
    while len(tasks) < n:
        if attempt >= max_attempts:
            raise SuiteError(f"only {len(tasks)} of {n} tasks satisfy min_geo={min_geo}, classes={classes} "
                             f"after {attempt} attempts ({failures} failed draws over {len(contexts)} scenes)")
        ctx = contexts[attempt % len(contexts)]
        rng = np.random.default_rng([seed, attempt])
        attempt += 1
        try:
            tasks.append(sample_task(ctx, rng, classes, min_geo))
        except (UnreachableGoalError, ValueError):
            failures += 1
    scene_ids = tuple(sorted({t.scene_id for t in tasks}))
    return TaskSuite(tasks, split, seed, classes, difficulty_ratio(tasks), scene_ids)
