"""scikit-learn style wrapper around training and acting.

``fit`` takes a list of scenes; ``predict`` and ``predict_proba`` take flat
feature rows built by :func:`encode_features` (four views, the target vector
and the previous action index).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .evalkit.episodes import ModelPolicy, run_suite
from .evalkit.metrics import EvalReport, compute_metrics
from .evalkit.suite import sample_tasks
from .navmodel import VARIANTS, ModelConfig, NavModel
from .nnet import core
from .trainer import TrainConfig, Trainer
from .world.env import SceneContext, WorldConfig, expert_action, sample_task, start_episode, step
from .world.navgraph import NUM_ACTIONS
from .world.render import RenderConfig, view_dim


def encode_features(observation, target, prev_action: int) -> np.ndarray:
    return np.concatenate([np.ravel(observation), np.ravel(target), [float(prev_action)]])


def expert_dataset(scenes, n_tasks: int = 20, seed: int = 0, target_mode: str = "view", classes=None):
    """Feature rows and expert labels along expert trajectories."""
    rows, labels = [], []
    ctxs = [SceneContext(s, WorldConfig(target_mode=target_mode)) for s in scenes]
    for i in range(n_tasks):
        rng = np.random.default_rng([seed, i])
        ctx = ctxs[i % len(ctxs)]
        ep = start_episode(ctx, sample_task(ctx, rng, classes))
        prev = -1
        while not ep.done:
            a = int(expert_action(ep))
            rows.append(encode_features(ep.observation, ep.task.target.vector, prev))
            labels.append(a)
            step(ep, a)
            prev = a
    return np.array(rows), np.array(labels)


class NavigationAgent(ClassifierMixin, BaseEstimator):
    """Goal-conditioned navigation policy trained by expert-supervised actor-critic."""

    def __init__(self, variant="full", target_mode="view", policy_z_source="prior", state_dim=64, latent_dim=32,
                 hidden=128, workers=6, unroll=10, lr=1e-4, max_episodes=2000, val_every=200, val_tasks=50,
                 curriculum=True, train_classes=(1, 2, 3, 4, 5), object_classes=6, rays=9, seed=0):
        self.variant = variant
        self.target_mode = target_mode
        self.policy_z_source = policy_z_source
        self.state_dim = state_dim
        self.latent_dim = latent_dim
        self.hidden = hidden
        self.workers = workers
        self.unroll = unroll
        self.lr = lr
        self.max_episodes = max_episodes
        self.val_every = val_every
        self.val_tasks = val_tasks
        self.curriculum = curriculum
        self.train_classes = train_classes
        self.object_classes = object_classes
        self.rays = rays
        self.seed = seed

    def _validate_params(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("state_dim", "latent_dim", "hidden", "workers", "unroll", "max_episodes", "val_every",
                     "val_tasks", "object_classes", "rays"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr!r}")

    def _model_config(self) -> ModelConfig:
        return ModelConfig(view_dim=view_dim(self.rays, self.object_classes), object_classes=self.object_classes,
                           state_dim=self.state_dim, latent_dim=self.latent_dim, hidden=self.hidden,
                           encoder_hidden=(self.hidden,), target_mode=self.target_mode, variant=self.variant,
                           policy_z_source=self.policy_z_source)

    def _world(self) -> WorldConfig:
        return WorldConfig(RenderConfig(rays=self.rays), target_mode=self.target_mode)

    def fit(self, X, y=None, val_scenes=None):
        """Train on the scenes in ``X``; without ``val_scenes`` the last fifth of ``X`` is held out."""
        self._validate_params()
        scenes = list(X)
        if val_scenes is None:
            if len(scenes) < 2:
                raise ValueError("need at least two scenes to hold one out for validation")
            k = max(1, len(scenes) // 5)
            scenes, val_scenes = scenes[:-k], scenes[-k:]
        n = self.max_episodes
        schedule = (0, n // 8, n // 4, 3 * n // 8) if self.curriculum else None
        tc = TrainConfig(workers=self.workers, unroll=self.unroll, lr=self.lr, max_episodes=n,
                         val_every=self.val_every, val_tasks=self.val_tasks, curriculum=schedule,
                         train_classes=self.train_classes, seed=self.seed)
        trainer = Trainer(self._model_config(), tc, scenes, list(val_scenes), world_cfg=self._world())
        result = trainer.train()
        self.model_ = trainer.model
        self.params_ = result.best_params
        self.val_log_ = result.val_log
        self.train_log_ = result.train_log
        self.classes_ = np.arange(NUM_ACTIONS)
        self.n_features_in_ = 4 * self.model_.cfg.view_dim + self._target_dim() + 1
        return self

    def _target_dim(self) -> int:
        return self.object_classes if self.target_mode == "class" else view_dim(self.rays, self.object_classes)

    def _split(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        d = self.model_.cfg.view_dim
        views = X[:, :4 * d].reshape(-1, 4, d)
        targets = X[:, 4 * d:-1]
        prev = X[:, -1].astype(np.int64)
        return views, targets, prev

    def decision_function(self, X) -> np.ndarray:
        """Action logits with the latent at its mean (zero noise)."""
        views, targets, prev = self._split(X)
        if self.variant == "random":
            return np.zeros((len(views), NUM_ACTIONS))
        noise = np.zeros((len(views), self.model_.cfg.latent_dim))
        return self.model_.act_forward(self.params_, views, targets, prev, noise)[0]

    def predict_proba(self, X) -> np.ndarray:
        return core.softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        return self.classes_[np.argmax(logits, axis=1)]

    def evaluate(self, scenes, n: int = 100, seed: int = 1, auto_stop: bool = False, split="unseen_known_targets",
                 mode: str = "greedy") -> EvalReport:
        check_is_fitted(self, "params_")
        ctxs = {s.id: SceneContext(s, self._world()) for s in scenes}
        suite = sample_tasks(ctxs.values(), split, n, seed, classes=self.train_classes)
        trajs = run_suite(ModelPolicy(self.model_, self.params_, mode), suite.tasks, ctxs, seed, auto_stop)
        return compute_metrics(trajs, suite.P, split)

    @classmethod
    def from_checkpoint(cls, path) -> "NavigationAgent":
        from .nnet.checkpoint import load_checkpoint

        store, meta, _ = load_checkpoint(path)
        mc = ModelConfig.from_dict(meta["model"])
        tr = meta.get("train", {})
        agent = cls(variant=mc.variant, target_mode=mc.target_mode, policy_z_source=mc.policy_z_source,
                    state_dim=mc.state_dim, latent_dim=mc.latent_dim, hidden=mc.hidden,
                    object_classes=mc.object_classes, rays=mc.view_dim // (mc.object_classes + 2),
                    seed=tr.get("seed", 0))
        agent.model_ = NavModel(mc)
        agent.params_ = store.view()
        agent.classes_ = np.arange(NUM_ACTIONS)
        agent.n_features_in_ = 4 * mc.view_dim + agent._target_dim() + 1
        return agent
