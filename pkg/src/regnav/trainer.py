"""Actor-critic training with expert supervision, curriculum staging and validation.

Two execution modes share one update rule:

* ``sync`` (default) steps all workers in lockstep with one batched forward
  pass per step. Each update consumes exactly ``unroll`` steps from every
  worker (``workers * unroll`` rows), splitting rollouts at episode ends.
  Fully deterministic for a given seed.
* ``async`` runs one thread per worker. Each thread reads a parameter
  snapshot, collects ``unroll`` steps and applies its own gradient to the
  shared store (Hogwild style, atomic per array). ``locked`` serialises
  those updates behind one lock for debugging.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .evalkit.episodes import ModelPolicy, run_suite
from .evalkit.metrics import compute_metrics
from .evalkit.suite import sample_tasks
from .navmodel import GENERATIVE, Batch, ModelConfig, NavModel, select_actions
from .nnet.checkpoint import save_checkpoint
from .nnet.params import ParamStore, clip_by_global_norm
from .world.env import SceneContext, expert_tuple, sample_task, start_episode, step
from .world.navgraph import Action
from .world.scene import difficulty_groups

log = logging.getLogger(__name__)

MODES = ("sync", "async", "locked")


class NumericalAbort(RuntimeError):
    """Too many consecutive non-finite losses."""


class InfeasibleTaskError(RuntimeError):
    """Training or validation tasks cannot be drawn from the given scenes."""


@dataclass(frozen=True)
class TrainConfig:
    workers: int = 6
    unroll: int = 10
    lr: float = 1e-4
    smoothing: float = 0.99
    rms_eps: float = 1e-8
    tau: float = 0.99
    grad_clip: float = 40.0
    max_episodes: int = 2000
    max_updates: int | None = None
    max_minutes: float | None = None  # wall-clock budget; breaks bit-reproducibility when it binds
    val_every: int = 200
    val_tasks: int = 50
    val_seed: int = 12345
    curriculum: tuple | None = (0, 500, 1000, 1500)
    train_classes: tuple | None = (1, 2, 3, 4, 5)
    min_geo: int = 2
    max_steps: int = 100
    mode: str = "sync"
    per_worker_updates: bool = False
    seed: int = 0
    max_nonfinite: int = 100
    sn_iterations: int = 1
    keep_checkpoints: bool = True

    def __post_init__(self):
        if self.workers < 1 or self.unroll < 1:
            raise ValueError("workers and unroll must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_minutes is not None and not self.max_minutes > 0:
            raise ValueError("max_minutes must be positive")
        if min(self.lr, self.tau, self.grad_clip) <= 0 or not 0 < self.smoothing < 1:
            raise ValueError("lr, tau and grad_clip must be positive and smoothing in (0, 1)")
        if self.val_every < 1 or self.val_tasks < 1:
            raise ValueError("val_every and val_tasks must be positive")
        if self.curriculum is not None:
            c = tuple(int(x) for x in self.curriculum)
            if not c or c[0] != 0 or any(b < a for a, b in zip(c, c[1:])):
                raise ValueError("curriculum must start at 0 and be non-decreasing")
            object.__setattr__(self, "curriculum", c)
        if self.train_classes is not None:
            object.__setattr__(self, "train_classes", tuple(int(c) for c in self.train_classes))

    @property
    def batch_size(self) -> int:
        return self.workers * self.unroll

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("curriculum", "train_classes"):
            d[k] = None if d[k] is None else list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for k in ("curriculum", "train_classes"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class RolloutStep:
    views: np.ndarray
    target: np.ndarray
    prev_action: int
    action: int
    reward: float
    expert_action: int | None
    expert_next_view: np.ndarray | None
    done: bool
    success: bool
    geo_before: float
    geo_after: float
    collided: bool = False


@dataclass
class Segment:
    """Consecutive steps of one episode; ``bootstrap`` is set unless the episode ended."""

    steps: list = field(default_factory=list)
    terminal: bool = False
    bootstrap: float = 0.0
    next_state: tuple | None = None


def compute_returns(rewards, bootstrap: float = 0.0, tau: float = 0.99) -> np.ndarray:
    """``R_t = sum_i tau^i r_{t+i} + tau^(T-t+1) v`` for ``t = 0..T``."""
    out = np.empty(len(rewards))
    acc = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + tau * acc
        out[t] = acc
    return out


def curriculum_stage(episodes: int, schedule) -> int:
    if schedule is None:
        return 4
    return sum(1 for s in schedule if episodes >= s)


def curriculum_advance(episodes: int, schedule, groups: dict[int, int]) -> list[int]:
    """Scene ids open at ``episodes``: stage ``k`` exposes difficulty groups ``1..k``."""
    if schedule is None:
        return sorted(groups)
    stage = curriculum_stage(episodes, schedule)
    if stage >= len(schedule):
        return sorted(groups)
    return sorted(sid for sid, g in groups.items() if g <= stage)


class Worker:
    """One environment stream with its own generator and controller memory."""

    def __init__(self, wid: int, contexts: dict, cfg: TrainConfig, needs_expert: bool, needs_next: bool):
        self.id = wid
        self.contexts = contexts
        self.cfg = cfg
        self.rng = np.random.default_rng([cfg.seed, 1000 + wid])
        self.needs_expert, self.needs_next = needs_expert, needs_next
        self.ep = None
        self.prev_action = -1
        self.episode_return = 0.0
        self.finished: list[tuple[float, bool]] = []

    def ensure_episode(self, pool: list[int]) -> None:
        if self.ep is not None and not self.ep.done:
            return
        sid = pool[int(self.rng.integers(len(pool)))]
        task = sample_task(self.contexts[sid], self.rng, self.cfg.train_classes, self.cfg.min_geo)
        self.ep = start_episode(self.contexts[sid], task, auto_stop=False, max_steps=self.cfg.max_steps)
        self.prev_action = -1
        self.episode_return = 0.0

    def inputs(self):
        return self.ep.observation, self.ep.task.target.vector, self.prev_action

    def expert(self):
        if not self.needs_expert:
            return None, None
        a, nxt = expert_tuple(self.ep)
        return int(a), (nxt[0] if self.needs_next else None)

    def advance(self, action: int, a_gt, next_view) -> RolloutStep:
        obs, target, prev = self.inputs()
        geo_before = self.ep.geo
        res = step(self.ep, action)
        self.prev_action = action
        self.episode_return += res.reward
        if res.done:
            self.finished.append((self.episode_return, res.success))
        return RolloutStep(obs, target, prev, action, res.reward, a_gt, next_view, res.done, res.success,
                           geo_before, res.geodesic_after, res.collided)


def collect_rollout(model: NavModel, params: dict, workers: list[Worker], pool: list[int], horizon: int,
                    rng: np.random.Generator) -> list[list[Segment]]:
    """Step every worker ``horizon`` times in lockstep with the stochastic policy.

    Returns, per worker, the segments it produced (a new segment starts after
    each finished episode). The batch shape is constant, so results do not
    depend on which workers are mid-episode.
    """
    n = len(workers)
    segs = [[Segment()] for _ in workers]
    dz = model.cfg.latent_dim
    for _ in range(horizon):
        for w in workers:
            w.ensure_episode(pool)
        ins = [w.inputs() for w in workers]
        noise = np.stack([w.rng.standard_normal(dz) for w in workers])
        uniforms = np.stack([w.rng.random(2) for w in workers])
        if model.cfg.variant == "random":
            acts = select_actions(np.zeros((n, 7)), "sample", uniforms)
        else:
            logits, _ = model.act_forward(params, np.stack([i[0] for i in ins]), np.stack([i[1] for i in ins]),
                                          np.array([i[2] for i in ins]), noise)
            acts = select_actions(logits, "sample", uniforms)
        for k, w in enumerate(workers):
            a_gt, nxt = w.expert()
            st = w.advance(int(acts[k]), a_gt, nxt)
            segs[k][-1].steps.append(st)
            if st.done:
                segs[k][-1].terminal = True
                segs[k].append(Segment())
    for k, w in enumerate(workers):
        if not segs[k][-1].steps:
            segs[k].pop()
        last = segs[k][-1]
        if not last.terminal:
            obs, target, prev = w.inputs()
            a_gt, _ = w.expert()
            last.next_state = (obs, target, prev, a_gt)
    _bootstrap(model, params, [s for ss in segs for s in ss if not s.terminal], rng)
    return segs


def _bootstrap(model: NavModel, params, open_segments: list[Segment], rng) -> None:
    if not open_segments or model.cfg.variant == "random":
        return
    views = np.stack([s.next_state[0] for s in open_segments])
    targets = np.stack([s.next_state[1] for s in open_segments])
    prev = np.array([s.next_state[2] for s in open_segments])
    a_gt = np.array([int(Action.STOP) if s.next_state[3] is None else s.next_state[3] for s in open_segments])
    noise = rng.standard_normal((len(open_segments), model.cfg.latent_dim))
    values = model.value_estimate(params, views, targets, prev, a_gt, noise)
    for s, v in zip(open_segments, values):
        s.bootstrap = float(v)


def make_batch(model: NavModel, segments: list[Segment], tau: float) -> Batch:
    steps = [st for s in segments for st in s.steps]
    returns = np.concatenate([compute_returns([st.reward for st in s.steps], 0.0 if s.terminal else s.bootstrap,
                                              tau) for s in segments])
    v = model.cfg.variant
    expert = v not in ("plain_rl", "random")
    return Batch(views=np.stack([st.views for st in steps]),
                 targets=np.stack([st.target for st in steps]),
                 prev_actions=np.array([st.prev_action for st in steps]),
                 expert_actions=np.array([st.expert_action for st in steps]) if expert else None,
                 next_views=(np.stack([st.expert_next_view for st in steps])
                             if v in GENERATIVE + ("nogen",) else None),
                 actions=np.array([st.action for st in steps]),
                 returns=returns)


class Trainer:
    def __init__(self, model_cfg: ModelConfig, cfg: TrainConfig, train_scenes, val_scenes, run_dir=None,
                 world_cfg=None):
        from .world.env import WorldConfig

        self.model_cfg, self.cfg = model_cfg, cfg
        self.model = NavModel(model_cfg)
        train_ids = {s.id for s in train_scenes}
        val_ids = {s.id for s in val_scenes}
        if train_ids & val_ids:
            raise ValueError(f"validation scenes overlap training scenes: {sorted(train_ids & val_ids)}")
        wc = world_cfg or WorldConfig(target_mode=model_cfg.target_mode, max_steps=cfg.max_steps)
        self.train_ctx = {s.id: SceneContext(s, wc) for s in train_scenes}
        self.val_ctx = {s.id: SceneContext(s, wc) for s in val_scenes}
        self.groups = difficulty_groups(train_scenes)
        self.store: ParamStore = self.model.init_params(cfg.seed)
        self.rng = np.random.default_rng([cfg.seed, 7])
        self.run_dir = None if run_dir is None else Path(run_dir)
        self.episodes = 0
        self.updates = 0
        self.nonfinite = 0
        self.best = None
        self.val_history: list[dict] = []
        self.train_history: list[dict] = []
        self._log_lock = threading.Lock()
        self._update_lock = threading.Lock()
        self._count_lock = threading.Lock()
        self._next_val = cfg.val_every
        self._deadline = None
        try:
            self.val_suite = sample_tasks(self.val_ctx.values(), "val", cfg.val_tasks, cfg.val_seed,
                                          cfg.min_geo, cfg.train_classes, train_scene_ids=train_ids)
        except Exception as e:
            raise InfeasibleTaskError(f"cannot build the validation suite: {e}") from e
        needs_expert = model_cfg.variant not in ("plain_rl", "random")
        needs_next = model_cfg.variant in GENERATIVE + ("nogen",)
        self.workers = [Worker(i, self.train_ctx, cfg, needs_expert, needs_next) for i in range(cfg.workers)]
        if self.run_dir is not None:
            (self.run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
            for name in ("train_log.jsonl", "val_log.jsonl"):
                (self.run_dir / name).write_text("")

    # -- bookkeeping --------------------------------------------------------
    def _append(self, name: str, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, allow_nan=True)
        if self.run_dir is not None:
            with open(self.run_dir / name, "a") as fh:
                fh.write(line + "\n")

    def pool(self) -> list[int]:
        return curriculum_advance(self.episodes, self.cfg.curriculum, self.groups)

    # -- one gradient step --------------------------------------------------
    def update(self, segments: list[Segment], finished) -> dict:
        """Compute, clip and apply one gradient step; non-finite losses are skipped and logged."""
        record = {"update": self.updates + 1, "episodes": self.episodes,
                  "steps": sum(len(s.steps) for s in segments)}
        if finished:
            record["episode_return"] = float(np.mean([r for r, _ in finished]))
            record["episode_success"] = float(np.mean([s for _, s in finished]))
        if self.model_cfg.variant == "random":
            record.update(skipped=True, reason="no parameters")
            self.updates += 1
            return record
        params = self.store.snapshot()
        batch = make_batch(self.model, segments, self.cfg.tau)
        noise = self.rng.standard_normal((len(batch), self.model_cfg.latent_dim))
        record["mean_return"] = float(np.mean(batch.returns))
        with np.errstate(all="ignore"):
            loss, grads = self.model.loss_and_grads(params, batch, noise)
        record["losses"] = loss.terms()
        ok = bool(np.isfinite(loss.total))
        if ok:
            grads, norm = clip_by_global_norm(grads, self.cfg.grad_clip)
            record["grad_norm"] = norm
            ok = np.isfinite(norm) and self.store.apply_rmsprop(grads, self.cfg.lr, self.cfg.smoothing,
                                                                self.cfg.rms_eps)
        if ok:
            self.nonfinite = 0
            self.model.refresh_spectral_norm(self.store, self.cfg.sn_iterations)
        else:
            self.nonfinite += 1
            log.warning("update %d skipped: non-finite loss or gradient (%d in a row)",
                        self.updates + 1, self.nonfinite)
            if self.nonfinite > self.cfg.max_nonfinite:
                raise NumericalAbort(f"{self.nonfinite} consecutive non-finite updates at update "
                                     f"{self.updates + 1}; last losses {record['losses']}")
        record["skipped"] = not ok
        with self._count_lock:
            self.updates += 1
        return record

    # -- validation ---------------------------------------------------------
    def validate(self) -> dict:
        params = self.store.snapshot()
        trajs = run_suite(ModelPolicy(self.model, params, "greedy"), self.val_suite.tasks, self.val_ctx,
                          seed=self.cfg.val_seed, max_steps=self.cfg.max_steps)
        rep = compute_metrics(trajs)
        rec = {"episodes": self.episodes, "updates": self.updates, "SR": rep.SR, "SPL": rep.SPL, "CR": rep.CR}
        key = (rep.SR, rep.SPL)
        improved = self.best is None or key >= self.best[0]
        rec["best"] = improved
        if improved:
            self.best = (key, self.episodes, params)
        self.val_history.append(rec)
        self._append("val_log.jsonl", rec)
        log.info("episode %d update %d: validation SR %.1f%% SPL %.1f%% CR %.1f%%", self.episodes, self.updates,
                 rep.SR, rep.SPL, rep.CR)
        if self.run_dir is not None:
            meta = self.checkpoint_meta(rec)
            if self.cfg.keep_checkpoints:
                save_checkpoint(self.run_dir / "checkpoints" / f"ckpt_{self.episodes:07d}.ckpt", self.store, meta)
            if improved:
                save_checkpoint(self.run_dir / "checkpoints" / "best.ckpt", self.store, meta)
        return rec

    def checkpoint_meta(self, val=None) -> dict:
        return {"model": self.model_cfg.to_dict(), "train": self.cfg.to_dict(), "episodes": self.episodes,
                "updates": self.updates, "validation": val}

    def _after_update(self, record: dict) -> None:
        with self._log_lock:
            self.train_history.append(record)
            self._append("train_log.jsonl", record)
            while self.episodes >= self._next_val:
                self._next_val += self.cfg.val_every
                self.validate()

    def _done(self) -> bool:
        if self.cfg.max_updates is not None and self.updates >= self.cfg.max_updates:
            return True
        if self._deadline is not None and time.perf_counter() >= self._deadline:
            return True
        return self.episodes >= self.cfg.max_episodes

    # -- drivers ------------------------------------------------------------
    def train(self) -> "TrainResult":
        t0 = time.perf_counter()
        if self.cfg.max_minutes is not None:
            self._deadline = t0 + 60.0 * self.cfg.max_minutes
        if self.cfg.mode == "sync":
            self._train_sync()
        else:
            self._train_async()
        if not self.val_history or self.val_history[-1]["episodes"] != self.episodes:
            self.validate()
        return TrainResult(self.best[2] if self.best else self.store.snapshot(), self.store, self.val_history,
                           self.train_history, self.episodes, self.updates, time.perf_counter() - t0)

    def _train_sync(self) -> None:
        while not self._done():
            params = self.store.view()
            segs = collect_rollout(self.model, params, self.workers, self.pool(), self.cfg.unroll, self.rng)
            per_worker = [w.finished for w in self.workers]
            for w in self.workers:
                w.finished = []
            finished = [f for fs in per_worker for f in fs]
            self.episodes += len(finished)
            if self.cfg.per_worker_updates:
                for ws, fs in zip(segs, per_worker):
                    self._after_update(self.update(ws, fs))
            else:
                self._after_update(self.update([s for ws in segs for s in ws], finished))

    def _train_async(self) -> None:
        errors: list[BaseException] = []

        def run(w: Worker):
            rng = np.random.default_rng([self.cfg.seed, 2000 + w.id])
            try:
                while not errors and not self._done():
                    params = self.store.snapshot()
                    segs = collect_rollout(self.model, params, [w], self.pool(), self.cfg.unroll, rng)[0]
                    finished, w.finished = w.finished, []
                    with self._count_lock:
                        self.episodes += len(finished)
                    if self.cfg.mode == "locked":
                        with self._update_lock:
                            rec = self.update(segs, finished)
                    else:
                        rec = self.update(segs, finished)
                    self._after_update(rec)
            except BaseException as e:  # surfaced in the coordinating thread
                errors.append(e)

        threads = [threading.Thread(target=run, args=(w,), name=f"worker-{w.id}") for w in self.workers]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]


@dataclass
class TrainResult:
    best_params: dict
    store: ParamStore
    val_log: list
    train_log: list
    episodes: int
    updates: int
    seconds: float

    @property
    def best_sr(self) -> float:
        return max((r["SR"] for r in self.val_log), default=0.0)


def train(model_cfg: ModelConfig, cfg: TrainConfig, train_scenes, val_scenes, run_dir=None) -> TrainResult:
    return Trainer(model_cfg, cfg, train_scenes, val_scenes, run_dir).train()
