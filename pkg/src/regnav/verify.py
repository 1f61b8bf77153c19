"""Finite-difference verification of the full navigation loss, per parameter group."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from .navmodel import WITH_PRIOR, Batch, ModelConfig, NavModel
from .nnet.gradcheck import STEP, GradCheckResult, grad_check, widen
from .world.navgraph import NUM_ACTIONS


@dataclass
class GroupCheck:
    variant: str
    group: str
    result: GradCheckResult

    @property
    def max_rel_error(self) -> float:
        return self.result.max_rel_error


def random_batch(cfg: ModelConfig, n: int = 6, seed: int = 0) -> tuple[Batch, np.ndarray]:
    """Synthetic batch with view-shaped inputs and mixed previous actions (including none)."""
    r = np.random.default_rng(seed)
    d = cfg.view_dim
    targets = (r.random((n, d)) if cfg.target_mode == "view"
               else np.eye(cfg.object_classes)[r.integers(cfg.object_classes, size=n)])
    batch = Batch(views=r.random((n, 4, d)), targets=targets, prev_actions=r.integers(-1, NUM_ACTIONS, size=n),
                  expert_actions=r.integers(NUM_ACTIONS, size=n), next_views=r.random((n, d)),
                  actions=r.integers(NUM_ACTIONS, size=n), returns=3.0 * r.normal(size=n))
    return batch, r.standard_normal((n, cfg.latent_dim))


def check_variant(cfg: ModelConfig, seed: int = 0, probes: int = 200, wide: bool = True, step: float = STEP,
                  fault: str | None = None, n: int = 6) -> list[GroupCheck]:
    """Check every parameter group of ``cfg``'s training loss.

    Biases are drawn away from zero so that no pre-activation sits exactly
    on a kink at the base point. ``fault`` names a parameter whose analytic
    gradient is perturbed, to show that the harness notices.
    """
    model = NavModel(cfg)
    store = model.init_params(seed)
    params = store.snapshot()
    r = np.random.default_rng(seed + 1)
    for k in params:
        if k.endswith(".b"):
            params[k] = r.normal(scale=0.1, size=params[k].shape)
    batch, noise = random_batch(cfg, n, seed)
    batch.next_states = model.encode(params, batch.next_views)
    if cfg.variant == "plain_rl":
        batch.advantages = r.normal(size=n)
    if wide:
        params = widen(params)
        batch = Batch(**widen(dataclasses.asdict(batch)))
        noise = widen(noise)

    def loss_fn(p):
        loss, grads = model.loss_and_grads(p, batch, noise)
        return loss.total, grads

    _, analytic = loss_fn(params)
    if fault is not None:
        analytic = dict(analytic)
        analytic[fault] = analytic[fault] * 1.01 + 1e-3
    out = []
    for i, (group, names) in enumerate(sorted(model.param_groups(store.names()).items())):
        res = grad_check(loss_fn, params, probes, np.random.default_rng([seed, i]), step, names, analytic)
        out.append(GroupCheck(cfg.variant, group, res))
    return out


def full_loss_check(seed: int = 0, probes: int = 200, wide: bool = True, fault: str | None = None,
                    variants=("full",), **overrides) -> tuple[list[GroupCheck], float]:
    """Run :func:`check_variant` for each variant; returns the rows and the elapsed seconds."""
    t0 = time.perf_counter()
    rows = []
    for v in variants:
        cfg = ModelConfig(variant=v, **overrides)
        if v == "random":
            continue
        rows += check_variant(cfg, seed, probes, wide, fault=fault if v == variants[0] else None)
    return rows, time.perf_counter() - t0


def prior_variants():
    return WITH_PRIOR
