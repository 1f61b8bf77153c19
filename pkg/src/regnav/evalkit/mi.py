"""Exact conditional mutual information I(a; x' | x) and its variational lower bound.

Dynamics are tables ``T[x, a, x']`` of transition probabilities. Actions are
uniform over the ``C`` columns of ``T`` and ``x`` is weighted by ``px``
(uniform when omitted). All quantities are in bits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
ROW_TOL = 1e-9


class ContractError(ValueError):
    pass


@dataclass
class MIRow:
    instance: str
    kind: str
    states: int
    exact: float
    bound: float
    classifier: str

    @property
    def gap(self) -> float:
        return self.exact - self.bound


def _check_dynamics(T: np.ndarray) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if T.ndim != 3:
        raise ContractError(f"dynamics must have shape (X, A, X'), got {T.shape}")
    if np.any(T < 0) or not np.allclose(T.sum(axis=2), 1.0, atol=ROW_TOL, rtol=0):
        raise ContractError("dynamics rows must be non-negative and sum to 1")
    return T


def _state_weights(T, px):
    if px is None:
        return np.full(T.shape[0], 1.0 / T.shape[0])
    px = np.asarray(px, dtype=float)
    if px.shape != (T.shape[0],) or np.any(px < 0) or not np.isclose(px.sum(), 1.0):
        raise ContractError("state weights must be a distribution over x")
    return px


def _xlogy2(x, y):
    out = np.zeros(np.broadcast(x, y).shape)
    x, y = np.broadcast_arrays(x, y)
    m = x > 0
    out[m] = x[m] * np.log2(y[m])
    return out


def mi_exact(T, px=None) -> float:
    """``sum_x p(x) sum_a p(a) sum_x' T log2(T / p(x'|x))`` by full enumeration."""
    T = _check_dynamics(T)
    px = _state_weights(T, px)
    pa = 1.0 / T.shape[1]
    marg = T.mean(axis=1, keepdims=True)
    per_x = pa * _xlogy2(T, np.where(T > 0, T / np.where(marg > 0, marg, 1.0), 1.0)).sum(axis=(1, 2))
    return float(max(px @ per_x, 0.0))


def bayes_classifier(T) -> np.ndarray:
    """Posterior ``q(a | x, x')`` under uniform actions, shape ``(X, X', A)``.

    Unreachable ``(x, x')`` pairs get the uniform row.
    """
    T = _check_dynamics(T)
    joint = np.transpose(T, (0, 2, 1))
    tot = joint.sum(axis=2, keepdims=True)
    return np.where(tot > 0, joint / np.where(tot > 0, tot, 1.0), 1.0 / T.shape[1])


def fit_classifier(T, samples: int, rng: np.random.Generator, smoothing: float = 0.5, px=None) -> np.ndarray:
    """Smoothed count estimate of ``q(a | x, x')`` from ``samples`` simulated transitions."""
    T = _check_dynamics(T)
    px = _state_weights(T, px)
    nx, na, ny = T.shape
    xs = rng.choice(nx, size=samples, p=px)
    acts = rng.integers(na, size=samples)
    cdf = np.cumsum(T[xs, acts], axis=1)
    ys = np.minimum((cdf < rng.random(samples)[:, None]).sum(axis=1), ny - 1)
    counts = np.full((nx, ny, na), smoothing)
    np.add.at(counts, (xs, ys, acts), 1.0)
    return counts / counts.sum(axis=2, keepdims=True)


def mi_bound(T, q, px=None) -> float:
    """``E[log2 q(a | x, x')] + log2 C`` with ``x ~ px``, ``a ~ Cat(1/C)``, ``x' ~ T``."""
    T = _check_dynamics(T)
    px = _state_weights(T, px)
    q = np.asarray(q, dtype=float)
    nx, na, ny = T.shape
    if q.shape != (nx, ny, na):
        raise ContractError(f"classifier must have shape {(nx, ny, na)}, got {q.shape}")
    if np.any(q < 0) or not np.allclose(q.sum(axis=2), 1.0, atol=ROW_TOL, rtol=0):
        raise ContractError("classifier rows must be distributions over actions")
    qa = np.transpose(q, (0, 2, 1))
    small = (T > 0) & (qa < LOG_FLOOR)
    if np.any(small):
        log.warning("classifier assigns probability < %g to %d reachable (x, a, x') triples; flooring",
                    LOG_FLOOR, int(small.sum()))
    logq = np.log2(np.maximum(qa, LOG_FLOOR))
    expected = np.sum(px[:, None, None] * (1.0 / na) * np.where(T > 0, T * logq, 0.0))
    return float(expected + np.log2(na))


def injective_dynamics(states: int = 7, actions: int = 7) -> np.ndarray:
    """``x' = (x + a) mod X``: distinct actions always reach distinct states."""
    if states < actions:
        raise ValueError("injective dynamics need at least as many states as actions")
    T = np.zeros((states, actions, states))
    for x in range(states):
        for a in range(actions):
            T[x, a, (x + a) % states] = 1.0
    return T


def constant_dynamics(states: int = 7, actions: int = 7) -> np.ndarray:
    """Every action leads to the same successor."""
    T = np.zeros((states, actions, states))
    for x in range(states):
        T[x, :, (x + 1) % states] = 1.0
    return T


def random_dynamics(rng: np.random.Generator, states: int, actions: int = 7, concentration: float = 0.5,
                    support: int | None = None) -> np.ndarray:
    """Dirichlet rows, optionally restricted to ``support`` successors per (x, a)."""
    T = np.zeros((states, actions, states))
    for x in range(states):
        for a in range(actions):
            k = states if support is None else min(support, states)
            idx = rng.choice(states, size=k, replace=False)
            T[x, a, idx] = rng.dirichlet(np.full(k, concentration))
    return T


def merge_outcomes(T, i: int, j: int) -> np.ndarray:
    """Coarsen ``x'`` by pooling outcome ``j`` into ``i`` (a deterministic post-processing)."""
    T = np.array(T, dtype=float)
    T[:, :, i] += T[:, :, j]
    return np.delete(T, j, axis=2)


def scene_dynamics(scene) -> np.ndarray:
    """Deterministic pose-graph dynamics of a scene, with poses as tabular states."""
    from ..world.navgraph import ACTIONS, NavGraph, apply_action

    graph = NavGraph(scene)
    poses = sorted(graph.poses)
    index = {p: i for i, p in enumerate(poses)}
    T = np.zeros((len(poses), len(ACTIONS), len(poses)))
    for p in poses:
        for a in ACTIONS:
            nxt, _ = apply_action(scene, p, a)
            T[index[p], int(a), index[nxt]] = 1.0
    return T


def mi_sweep(n: int = 20, seed: int = 0, samples: int = 2000, scenes=()) -> list[MIRow]:
    """Canonical instances, ``n`` random instances and optional scene pose graphs.

    Random instances are scored with a classifier fitted from samples;
    canonical and scene instances with the Bayes-optimal one.
    """
    rows = []
    for kind, T in (("injective", injective_dynamics()), ("constant", constant_dynamics())):
        rows.append(MIRow(kind, kind, T.shape[0], mi_exact(T), mi_bound(T, bayes_classifier(T)), "bayes"))
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        states = int(rng.integers(3, 13))
        support = None if i % 2 == 0 else int(rng.integers(1, states + 1))
        T = random_dynamics(rng, states, 7, float(rng.choice([0.1, 0.5, 2.0])), support)
        q = fit_classifier(T, samples, rng)
        rows.append(MIRow(f"random_{i:03d}", "random", states, mi_exact(T), mi_bound(T, q), "fitted"))
    for s in scenes:
        T = scene_dynamics(s)
        rows.append(MIRow(f"scene_{s.id}", "scene", T.shape[0], mi_exact(T), mi_bound(T, bayes_classifier(T)),
                          "bayes"))
    return rows
