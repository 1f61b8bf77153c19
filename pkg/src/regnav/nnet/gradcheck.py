"""Central finite-difference verification of analytic gradients.

Checks can run in ``np.longdouble`` ("wide precision"): the loss is
evaluated on extended-precision copies of the parameters, which pushes the
rounding noise of the difference quotient well below the tolerance even for
coordinates whose gradient is tiny. Probes whose ``±step`` evaluations take
a different branch of a piecewise op (LeakyReLU kink, log-variance clamp)
than the base point are redrawn, because the function is not differentiable
across them and the comparison says nothing about the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import core

STEP = 1e-4
# Denominator floor; keeps coordinates with vanishing gradients from
# dominating the relative error through rounding noise alone.
REL_FLOOR = 1e-7
WIDE = np.longdouble


@dataclass
class GradCheckResult:
    max_rel_error: float
    probes: int
    worst: tuple = ()
    errors: list = field(default_factory=list)
    redrawn: int = 0

    def passed(self, tol: float = 1e-4) -> bool:
        return self.probes > 0 and self.max_rel_error < tol


def relative_error(analytic: float, numeric: float, floor: float = REL_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def widen(tree, dtype=WIDE):
    """Copy every float array inside dicts, lists or dataclass-like objects to ``dtype``."""
    if isinstance(tree, np.ndarray):
        return tree.astype(dtype) if tree.dtype.kind == "f" else tree
    if isinstance(tree, dict):
        return {k: widen(v, dtype) for k, v in tree.items()}
    if isinstance(tree, (list, tuple)):
        return type(tree)(widen(v, dtype) for v in tree)
    return tree


def _same_branches(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(loss_fn, params: dict[str, np.ndarray], probes: int = 50, rng=None, step: float = STEP,
               names=None, analytic: dict | None = None, floor: float = REL_FLOOR,
               skip_kinks: bool = True, max_redraws: int | None = None) -> GradCheckResult:
    """Compare ``loss_fn``'s gradient with central differences on random coordinates.

    ``loss_fn(params)`` must return ``(loss, grads)`` and be deterministic.
    ``analytic`` may be passed to check a precomputed (e.g. corrupted) gradient.
    Coordinates are drawn in proportion to array size. The dtype of ``params``
    decides the working precision; see :func:`widen`.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    names = list(names) if names is not None else [k for k in params if analytic is None or k in analytic]
    with core.record_kinks() as base_branches:
        _, grads = loss_fn(params)
    base_branches = list(base_branches)
    analytic = grads if analytic is None else analytic
    sizes = np.array([params[n].size for n in names], dtype=float)
    max_redraws = 20 * probes if max_redraws is None else max_redraws
    worst, worst_err, errors, redrawn = (), 0.0, [], 0
    while len(errors) < probes and redrawn <= max_redraws:
        name = names[int(rng.choice(len(names), p=sizes / sizes.sum()))]
        idx = int(rng.integers(params[name].size))
        flat = params[name].reshape(-1)
        orig = flat[idx]
        with core.record_kinks() as br_p:
            flat[idx] = orig + step
            lp, _ = loss_fn(params)
        with core.record_kinks() as br_m:
            flat[idx] = orig - step
            lm, _ = loss_fn(params)
        flat[idx] = orig
        if skip_kinks and not (_same_branches(br_p, base_branches) and _same_branches(br_m, base_branches)):
            redrawn += 1
            continue
        numeric = float((lp - lm) / (2 * step))
        a = float(analytic.get(name, np.zeros_like(params[name])).reshape(-1)[idx])
        err = relative_error(a, numeric, floor)
        errors.append((name, idx, a, numeric, err))
        if err >= worst_err:
            worst_err, worst = err, (name, idx, a, numeric)
    return GradCheckResult(worst_err, len(errors), worst, errors, redrawn)
