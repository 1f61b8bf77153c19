"""Success rate, SPL, collision rate and geodesic-distance bins."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

BIN_WIDTH = 2
BIN_LIMIT = 20
LONG_PATH = 5


@dataclass
class EvalReport:
    """Suite-level metrics in percent. ``bins`` holds one dict per geodesic bin."""

    SR: float
    SPL: float
    CR: float
    N: int
    bins: list = field(default_factory=list)
    long_paths: dict = field(default_factory=dict)
    P: float | None = None
    split: str | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


def bin_edges(width: int = BIN_WIDTH, limit: int = BIN_LIMIT) -> list[tuple[int, float]]:
    """``[0, 2), [2, 4), ..., [18, 20)`` then the overflow bin ``[20, inf)``."""
    edges = [(lo, lo + width) for lo in range(0, limit, width)]
    return edges + [(limit, float("inf"))]


def spl_terms(trajectories) -> np.ndarray:
    return np.array([t.optimal_length / max(t.steps, t.optimal_length) if t.success else 0.0
                     for t in trajectories])


def _summary(trajs) -> dict:
    if not trajs:
        return {"N": 0, "SR": 0.0, "SPL": 0.0, "CR": 0.0}
    return {"N": len(trajs),
            "SR": 100.0 * float(np.mean([t.success for t in trajs])),
            "SPL": 100.0 * float(np.mean(spl_terms(trajs))),
            "CR": 100.0 * float(np.mean([t.collided for t in trajs]))}


def compute_metrics(trajectories, P: float | None = None, split: str | None = None, meta=None) -> EvalReport:
    trajs = sorted(trajectories, key=_order_key)
    if not trajs:
        raise ValueError("no trajectories to score")
    head = _summary(trajs)
    bins = []
    for lo, hi in bin_edges():
        members = [t for t in trajs if lo <= t.geodesic_start < hi]
        row = _summary(members)
        row.update(lo=lo, hi=None if hi == float("inf") else hi)
        bins.append(row)
    long_paths = _summary([t for t in trajs if t.optimal_length >= LONG_PATH])
    return EvalReport(head["SR"], head["SPL"], head["CR"], head["N"], bins, long_paths, P, split, dict(meta or {}))


def _order_key(t):
    # Canonical order makes the floating-point reductions permutation invariant.
    return (t.scene_id, t.goal_class, t.start, tuple(t.actions), t.success)
