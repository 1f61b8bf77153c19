"""Shared parameter storage and the RMSprop update."""

from __future__ import annotations

import logging
import threading

import numpy as np

log = logging.getLogger(__name__)


class ParamStore:
    """Named float64 arrays shared between workers.

    Trainable parameters and non-trainable buffers (spectral-norm vectors)
    live side by side. Readers take :meth:`snapshot`; writers go through
    :meth:`apply_rmsprop` or :meth:`set_buffers`, which hold one lock per array,
    so a single array is never observed half-written.
    """

    def __init__(self, params: dict[str, np.ndarray], buffers: dict[str, np.ndarray] | None = None):
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        self.buffers = {k: np.array(v, dtype=np.float64) for k, v in (buffers or {}).items()}
        self.rms = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.version = 0
        self._locks = {k: threading.Lock() for k in list(self.params) + list(self.buffers)}
        self._version_lock = threading.Lock()

    def names(self) -> list[str]:
        return list(self.params)

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def snapshot(self) -> dict[str, np.ndarray]:
        """Consistent per-array copy of parameters and buffers."""
        out = {}
        for k, v in self.params.items():
            with self._locks[k]:
                out[k] = v.copy()
        for k, v in self.buffers.items():
            with self._locks[k]:
                out[k] = v.copy()
        return out

    def view(self) -> dict[str, np.ndarray]:
        """Uncopied mapping of current values; only safe when no writer runs concurrently."""
        return {**self.params, **self.buffers}

    def set_buffers(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            with self._locks[k]:
                self.buffers[k] = np.array(v, dtype=np.float64)

    def apply_rmsprop(self, grads: dict[str, np.ndarray], lr: float = 1e-4, smoothing: float = 0.99,
                      eps: float = 1e-8) -> bool:
        """One RMSprop step; returns False (and changes nothing) on non-finite gradients."""
        if set(grads) - set(self.params):
            raise KeyError(f"unknown parameters: {sorted(set(grads) - set(self.params))}")
        for k, g in grads.items():
            if g.shape != self.params[k].shape:
                raise ValueError(f"gradient shape {g.shape} does not match {k} {self.params[k].shape}")
            if not np.all(np.isfinite(g)):
                log.warning("rejected update: non-finite gradient in %s", k)
                return False
        for k, g in grads.items():
            with self._locks[k]:
                v = self.rms[k]
                v *= smoothing
                v += (1.0 - smoothing) * g * g
                self.params[k] = self.params[k] - lr * g / (np.sqrt(v) + eps)
        with self._version_lock:
            self.version += 1
        return True


def rmsprop_update(store: ParamStore, grads, lr: float = 1e-4, smoothing: float = 0.99, eps: float = 1e-8) -> bool:
    return store.apply_rmsprop(grads, lr, smoothing, eps)


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float = 40.0):
    norm = global_norm(grads)
    if norm > max_norm and np.isfinite(norm):
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm
