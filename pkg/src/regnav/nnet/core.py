"""Dense layers with hand-written backward passes.

Everything is float64 and functional: a forward pass takes a parameter
mapping (``name -> array``) and returns its output plus a cache that the
matching backward pass consumes. Gradients are accumulated into a plain dict.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

LEAKY_SLOPE = 0.1
LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0
SN_EPS = 1e-8


class ShapeError(ValueError):
    pass


_kinks = threading.local()


@contextmanager
def record_kinks():
    """Collect the branch taken by every piecewise op evaluated inside the block.

    Gradient checking uses this to spot finite-difference probes that straddle
    a LeakyReLU kink or a log-variance clamp boundary.
    """
    prev = getattr(_kinks, "log", None)
    _kinks.log = []
    try:
        yield _kinks.log
    finally:
        _kinks.log = prev


def _note_branch(mask: np.ndarray) -> None:
    log = getattr(_kinks, "log", None)
    if log is not None:
        log.append(np.packbits(mask))


@dataclass(frozen=True)
class DenseSpec:
    name: str
    n_in: int
    n_out: int
    act: str | None = "lrelu"
    spectral_norm: bool = False
    gain: float = 1.0

    def param_names(self) -> tuple[str, str]:
        return f"{self.name}.W", f"{self.name}.b"

    def buffer_names(self) -> tuple[str, ...]:
        return (f"{self.name}.u", f"{self.name}.v") if self.spectral_norm else ()


def orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    w = q if n_in >= n_out else q.T
    return gain * w[:n_in, :n_out].copy()


def init_dense(spec: DenseSpec, rng: np.random.Generator, power_iterations: int = 20) -> dict[str, np.ndarray]:
    w_name, b_name = spec.param_names()
    out = {w_name: orthogonal(rng, spec.n_in, spec.n_out, spec.gain), b_name: np.zeros(spec.n_out)}
    if spec.spectral_norm:
        u = rng.standard_normal(spec.n_in)
        out[f"{spec.name}.u"] = u / np.linalg.norm(u)
        out[f"{spec.name}.v"] = np.zeros(spec.n_out)
        power_iteration(out, spec, power_iterations)
    return out


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def power_iteration(params: dict, spec: DenseSpec, iterations: int = 1) -> float:
    """Refine the stored singular vectors of ``spec``'s weight in place; returns sigma."""
    w = params[f"{spec.name}.W"]
    u = params[f"{spec.name}.u"]
    v = params[f"{spec.name}.v"]
    for _ in range(iterations):
        v_new = w.T @ u
        nv = np.linalg.norm(v_new)
        if nv < SN_EPS:
            break
        v = v_new / nv
        u_new = w @ v
        nu = np.linalg.norm(u_new)
        if nu < SN_EPS:
            break
        u = u_new / nu
    params[f"{spec.name}.u"] = u
    params[f"{spec.name}.v"] = v
    return float(u @ w @ v)


def effective_weight(params: dict, spec: DenseSpec) -> tuple[np.ndarray, float]:
    """Weight used in the forward pass and the sigma it was divided by (None if none).

    Sigma is ``u^T W v`` with the stored vectors held fixed, so it is a linear
    function of ``W`` and the forward pass stays pure.
    """
    w = params[f"{spec.name}.W"]
    if not spec.spectral_norm:
        return w, None
    sigma = params[f"{spec.name}.u"] @ w @ params[f"{spec.name}.v"]
    if abs(sigma) < SN_EPS:
        return w, None
    return w / sigma, sigma


def spectral_normalize(params: dict, spec: DenseSpec, iterations: int = 1) -> np.ndarray:
    power_iteration(params, spec, iterations)
    return effective_weight(params, spec)[0]


def dense_forward(params: dict, spec: DenseSpec, x: np.ndarray):
    if x.ndim != 2 or x.shape[1] != spec.n_in:
        raise ShapeError(f"{spec.name}: expected (N, {spec.n_in}) input, got {x.shape}")
    w, sigma = effective_weight(params, spec)
    pre = x @ w + params[f"{spec.name}.b"]
    if spec.act == "lrelu":
        _note_branch(pre > 0)
        out = leaky_relu(pre)
    else:
        out = pre
    return out, (x, pre, w, sigma)


def dense_backward(params: dict, spec: DenseSpec, cache, dout: np.ndarray, grads: dict,
                   need_input_grad: bool = True):
    x, pre, w_eff, sigma = cache
    dpre = dout * np.where(pre > 0, 1.0, LEAKY_SLOPE) if spec.act == "lrelu" else dout
    gw = x.T @ dpre
    w_name, b_name = spec.param_names()
    if sigma is not None:
        w = params[w_name]
        u, v = params[f"{spec.name}.u"], params[f"{spec.name}.v"]
        gw = gw / sigma - (np.sum(gw * w) / sigma ** 2) * np.outer(u, v)
    _accumulate(grads, w_name, gw)
    _accumulate(grads, b_name, dpre.sum(axis=0))
    return dpre @ w_eff.T if need_input_grad else None


def _accumulate(grads: dict, name: str, g: np.ndarray) -> None:
    if name in grads:
        grads[name] = grads[name] + g
    else:
        grads[name] = g


def mlp_forward(params: dict, specs, x):
    caches = []
    for spec in specs:
        x, c = dense_forward(params, spec, x)
        caches.append(c)
    return x, caches


def mlp_backward(params: dict, specs, caches, dout, grads, need_input_grad: bool = True):
    for i in range(len(specs) - 1, -1, -1):
        dout = dense_backward(params, specs[i], caches[i], dout, grads, need_input_grad or i > 0)
    return dout


# -- distributions -----------------------------------------------------------

def split_gaussian(h: np.ndarray):
    """Split a head output into mean and clamped log-variance."""
    d = h.shape[1] // 2
    raw = h[:, d:]
    _note_branch((raw >= LOGVAR_MIN) & (raw <= LOGVAR_MAX))
    return h[:, :d], np.clip(raw, LOGVAR_MIN, LOGVAR_MAX), raw


def split_gaussian_backward(raw_logvar, dmu, dlogvar):
    inside = (raw_logvar >= LOGVAR_MIN) & (raw_logvar <= LOGVAR_MAX)
    return np.concatenate([dmu, dlogvar * inside], axis=1)


def gaussian_sample(mu: np.ndarray, logvar: np.ndarray, noise: np.ndarray) -> np.ndarray:
    if noise.shape != mu.shape:
        raise ShapeError(f"noise shape {noise.shape} does not match mean {mu.shape}")
    return mu + np.exp(0.5 * logvar) * noise


def gaussian_sample_backward(logvar, noise, dz):
    return dz, dz * noise * 0.5 * np.exp(0.5 * logvar)


def gaussian_kl(mu_q, logvar_q, mu_p, logvar_p) -> np.ndarray:
    """Closed-form KL(q || p) between diagonal Gaussians, summed over dimensions."""
    var_ratio = np.exp(logvar_q - logvar_p)
    diff2 = (mu_q - mu_p) ** 2 * np.exp(-logvar_p)
    return 0.5 * np.sum(logvar_p - logvar_q + var_ratio + diff2 - 1.0, axis=-1)


def gaussian_kl_backward(mu_q, logvar_q, mu_p, logvar_p, dkl):
    """Gradients of ``dkl * KL`` w.r.t. (mu_q, logvar_q, mu_p, logvar_p)."""
    dkl = np.asarray(dkl)[..., None]
    inv_p = np.exp(-logvar_p)
    dmu_q = dkl * (mu_q - mu_p) * inv_p
    dlv_q = dkl * 0.5 * (np.exp(logvar_q - logvar_p) - 1.0)
    dlv_p = dkl * 0.5 * (1.0 - (np.exp(logvar_q) + (mu_q - mu_p) ** 2) * inv_p)
    return dmu_q, dlv_q, -dmu_q, dlv_p


# -- categorical -------------------------------------------------------------

def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits: np.ndarray, targets) -> tuple[np.ndarray, np.ndarray]:
    """Per-row ``-log p(target)`` and its gradient ``softmax - onehot``."""
    logits = np.atleast_2d(logits)
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if np.any(targets < 0) or np.any(targets >= logits.shape[1]):
        raise ShapeError(f"target index out of range 0..{logits.shape[1] - 1}")
    lp = log_softmax(logits)
    rows = np.arange(len(targets))
    grad = np.exp(lp)
    grad[rows, targets] -= 1.0
    return -lp[rows, targets], grad


def one_hot(indices, n: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros((indices.size, n))
    out[np.arange(indices.size), indices.reshape(-1)] = 1.0
    return out
