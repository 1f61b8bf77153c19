"""Goal-conditioned navigation network with a generative next-state module.

The network encodes every view with one shared encoder ``f``. During
training a prior ``p(z | f(front), a_gt)`` generates the next state through
a deterministic decoder, the policy acts on (current state, generated next
state, previous action), and a goal-conditioned posterior ``q(z | f(views),
f(goal))`` is pulled onto the prior by a KL term. At test time the
posterior replaces the prior, so no expert information is needed.

Variants
--------
full        cross-entropy + reconstruction + KL + value loss
noval       as ``full`` with the value weight forced to zero
froview     posterior sees the front view only
nogen       next state predicted deterministically from views and goal; no latent
vanillagen  latent drawn from the posterior and regularised towards N(0, I)
bc          policy reads views, goal and previous action directly; cross-entropy only
plain_rl    ``bc`` architecture trained by advantage actor-critic, no expert terms
random      uniform random actions; no parameters
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .nnet import core
from .nnet.core import DenseSpec
from .nnet.params import ParamStore
from .world.navgraph import NUM_ACTIONS, Action

VARIANTS = ("full", "noval", "froview", "nogen", "vanillagen", "bc", "plain_rl", "random")
GENERATIVE = ("full", "noval", "froview", "vanillagen")
WITH_PRIOR = ("full", "noval", "froview")
DIRECT = ("bc", "plain_rl")


@dataclass(frozen=True)
class ModelConfig:
    view_dim: int = 72
    object_classes: int = 6
    state_dim: int = 64
    latent_dim: int = 32
    hidden: int = 128
    encoder_hidden: tuple = (128,)
    spectral_norm: bool = True
    target_mode: str = "view"
    variant: str = "full"
    policy_z_source: str = "prior"
    alpha: float = 1.0
    beta: float = 0.01
    gamma: float = 0.0001
    omega: float = 0.5
    e2_squared: bool = False
    entropy_coef: float = 0.01

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.target_mode not in ("view", "class"):
            raise ValueError(f"unknown target_mode {self.target_mode!r}")
        if self.policy_z_source not in ("prior", "posterior"):
            raise ValueError(f"unknown policy_z_source {self.policy_z_source!r}")
        if min(self.alpha, self.beta, self.gamma, self.omega) < 0:
            raise ValueError("loss weights must be non-negative")
        object.__setattr__(self, "encoder_hidden", tuple(self.encoder_hidden))

    @property
    def value_weight(self) -> float:
        return 0.0 if self.variant == "noval" else self.omega

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_hidden"] = list(self.encoder_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{**d, "encoder_hidden": tuple(d.get("encoder_hidden", (128,)))})


@dataclass
class LossBreakdown:
    """Mean per-step loss terms; ``None`` marks a term the variant does not use.

    Values are numpy scalars in the precision of the forward pass.
    """

    E1: float | None
    E2: float | None
    E3: float | None
    L_v: float
    total: float
    alpha: float
    beta: float
    gamma: float
    omega: float
    policy_gradient: float | None = None
    entropy: float | None = None

    def terms(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()
                if v is not None and k not in ("alpha", "beta", "gamma", "omega")}


@dataclass
class Batch:
    """Stacked training or acting inputs.

    ``views`` is ``(N, 4, D)``; ``targets`` is ``(N, D)`` views or ``(N, K)``
    one-hots; ``prev_actions`` uses -1 for "no previous action".
    ``next_states`` optionally fixes the reconstruction target ``f(x_gt)``
    and ``advantages`` the actor-critic advantage; both are constants of
    the loss, so freezing them keeps finite differences comparable.
    """

    views: np.ndarray
    targets: np.ndarray
    prev_actions: np.ndarray
    expert_actions: np.ndarray | None = None
    next_views: np.ndarray | None = None
    actions: np.ndarray | None = None
    returns: np.ndarray | None = None
    next_states: np.ndarray | None = None
    advantages: np.ndarray | None = None

    def __len__(self):
        return len(self.views)


@dataclass
class ControllerState:
    """Per-episode controller memory: the previous action and a latent noise stream."""

    rng: np.random.Generator
    prev_action: int = -1
    t: int = 0

    def prev_one_hot(self) -> np.ndarray:
        return prev_action_input(np.array([self.prev_action]))[0]


def total_loss(e1, e2, e3, l_v, alpha=1.0, beta=0.01, gamma=1e-4, omega=0.5):
    """``alpha*E1 + beta*E2 + gamma*E3 + omega*L_v``; a ``None`` term is left out."""
    total = alpha * e1 + omega * l_v
    if e2 is not None:
        total += beta * e2
    if e3 is not None:
        total += gamma * e3
    return total


def prev_action_input(prev_actions: np.ndarray) -> np.ndarray:
    """One-hot previous actions, with an all-zero row where there is none (t = 0)."""
    prev_actions = np.asarray(prev_actions, dtype=np.int64)
    out = np.zeros((len(prev_actions), NUM_ACTIONS))
    has = prev_actions >= 0
    out[np.nonzero(has)[0], prev_actions[has]] = 1.0
    return out


PARAM_GROUPS = {"enc": "encoder", "tgt": "target_embed", "fuse": "fusion", "post": "posterior",
                "prior": "prior", "dec": "decoder", "gen": "generator", "pa": "prev_action",
                "pol": "policy", "logits": "policy", "value": "value"}


def param_group(name: str) -> str:
    layer = name.split(".")[0]
    for prefix, group in PARAM_GROUPS.items():
        if layer.startswith(prefix):
            return group
    raise KeyError(name)


class NavModel:
    """Layer layout and forward/backward passes for one :class:`ModelConfig`."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        c = cfg
        v = c.variant
        self.layers: dict[str, DenseSpec] = {}
        if v == "random":
            return
        dims = (c.view_dim,) + c.encoder_hidden + (c.state_dim,)
        self.encoder = [self._add(f"enc{i}", dims[i], dims[i + 1], "lrelu", c.spectral_norm)
                        for i in range(len(dims) - 1)]
        if c.target_mode == "class":
            self._add("tgt", c.object_classes, c.state_dim, "lrelu")
        self._add("fuse", 2 * c.state_dim, c.state_dim, "lrelu")
        n_views = 1 if v == "froview" else 4
        if v in GENERATIVE:
            self._add("post_h", n_views * c.state_dim, c.hidden, "lrelu")
            self._add("post_out", c.hidden, 2 * c.latent_dim, None)
            self._add("dec_h", c.latent_dim, c.hidden, "lrelu")
            self._add("dec_out", c.hidden, c.state_dim, None)
        if v in WITH_PRIOR:
            self._add("prior_h", c.state_dim + NUM_ACTIONS, c.hidden, "lrelu")
            self._add("prior_out", c.hidden, 2 * c.latent_dim, None)
        if v == "nogen":
            self._add("gen_h", 4 * c.state_dim, c.hidden, "lrelu")
            self._add("gen_out", c.hidden, c.state_dim, None)
        self._add("pa", NUM_ACTIONS, c.state_dim, "lrelu")
        pol_in = 5 * c.state_dim if v in DIRECT else 3 * c.state_dim
        self._add("pol1", pol_in, c.hidden, "lrelu")
        self._add("pol2", c.hidden, c.hidden, "lrelu")
        self._add("logits", c.hidden, NUM_ACTIONS, None, gain=0.01)
        self._add("value", c.hidden, 1, None)

    def _add(self, name, n_in, n_out, act, sn=False, gain=1.0) -> DenseSpec:
        spec = DenseSpec(name, n_in, n_out, act, sn, gain)
        self.layers[name] = spec
        return spec

    @property
    def sn_layers(self) -> list[DenseSpec]:
        return [s for s in self.layers.values() if s.spectral_norm]

    def init_params(self, seed: int = 0) -> ParamStore:
        rng = np.random.default_rng(seed)
        params, buffers = {}, {}
        for spec in self.layers.values():
            vals = core.init_dense(spec, rng)
            for k, a in vals.items():
                (buffers if k in spec.buffer_names() else params)[k] = a
        return ParamStore(params, buffers)

    def param_groups(self, names) -> dict[str, list[str]]:
        groups: dict[str, list[str]] = {}
        for n in names:
            groups.setdefault(param_group(n), []).append(n)
        return groups

    def refresh_spectral_norm(self, store: ParamStore, iterations: int = 1) -> None:
        """One power-iteration step per normalised layer, after a parameter update."""
        if not self.sn_layers:
            return
        view = store.snapshot()
        updated = {}
        for spec in self.sn_layers:
            core.power_iteration(view, spec, iterations)
            updated[f"{spec.name}.u"] = view[f"{spec.name}.u"]
            updated[f"{spec.name}.v"] = view[f"{spec.name}.v"]
        store.set_buffers(updated)

    # -- building blocks ----------------------------------------------------
    def encode(self, params, views: np.ndarray) -> np.ndarray:
        """Shared state encoder applied row-wise to ``(M, D)`` views."""
        out, _ = core.mlp_forward(params, self.encoder, np.atleast_2d(views))
        return out

    def _encode_inputs(self, params, batch: Batch, cache: dict):
        n = len(batch)
        d = self.cfg.state_dim
        rows = [batch.views.reshape(n * 4, -1)]
        if self.cfg.target_mode == "view":
            rows.append(batch.targets)
        enc_out, cache["enc"] = core.mlp_forward(params, self.encoder, np.concatenate(rows, axis=0))
        feats = enc_out[:4 * n].reshape(n, 4, d)
        if self.cfg.target_mode == "view":
            goal = enc_out[4 * n:]
        else:
            goal, cache["tgt"] = core.dense_forward(params, self.layers["tgt"], batch.targets)
        return feats, goal

    def _fuse(self, params, feats, goal, cache: dict, front_only: bool = False):
        n, d = len(feats), self.cfg.state_dim
        views = feats[:, :1] if front_only else feats
        k = views.shape[1]
        inp = np.concatenate([views, np.broadcast_to(goal[:, None, :], (n, k, d))], axis=2)
        out, cache["fuse"] = core.dense_forward(params, self.layers["fuse"], inp.reshape(n * k, 2 * d))
        cache["fuse_k"] = k
        return out.reshape(n, k * d)

    def _fuse_backward(self, params, dfused, cache, grads, n):
        d, k = self.cfg.state_dim, cache["fuse_k"]
        dinp = core.dense_backward(params, self.layers["fuse"], cache["fuse"],
                                   dfused.reshape(n * k, d), grads).reshape(n, k, 2 * d)
        dfeats = np.zeros((n, 4, d), dtype=dinp.dtype)
        dfeats[:, :k] = dinp[:, :, :d]
        return dfeats, dinp[:, :, d:].sum(axis=1)

    def _gauss(self, params, prefix, x, cache):
        h, cache[prefix] = core.mlp_forward(params, [self.layers[f"{prefix}_h"], self.layers[f"{prefix}_out"]], x)
        mu, logvar, raw = core.split_gaussian(h)
        cache[prefix + "_raw"] = raw
        return mu, logvar

    def _gauss_backward(self, params, prefix, cache, dmu, dlogvar, grads, need_input_grad=True):
        dh = core.split_gaussian_backward(cache[prefix + "_raw"], dmu, dlogvar)
        return core.mlp_backward(params, [self.layers[f"{prefix}_h"], self.layers[f"{prefix}_out"]],
                                 cache[prefix], dh, grads, need_input_grad)

    def posterior(self, params, feats, goal, cache=None):
        cache = {} if cache is None else cache
        fused = self._fuse(params, feats, goal, cache, front_only=self.cfg.variant == "froview")
        return self._gauss(params, "post", fused, cache)

    def prior(self, params, front_state, expert_actions, cache=None):
        cache = {} if cache is None else cache
        x = np.concatenate([front_state, core.one_hot(expert_actions, NUM_ACTIONS)], axis=1)
        return self._gauss(params, "prior", x, cache)

    def decode(self, params, z, cache=None, key="dec"):
        cache = {} if cache is None else cache
        out, cache[key] = core.mlp_forward(params, [self.layers["dec_h"], self.layers["dec_out"]], z)
        return out

    def _decode_backward(self, params, cache, ds, grads, key="dec"):
        return core.mlp_backward(params, [self.layers["dec_h"], self.layers["dec_out"]], cache[key], ds, grads)

    def _policy(self, params, policy_in, prev_actions, cache):
        e_pa, cache["pa"] = core.dense_forward(params, self.layers["pa"], prev_action_input(prev_actions))
        x = np.concatenate(policy_in + [e_pa], axis=1)
        h, cache["pol"] = core.mlp_forward(params, [self.layers["pol1"], self.layers["pol2"]], x)
        logits, cache["logits"] = core.dense_forward(params, self.layers["logits"], h)
        value, cache["value"] = core.dense_forward(params, self.layers["value"], h)
        return logits, value[:, 0], h

    def _policy_backward(self, params, cache, dlogits, dvalue, grads):
        dh = core.dense_backward(params, self.layers["logits"], cache["logits"], dlogits, grads)
        dh = dh + core.dense_backward(params, self.layers["value"], cache["value"], dvalue[:, None], grads)
        dx = core.mlp_backward(params, [self.layers["pol1"], self.layers["pol2"]], cache["pol"], dh, grads)
        d = self.cfg.state_dim
        core.dense_backward(params, self.layers["pa"], cache["pa"], dx[:, -d:], grads, need_input_grad=False)
        return dx[:, :-d]

    def _encoder_backward(self, params, batch, cache, dfeats, dgoal, grads):
        n = len(batch)
        rows = [dfeats.reshape(n * 4, -1)]
        if self.cfg.target_mode == "view":
            rows.append(dgoal)
        else:
            core.dense_backward(params, self.layers["tgt"], cache["tgt"], dgoal, grads, need_input_grad=False)
        core.mlp_backward(params, self.encoder, cache["enc"], np.concatenate(rows, axis=0), grads,
                          need_input_grad=False)

    # -- test-time path -----------------------------------------------------
    def act_forward(self, params, views, targets, prev_actions, noise):
        """Logits and value from observation, goal and previous action only."""
        v = self.cfg.variant
        batch = Batch(np.asarray(views), np.asarray(targets), np.asarray(prev_actions))
        cache: dict = {}
        feats, goal = self._encode_inputs(params, batch, cache)
        if v in DIRECT:
            policy_in = [self._fuse(params, feats, goal, cache)]
        elif v == "nogen":
            fused = self._fuse(params, feats, goal, cache)
            s_next, _ = core.mlp_forward(params, [self.layers["gen_h"], self.layers["gen_out"]], fused)
            policy_in = [feats[:, 0], s_next]
        else:
            mu_q, lv_q = self.posterior(params, feats, goal, cache)
            s_next = self.decode(params, core.gaussian_sample(mu_q, lv_q, noise), cache)
            policy_in = [feats[:, 0], s_next]
        logits, value, _ = self._policy(params, policy_in, batch.prev_actions, cache)
        return logits, value

    # -- training path ------------------------------------------------------
    def forward_train(self, params, batch: Batch, noise: np.ndarray | None):
        """Training forward pass. Returns ``(LossBreakdown, cache)``."""
        c, v = self.cfg, self.cfg.variant
        n = len(batch)
        needs_expert = v != "plain_rl"
        if needs_expert and batch.expert_actions is None:
            raise ValueError("expert actions are required for this variant")
        if v in GENERATIVE + ("nogen",) and batch.next_views is None and batch.next_states is None:
            raise ValueError("expert next observations are required for this variant")
        if batch.returns is None:
            raise ValueError("returns are required")
        cache: dict = {"n": n}
        feats, goal = self._encode_inputs(params, batch, cache)
        e2 = e3 = None

        if v in GENERATIVE or v == "nogen":
            target_state = (batch.next_states if batch.next_states is not None
                            else self.encode(params, batch.next_views))
        if v in DIRECT:
            policy_in = [self._fuse(params, feats, goal, cache)]
        elif v == "nogen":
            fused = self._fuse(params, feats, goal, cache)
            s_next, cache["gen"] = core.mlp_forward(params, [self.layers["gen_h"], self.layers["gen_out"]], fused)
            cache["s_e2"] = s_next
            policy_in = [feats[:, 0], s_next]
        else:
            mu_q, lv_q = self.posterior(params, feats, goal, cache)
            cache["q"] = (mu_q, lv_q)
            if v == "vanillagen":
                z = core.gaussian_sample(mu_q, lv_q, noise)
                s_next = self.decode(params, z, cache)
                cache["s_e2"] = s_next
                zeros = np.zeros_like(mu_q)
                kl = core.gaussian_kl(mu_q, lv_q, zeros, zeros)
            else:
                mu_p, lv_p = self.prior(params, feats[:, 0], batch.expert_actions, cache)
                cache["p"] = (mu_p, lv_p)
                s_prior = self.decode(params, core.gaussian_sample(mu_p, lv_p, noise), cache)
                cache["s_e2"] = s_prior
                if c.policy_z_source == "prior":
                    s_next = s_prior
                else:
                    s_next = self.decode(params, core.gaussian_sample(mu_q, lv_q, noise), cache, key="dec_q")
                kl = core.gaussian_kl(mu_q, lv_q, mu_p, lv_p)
            e3 = kl.mean()
            policy_in = [feats[:, 0], s_next]
        if "s_e2" in cache:
            diff = cache["s_e2"] - target_state
            norm = np.sqrt(np.sum(diff * diff, axis=1))
            cache["e2"] = (diff, norm)
            e2 = np.mean(norm ** 2 if c.e2_squared else norm)

        logits, value, _ = self._policy(params, policy_in, batch.prev_actions, cache)
        cache["value_out"] = value
        resid = value - batch.returns
        l_v = np.mean(resid ** 2)
        omega = c.value_weight
        if v == "plain_rl":
            lp = core.log_softmax(logits)
            probs = np.exp(lp)
            adv = batch.returns - value if batch.advantages is None else batch.advantages
            rows = np.arange(n)
            pg = np.mean(-lp[rows, batch.actions] * adv)
            ent = np.mean(-np.sum(probs * lp, axis=1))
            cache["pg"] = (lp, probs, adv)
            total = pg - c.entropy_coef * ent + omega * l_v
            return LossBreakdown(None, None, None, l_v, total, c.alpha, c.beta, c.gamma, omega, pg, ent), cache
        ce, cache["ce_grad"] = core.softmax_cross_entropy(logits, batch.expert_actions)
        e1 = ce.mean()
        total = total_loss(e1, e2, e3, l_v, c.alpha, c.beta, c.gamma, omega)
        return LossBreakdown(e1, e2, e3, l_v, total, c.alpha, c.beta, c.gamma, omega), cache

    def backward_train(self, params, batch: Batch, noise, cache) -> dict[str, np.ndarray]:
        c, v = self.cfg, self.cfg.variant
        n = cache["n"]
        grads: dict[str, np.ndarray] = {}
        resid = cache["value_out"] - batch.returns
        dvalue = c.value_weight * 2.0 * resid / n
        if v == "plain_rl":
            lp, probs, adv = cache["pg"]
            onehot = core.one_hot(batch.actions, NUM_ACTIONS)
            # d(-log pi(a) * adv)/dlogits = (probs - onehot) * adv; the advantage is held constant
            dlogits = (probs - onehot) * adv[:, None] / n
            # d(-H)/dlogits = probs * (log p + H)
            ent_rows = -np.sum(probs * lp, axis=1, keepdims=True)
            dlogits += c.entropy_coef * probs * (lp + ent_rows) / n
        else:
            dlogits = c.alpha * cache["ce_grad"] / n
        dpol_in = self._policy_backward(params, cache, dlogits, dvalue, grads)
        d = c.state_dim
        dfeats = np.zeros((n, 4, d), dtype=dpol_in.dtype)
        dgoal = np.zeros((n, d), dtype=dpol_in.dtype)

        if v in DIRECT:
            df, dg = self._fuse_backward(params, dpol_in, cache, grads, n)
            dfeats += df
            dgoal += dg
        else:
            dfeats[:, 0] += dpol_in[:, :d]
            ds_pol = dpol_in[:, d:]
            diff, norm = cache["e2"]
            if c.e2_squared:
                ds_e2 = c.beta * 2.0 * diff / n
            else:
                safe = np.where(norm > 1e-12, norm, 1.0)
                ds_e2 = c.beta * np.where(norm[:, None] > 1e-12, diff / safe[:, None], 0.0) / n
            if v == "nogen":
                dfused = core.mlp_backward(params, [self.layers["gen_h"], self.layers["gen_out"]],
                                           cache["gen"], ds_pol + ds_e2, grads)
                df, dg = self._fuse_backward(params, dfused, cache, grads, n)
                dfeats += df
                dgoal += dg
            else:
                mu_q, lv_q = cache["q"]
                dmu_q = np.zeros_like(mu_q)
                dlv_q = np.zeros_like(lv_q)
                if v == "vanillagen":
                    zeros = np.zeros_like(mu_q)
                    kq, kl_lv, _, _ = core.gaussian_kl_backward(mu_q, lv_q, zeros, zeros, c.gamma / n)
                    dz = self._decode_backward(params, cache, ds_pol + ds_e2, grads)
                    a, b = core.gaussian_sample_backward(lv_q, noise, dz)
                    dmu_q += kq + a
                    dlv_q += kl_lv + b
                else:
                    mu_p, lv_p = cache["p"]
                    kq, kl_lv_q, kp, kl_lv_p = core.gaussian_kl_backward(mu_q, lv_q, mu_p, lv_p, c.gamma / n)
                    dmu_q += kq
                    dlv_q += kl_lv_q
                    ds_prior = ds_e2 + (ds_pol if c.policy_z_source == "prior" else 0.0)
                    dz_p = self._decode_backward(params, cache, ds_prior, grads)
                    a, b = core.gaussian_sample_backward(lv_p, noise, dz_p)
                    dprior_in = self._gauss_backward(params, "prior", cache, kp + a, kl_lv_p + b, grads)
                    dfeats[:, 0] += dprior_in[:, :d]
                    if c.policy_z_source == "posterior":
                        dz_q = self._decode_backward(params, cache, ds_pol, grads, key="dec_q")
                        a, b = core.gaussian_sample_backward(lv_q, noise, dz_q)
                        dmu_q += a
                        dlv_q += b
                dfused = self._gauss_backward(params, "post", cache, dmu_q, dlv_q, grads)
                df, dg = self._fuse_backward(params, dfused, cache, grads, n)
                dfeats += df
                dgoal += dg
        self._encoder_backward(params, batch, cache, dfeats, dgoal, grads)
        return grads

    def loss_and_grads(self, params, batch: Batch, noise=None):
        loss, cache = self.forward_train(params, batch, noise)
        return loss, self.backward_train(params, batch, noise, cache)

    def training_losses(self, params, views, target, prev_action, expert_action, next_views, ret, noise,
                        action=None) -> LossBreakdown:
        """Loss terms for a single rollout step."""
        batch = Batch(np.asarray(views)[None], np.asarray(target)[None], np.array([prev_action]),
                      None if expert_action is None else np.array([int(expert_action)]),
                      None if next_views is None else np.asarray(next_views)[None],
                      None if action is None else np.array([int(action)]), np.atleast_1d(np.asarray(ret)))
        noise = None if noise is None else np.asarray(noise).reshape(1, -1)
        return self.forward_train(params, batch, noise)[0]

    def value_estimate(self, params, views, targets, prev_actions, expert_actions, noise) -> np.ndarray:
        """State values along the path the value head is trained on (used for bootstrapping)."""
        v = self.cfg.variant
        if v == "random":
            return np.zeros(len(views))
        if v in WITH_PRIOR and self.cfg.policy_z_source == "prior":
            batch = Batch(np.asarray(views), np.asarray(targets), np.asarray(prev_actions))
            cache: dict = {}
            feats, _ = self._encode_inputs(params, batch, cache)
            mu_p, lv_p = self.prior(params, feats[:, 0], expert_actions, cache)
            s_next = self.decode(params, core.gaussian_sample(mu_p, lv_p, noise), cache)
            _, value, _ = self._policy(params, [feats[:, 0], s_next], batch.prev_actions, cache)
            return value
        return self.act_forward(params, views, targets, prev_actions, noise)[1]

    # -- acting -------------------------------------------------------------
    def act_batch(self, params, views, targets, prev_actions, noise, mode: str = "greedy", rng=None,
                  forbid_stop: bool = False, uniforms=None) -> np.ndarray:
        """Actions for a batch. Sampling draws ``uniforms`` (N, 2) from ``rng`` unless given."""
        n = len(views)
        if mode not in ("greedy", "sample"):
            raise ValueError(f"unknown mode {mode!r}")
        if self.cfg.variant == "random":
            logits = np.zeros((n, NUM_ACTIONS))
            mode = "sample"
        else:
            logits, _ = self.act_forward(params, views, targets, prev_actions, noise)
        if mode == "sample" and uniforms is None:
            uniforms = rng.random((n, 2))
        return select_actions(logits, mode, uniforms, forbid_stop)

    def act(self, params, observation, target, ctrl: ControllerState, mode: str = "greedy",
            forbid_stop: bool = False) -> int:
        """Choose one action; never sees the expert action or expert next view."""
        noise = ctrl.rng.standard_normal((1, self.cfg.latent_dim))
        a = int(self.act_batch(params, np.asarray(observation)[None], np.asarray(target)[None],
                               np.array([ctrl.prev_action]), noise, mode, ctrl.rng, forbid_stop)[0])
        ctrl.prev_action = a
        ctrl.t += 1
        return a


def select_actions(logits: np.ndarray, mode: str = "greedy", uniforms=None, forbid_stop: bool = False) -> np.ndarray:
    """Greedy or inverse-CDF sampled actions from ``logits``.

    With ``forbid_stop`` the choice is first made from the full policy and
    only replaced where it is stop: greedy falls back to the best non-stop
    action, sampling redraws from the stop-masked policy with the second
    uniform. An agent that would not have stopped therefore acts identically
    with and without the mask.
    """
    logits = np.asarray(logits)
    if mode == "greedy":
        out = np.argmax(logits, axis=1)
        if forbid_stop:
            out = np.where(out == Action.STOP, np.argmax(logits[:, :Action.STOP], axis=1), out)
        return out
    uniforms = np.asarray(uniforms)
    out = _inverse_cdf(core.softmax(logits), uniforms[:, 0])
    if forbid_stop:
        masked = _inverse_cdf(core.softmax(logits[:, :Action.STOP]), uniforms[:, 1])
        out = np.where(out == Action.STOP, masked, out)
    return out


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum((np.cumsum(probs, axis=1) < u[:, None]).sum(axis=1), probs.shape[1] - 1)


def build_model(cfg: ModelConfig, seed: int = 0) -> tuple[NavModel, ParamStore]:
    model = NavModel(cfg)
    return model, model.init_params(seed)
