"""Desk-scale policy-gradient training on the product MDP, in plain numpy.

The actor is a two-hidden-layer ReLU network over ``[normalised s, one-hot b,
frontier bits e]``. It outputs a Gaussian mean for continuous environments,
a state-independent learned log-std, and logits over a discrete option set:
environment actions for discrete environments (or a single "move" option for
continuous ones) followed by one option per automaton jump. The critic is a
two-hidden-layer tanh network. Gradients are written out by hand and checked
against finite differences.

Training optimises the clipped-ratio surrogate on the undiscounted
reward-to-go of ``r_hat_t = gamma^t r_mdp + Gamma_t * lam * r_ltl``, where
``r_ltl`` is either the CyclER-shaped stream or the unshaped accepting flag.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .automaton import LDBA, IncompleteAutomatonError, letter_mask
from .envs import FlatWorld, FlatWorldConfig, GridLab
from .logic import DomainError
from .product import ProductState, ProductTrajectory, Step, accepting_visits, rollout
from .shaping import (
    QS,
    ShapingConfig,
    cycle_sets,
    cycler_assign,
    eventual_discount_weights,
)

__all__ = [
    "TrainConfig",
    "PolicyNet",
    "ValueNet",
    "Adam",
    "TrainingDivergedError",
    "Batch",
    "EvalResult",
    "collect",
    "train",
    "evaluate",
    "surrogate_loss",
    "policy_gradient_check",
    "value_gradient_check",
    "save_checkpoint",
    "load_checkpoint",
]

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
MASKED = -1e9
SHAPING_MODES = ("cycler", "cycler-qs", "unshaped")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 0.98
    gamma_phi: float = 0.99
    lam: float = 400.0
    batch_size: int = 16
    horizon: int = 120
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    episodes: int = 2000
    seed: int = 0
    shaping: str = "cycler"
    entropy_coef: float = 0.0
    clip: float = 0.2
    epochs: int = 10
    minibatches: int = 4
    hidden: int = 64
    init_log_std: float = 0.0
    value_scale: float | None = None  # defaults to max(1, lam)

    def __post_init__(self):
        if not (0 < self.gamma < 1 and 0 < self.gamma_phi < 1):
            raise ValueError("discount factors must lie in (0, 1)")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.shaping not in SHAPING_MODES:
            raise ValueError(f"shaping must be one of {SHAPING_MODES}")
        for name in ("batch_size", "horizon", "episodes", "epochs", "minibatches", "hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# --------------------------------------------------------------------------
# parameters and optimiser


class _Params:
    """Named array views into a single flat float64 vector."""

    def __init__(self, layout: Sequence[tuple[str, tuple[int, ...]]], theta: np.ndarray | None = None):
        self.layout = [(n, tuple(s)) for n, s in layout]
        size = sum(math.prod(s) for _, s in self.layout)
        self.theta = np.zeros(size) if theta is None else np.asarray(theta, dtype=float).copy()
        if self.theta.shape != (size,):
            raise ValueError(f"parameter vector has {self.theta.size} entries, expected {size}")

    def views(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        out, i = {}, 0
        for name, shape in self.layout:
            n = math.prod(shape)
            out[name] = flat[i:i + n].reshape(shape)
            i += n
        return out

    @property
    def p(self) -> dict[str, np.ndarray]:
        return self.views(self.theta)


class Adam:
    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        """In-place descent step on ``theta``."""
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1 ** self.t)
        v_hat = self.v / (1 - self.b2 ** self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _init_dense(rng, fan_in, fan_out, gain):
    return rng.normal(0.0, gain / math.sqrt(fan_in), size=(fan_in, fan_out))


class PolicyNet:
    """Gaussian-plus-categorical actor.

    ``act_dim`` is the continuous action size (0 for discrete environments);
    ``n_options`` is the number of discrete options. Option 0 means "take the
    continuous action" when ``act_dim > 0``.
    """

    def __init__(self, obs_dim: int, act_dim: int, n_options: int, hidden: int = 64,
                 rng: np.random.Generator | None = None, init_log_std: float = 0.0,
                 theta: np.ndarray | None = None):
        self.obs_dim, self.act_dim, self.n_options, self.hidden = obs_dim, act_dim, n_options, hidden
        self.n_logits = n_options if n_options > 1 else 0
        out = act_dim + self.n_logits
        if out == 0:
            raise ValueError("policy has nothing to output")
        self.params = _Params([
            ("W1", (obs_dim, hidden)), ("b1", (hidden,)),
            ("W2", (hidden, hidden)), ("b2", (hidden,)),
            ("Wo", (hidden, out)), ("bo", (out,)),
            ("log_std", (act_dim,)),
        ], theta)
        if theta is None:
            rng = rng or np.random.default_rng(0)
            p = self.params.p
            p["W1"][:] = _init_dense(rng, obs_dim, hidden, math.sqrt(2))
            p["W2"][:] = _init_dense(rng, hidden, hidden, math.sqrt(2))
            p["Wo"][:] = _init_dense(rng, hidden, out, 0.01)
            p["log_std"][:] = init_log_std

    @property
    def theta(self) -> np.ndarray:
        return self.params.theta

    def spec(self) -> dict:
        return {"obs_dim": self.obs_dim, "act_dim": self.act_dim, "n_options": self.n_options,
                "hidden": self.hidden}

    def copy(self) -> "PolicyNet":
        return PolicyNet(**self.spec(), theta=self.theta)

    def forward(self, x: np.ndarray, theta: np.ndarray | None = None):
        p = self.params.views(self.theta if theta is None else theta)
        a1 = x @ p["W1"] + p["b1"]
        h1 = np.maximum(a1, 0.0)
        a2 = h1 @ p["W2"] + p["b2"]
        h2 = np.maximum(a2, 0.0)
        out = h2 @ p["Wo"] + p["bo"]
        mu = out[:, : self.act_dim]
        logits = out[:, self.act_dim:]
        raw = p["log_std"]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        cache = (x, a1, h1, a2, h2, raw)
        return mu, log_std, logits, cache

    def backward(self, cache, d_mu: np.ndarray, d_log_std: np.ndarray, d_logits: np.ndarray,
                 theta: np.ndarray | None = None) -> np.ndarray:
        x, a1, h1, a2, h2, raw = cache
        p = self.params.views(self.theta if theta is None else theta)
        grad = np.zeros_like(self.theta)
        g = self.params.views(grad)
        d_out = np.concatenate([d_mu, d_logits], axis=1)
        g["Wo"][:] = h2.T @ d_out
        g["bo"][:] = d_out.sum(axis=0)
        d_a2 = (d_out @ p["Wo"].T) * (a2 > 0)
        g["W2"][:] = h1.T @ d_a2
        g["b2"][:] = d_a2.sum(axis=0)
        d_a1 = (d_a2 @ p["W2"].T) * (a1 > 0)
        g["W1"][:] = x.T @ d_a1
        g["b1"][:] = d_a1.sum(axis=0)
        inside = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
        g["log_std"][:] = d_log_std * inside
        return grad


class ValueNet:
    def __init__(self, obs_dim: int, hidden: int = 64, rng: np.random.Generator | None = None,
                 theta: np.ndarray | None = None):
        self.obs_dim, self.hidden = obs_dim, hidden
        self.params = _Params([
            ("W1", (obs_dim, hidden)), ("b1", (hidden,)),
            ("W2", (hidden, hidden)), ("b2", (hidden,)),
            ("W3", (hidden, 1)), ("b3", (1,)),
        ], theta)
        if theta is None:
            rng = rng or np.random.default_rng(0)
            p = self.params.p
            p["W1"][:] = _init_dense(rng, obs_dim, hidden, 1.0)
            p["W2"][:] = _init_dense(rng, hidden, hidden, 1.0)
            p["W3"][:] = _init_dense(rng, hidden, 1, 1.0)

    @property
    def theta(self) -> np.ndarray:
        return self.params.theta

    def spec(self) -> dict:
        return {"obs_dim": self.obs_dim, "hidden": self.hidden}

    def forward(self, x, theta=None):
        p = self.params.views(self.theta if theta is None else theta)
        h1 = np.tanh(x @ p["W1"] + p["b1"])
        h2 = np.tanh(h1 @ p["W2"] + p["b2"])
        v = (h2 @ p["W3"] + p["b3"])[:, 0]
        return v, (x, h1, h2)

    def loss_and_grad(self, x, target, theta=None) -> tuple[float, np.ndarray]:
        """Mean of ``0.5 (v - target)^2`` and its gradient."""
        theta = self.theta if theta is None else theta
        p = self.params.views(theta)
        v, (x, h1, h2) = self.forward(x, theta)
        n = len(target)
        diff = v - target
        loss = 0.5 * float(np.mean(diff * diff))
        grad = np.zeros_like(theta)
        g = self.params.views(grad)
        d_v = (diff / n)[:, None]
        g["W3"][:] = h2.T @ d_v
        g["b3"][:] = d_v.sum(axis=0)
        d_a2 = (d_v @ p["W3"].T) * (1 - h2 * h2)
        g["W2"][:] = h1.T @ d_a2
        g["b2"][:] = d_a2.sum(axis=0)
        d_a1 = (d_a2 @ p["W2"].T) * (1 - h1 * h1)
        g["W1"][:] = x.T @ d_a1
        g["b1"][:] = d_a1.sum(axis=0)
        return loss, grad


# --------------------------------------------------------------------------
# distributions


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _gauss_logp(a, mu, log_std):
    z = (a - mu) / np.exp(log_std)
    return -0.5 * (z * z).sum(axis=1) - log_std.sum() - 0.5 * mu.shape[1] * math.log(2 * math.pi)


@dataclass
class Batch:
    """Flattened transitions for one policy update."""

    obs: np.ndarray  # (N, D)
    actions: np.ndarray  # (N, act_dim) continuous samples (zeros when unused)
    options: np.ndarray  # (N,) chosen discrete option
    option_mask: np.ndarray  # (N, K) bool, available options
    logp_old: np.ndarray  # (N,)
    advantages: np.ndarray  # (N,)
    returns: np.ndarray | None = None

    def subset(self, idx) -> "Batch":
        return Batch(self.obs[idx], self.actions[idx], self.options[idx], self.option_mask[idx],
                     self.logp_old[idx], self.advantages[idx],
                     None if self.returns is None else self.returns[idx])


def _log_prob_parts(net: PolicyNet, batch: Batch, theta=None):
    mu, log_std, logits, cache = net.forward(batch.obs, theta)
    n = len(batch.obs)
    logp = np.zeros(n)
    cont = np.ones(n, dtype=bool)
    lsm = None
    if net.n_logits:
        z = np.where(batch.option_mask, logits, MASKED)
        lsm = _log_softmax(z)
        logp += lsm[np.arange(n), batch.options]
        cont = batch.options == 0 if net.act_dim else np.zeros(n, dtype=bool)
    if net.act_dim:
        logp += np.where(cont, _gauss_logp(batch.actions, mu, log_std), 0.0)
    return logp, mu, log_std, lsm, cont, cache


def surrogate_loss(net: PolicyNet, batch: Batch, clip: float = 0.2, entropy_coef: float = 0.0,
                   theta: np.ndarray | None = None, with_grad: bool = True):
    """Clipped-ratio policy loss (to minimise) and, optionally, its gradient."""
    theta = net.theta if theta is None else theta
    logp, mu, log_std, lsm, cont, cache = _log_prob_parts(net, batch, theta)
    n = len(logp)
    ratio = np.exp(logp - batch.logp_old)
    A = batch.advantages
    unclipped = ratio * A
    clipped = np.clip(ratio, 1 - clip, 1 + clip) * A
    ent = float(log_std.sum() + 0.5 * net.act_dim * (1 + math.log(2 * math.pi))) if net.act_dim else 0.0
    ent_disc = None
    if lsm is not None:
        probs = np.exp(lsm)
        ent_disc = -(probs * np.where(batch.option_mask, lsm, 0.0)).sum(axis=1)
        ent += float(ent_disc.mean())
    loss = -float(np.mean(np.minimum(unclipped, clipped))) - entropy_coef * ent
    if not with_grad:
        return loss
    d_logp = np.where(unclipped <= clipped, -unclipped / n, 0.0)
    d_mu = np.zeros_like(mu)
    d_log_std = np.zeros(net.act_dim)
    d_logits = np.zeros((n, net.n_logits))
    if net.act_dim:
        var = np.exp(2 * log_std)
        w = (d_logp * cont)[:, None]
        diff = batch.actions - mu
        d_mu = w * diff / var
        d_log_std = (w * (diff * diff / var - 1.0)).sum(axis=0) - entropy_coef
    if lsm is not None:
        onehot = np.zeros_like(lsm)
        onehot[np.arange(n), batch.options] = 1.0
        d_logits = d_logp[:, None] * (onehot - probs)
        # entropy gradient: dH/dz_j = -p_j (log p_j + H)
        lp = np.where(batch.option_mask, lsm, 0.0)
        d_h = -probs * (lp + ent_disc[:, None])
        d_logits -= entropy_coef * d_h / n
        d_logits = d_logits * batch.option_mask
    grad = net.backward(cache, d_mu, d_log_std, d_logits, theta)
    return loss, grad


def _relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def policy_gradient_check(net: PolicyNet, batch: Batch, clip: float = 0.2, entropy_coef: float = 0.01,
                          h: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative error between the analytic surrogate gradient and central differences.

    Components whose analytic and numeric values are both below ``floor``
    are compared on the absolute scale of ``floor``.
    """
    theta = net.theta.copy()
    _, grad = surrogate_loss(net, batch, clip, entropy_coef, theta)
    num = np.zeros_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        num[i] = (surrogate_loss(net, batch, clip, entropy_coef, tp, with_grad=False)
                  - surrogate_loss(net, batch, clip, entropy_coef, tm, with_grad=False)) / (2 * h)
    return float(_relative_errors(grad, num, floor).max())


def value_gradient_check(net: ValueNet, obs: np.ndarray, target: np.ndarray, h: float = 1e-5,
                         floor: float = 1e-6) -> float:
    theta = net.theta.copy()
    _, grad = net.loss_and_grad(obs, target, theta)
    num = np.zeros_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        num[i] = (net.loss_and_grad(obs, target, tp)[0] - net.loss_and_grad(obs, target, tm)[0]) / (2 * h)
    return float(_relative_errors(grad, num, floor).max())


# --------------------------------------------------------------------------
# batched product rollouts


class _VecEnv:
    """Array-at-a-time view of an environment for batched rollouts."""

    def __init__(self, env, ldba: LDBA):
        self.env, self.ldba = env, ldba
        self.discrete = bool(getattr(env, "discrete", False))
        if isinstance(env, FlatWorld):
            cfg = env.cfg
            missing = [p for p in ldba.aps if p not in cfg.regions]
            if missing:
                raise DomainError(f"automaton propositions {missing} have no FlatWorld region")
            self._centers = np.array([cfg.regions[p].center for p in ldba.aps], dtype=float)
            self._radii = np.array([cfg.regions[p].radius for p in ldba.aps], dtype=float)
            bonus = cfg.bonus_regions
            self._b_centers = np.array([r.center for r in bonus], dtype=float).reshape(-1, 2)
            self._b_radii = np.array([r.radius for r in bonus], dtype=float)
            self._b_rewards = np.array([r.reward for r in bonus], dtype=float)
            self._lo = np.array([b[0] for b in cfg.bounds])
            self._hi = np.array([b[1] for b in cfg.bounds])
            self.kind = "flatworld"
        elif isinstance(env, GridLab):
            self._label_masks = np.array([letter_mask(l & set(ldba.aps), ldba.aps) for l in env.labels])
            self.kind = "gridlab"
        else:
            self.kind = "generic"

    @property
    def act_dim(self) -> int:
        return 0 if self.discrete else int(self.env.action_dim)

    @property
    def n_env_options(self) -> int:
        return int(self.env.num_actions) if self.discrete else 1

    @property
    def obs_state_dim(self) -> int:
        return len(np.atleast_1d(self.env.normalize(self.env.reset())))

    def reset(self, n: int, rng) -> np.ndarray:
        s0 = self.env.reset(rng)
        return np.repeat(np.asarray(s0)[None, ...], n, axis=0)

    def step(self, S: np.ndarray, A: np.ndarray):
        if self.kind == "flatworld":
            cfg = self.env.cfg
            A = np.clip(A, -cfg.action_bound, cfg.action_bound)
            S2 = np.clip(S + A * cfg.step_scale, self._lo, self._hi)
            if len(self._b_radii):
                d = np.linalg.norm(S2[:, None, :] - self._b_centers[None], axis=2)
                r = ((d <= self._b_radii) * self._b_rewards).sum(axis=1)
            else:
                r = np.zeros(len(S))
            return S2, r
        if self.kind == "gridlab":
            return self.env.transitions[S, A], self.env.rewards[S, A]
        out = [self.env.step(s, a) for s, a in zip(S, A)]
        return np.array([o[0] for o in out]), np.array([o[1] for o in out], dtype=float)

    def masks(self, S: np.ndarray) -> np.ndarray:
        if self.kind == "flatworld":
            d = np.linalg.norm(S[:, None, :] - self._centers[None], axis=2)
            bits = (d <= self._radii).astype(np.int64)
            return (bits << np.arange(len(self._radii))).sum(axis=1)
        if self.kind == "gridlab":
            return self._label_masks[S]
        return np.array([letter_mask(self.env.label(s) & set(self.ldba.aps), self.ldba.aps) for s in S])

    def features(self, S: np.ndarray) -> np.ndarray:
        if self.kind == "flatworld":
            return 2.0 * (S - self._lo) / (self._hi - self._lo) - 1.0
        if self.kind == "gridlab":
            return np.eye(self.env.num_states)[S]
        return np.array([np.atleast_1d(self.env.normalize(s)) for s in S], dtype=float)


def _jump_table(ldba: LDBA):
    """Jump ids, and per automaton state the option-availability and target/element arrays."""
    ids = ldba.jump_ids()
    avail = np.zeros((ldba.num_states, len(ids)), dtype=bool)
    dst = np.zeros((ldba.num_states, len(ids)), dtype=np.int64)
    el = np.zeros((ldba.num_states, len(ids)), dtype=np.int64)
    for e in ldba.eps_edges:
        k = ids.index(e.jump_id)
        avail[e.src, k] = True
        dst[e.src, k] = e.dst
        el[e.src, k] = e.id
    return ids, avail, dst, el


def make_policy(env, ldba: LDBA, hidden: int = 64, rng=None, init_log_std: float = 0.0) -> PolicyNet:
    vec = _VecEnv(env, ldba)
    obs_dim = vec.obs_state_dim + ldba.num_states + ldba.num_elements
    n_options = vec.n_env_options + len(ldba.jump_ids())
    return PolicyNet(obs_dim, vec.act_dim, n_options, hidden, rng, init_log_std)


@dataclass
class Rollouts:
    """Raw batched rollout arrays: index ``[i, t]`` is trajectory ``i``, transition ``t``."""

    S: np.ndarray  # (B, T+1, ...) environment states
    b: np.ndarray  # (B, T+1)
    edges: np.ndarray  # (B, T)
    r_mdp: np.ndarray  # (B, T)
    obs: np.ndarray  # (B, T, D)
    actions: np.ndarray  # (B, T, act_dim)
    options: np.ndarray  # (B, T)
    option_mask: np.ndarray  # (B, T, K)
    logp: np.ndarray  # (B, T)
    jump_ids: list[str] = field(default_factory=list)
    n_env_options: int = 1
    discrete: bool = False

    @property
    def accepting_flags(self) -> np.ndarray:
        return self._acc

    def trajectory(self, i: int, ldba: LDBA, env=None) -> ProductTrajectory:
        """Rebuild trajectory ``i`` as a :class:`ProductTrajectory` (frontiers omitted)."""
        steps = []
        T = self.edges.shape[1]
        for t in range(T):
            k = int(self.options[i, t])
            if k >= self.n_env_options:
                a = self.jump_ids[k - self.n_env_options]
            elif self.discrete:
                a = k
            else:
                a = self.actions[i, t]
            s = self.S[i, t]
            steps.append(Step(s, int(self.b[i, t]), None, a, int(self.edges[i, t]), frozenset(),
                              float(self.r_mdp[i, t])))
        final = ProductState(self.S[i, T], int(self.b[i, T]), None)
        traj = ProductTrajectory(steps, final)
        if env is not None:
            traj.robustness = [env.robustness(s) for s in traj.states]
        return traj


def collect(policy: PolicyNet, env, ldba: LDBA, n: int, horizon: int, rng: np.random.Generator,
            greedy: bool = False) -> Rollouts:
    """Roll ``n`` trajectories of ``horizon`` product transitions in lock step."""
    vec = _VecEnv(env, ldba)
    nxt, fired = ldba.transition_table()
    ids, j_avail, j_dst, j_el = _jump_table(ldba)
    n_env = vec.n_env_options
    K = n_env + len(ids)
    D = policy.obs_dim
    S = vec.reset(n, rng)
    b = np.full(n, -1, dtype=np.int64)
    m0 = vec.masks(S)
    b0 = nxt[ldba.initial, m0]
    if (fired[ldba.initial, m0] < 0).any():
        raise IncompleteAutomatonError("no unique initial transition for the start label")
    b[:] = b0
    e = np.zeros((n, ldba.num_elements), dtype=np.float64)
    acc = np.zeros(ldba.num_states, dtype=bool)
    acc[list(ldba.accepting)] = True

    S_hist = np.zeros((n, horizon + 1) + S.shape[1:], dtype=S.dtype)
    b_hist = np.zeros((n, horizon + 1), dtype=np.int64)
    edges = np.zeros((n, horizon), dtype=np.int64)
    r_hist = np.zeros((n, horizon))
    obs_hist = np.zeros((n, horizon, D))
    act_hist = np.zeros((n, horizon, policy.act_dim))
    opt_hist = np.zeros((n, horizon), dtype=np.int64)
    mask_hist = np.zeros((n, horizon, K), dtype=bool)
    logp_hist = np.zeros((n, horizon))
    eye_b = np.eye(ldba.num_states)
    rows = np.arange(n)

    for t in range(horizon):
        S_hist[:, t] = S
        b_hist[:, t] = b
        obs = np.concatenate([vec.features(S), eye_b[b], e], axis=1)
        mu, log_std, logits, _ = policy.forward(obs)
        mask = np.ones((n, K), dtype=bool)
        if ids:
            mask[:, n_env:] = j_avail[b]
        opt = np.zeros(n, dtype=np.int64)
        logp = np.zeros(n)
        if policy.n_logits:
            lsm = _log_softmax(np.where(mask, logits, MASKED))
            if greedy:
                opt = lsm.argmax(axis=1)
            else:
                u = rng.random(n)
                opt = np.minimum((np.exp(lsm).cumsum(axis=1) < u[:, None]).sum(axis=1), K - 1)
                opt = np.where(mask[rows, opt], opt, lsm.argmax(axis=1))
            logp += lsm[rows, opt]
        A = np.zeros((n, policy.act_dim))
        if policy.act_dim:
            A = mu if greedy else mu + np.exp(log_std) * rng.standard_normal(mu.shape)
            cont = opt == 0
            logp += np.where(cont, _gauss_logp(A, mu, log_std), 0.0)
        is_jump = opt >= n_env
        env_a = A if policy.act_dim else opt
        if is_jump.all():
            S2, r = S.copy(), np.zeros(n)
        else:
            S2, r = vec.step(S, np.where(is_jump, 0, env_a) if not policy.act_dim else env_a)
            S2 = np.where(is_jump.reshape((-1,) + (1,) * (S.ndim - 1)), S, S2)
            r = np.where(is_jump, 0.0, r)
        m = vec.masks(S2)
        b2 = nxt[b, m]
        el = fired[b, m]
        if ids and is_jump.any():
            jk = np.where(is_jump, opt - n_env, 0)
            b2 = np.where(is_jump, j_dst[b, jk], b2)
            el = np.where(is_jump, j_el[b, jk], el)
        if (el < 0).any():
            i = int(np.flatnonzero(el < 0)[0])
            raise IncompleteAutomatonError(f"no unique automaton move from state {b[i]} on mask {m[i]}")
        obs_hist[:, t] = obs
        act_hist[:, t] = A
        opt_hist[:, t] = opt
        mask_hist[:, t] = mask
        logp_hist[:, t] = logp
        edges[:, t] = el
        r_hist[:, t] = r
        e[rows, el] = 1.0
        e[acc[b2]] = 0.0
        S, b = S2, b2
    S_hist[:, horizon] = S
    b_hist[:, horizon] = b
    ro = Rollouts(S_hist, b_hist, edges, r_hist, obs_hist, act_hist, opt_hist, mask_hist, logp_hist,
                  ids, n_env, vec.discrete)
    ro._acc = acc[b_hist[:, 1:]]
    return ro


# --------------------------------------------------------------------------
# training


@dataclass
class IterationLog:
    iteration: int
    episodes: int
    ltl_unshaped: float
    ltl_shaped: float
    mdp_return: float
    accepting_visits: float
    policy_loss: float
    value_loss: float
    std: float

    FIELDS = ("iteration", "episodes", "ltl_unshaped", "ltl_shaped", "mdp_return", "accepting_visits",
              "policy_loss", "value_loss", "std")


def _ltl_streams(ro: Rollouts, env, ldba: LDBA, cfg: TrainConfig):
    """Per-transition shaped and unshaped LTL rewards for every trajectory."""
    flags = ro.accepting_flags
    unshaped = flags.astype(float)
    if cfg.shaping == "unshaped":
        return unshaped, unshaped
    mode = ShapingConfig(mode=QS, qs=env.qs_config()) if cfg.shaping == "cycler-qs" else ShapingConfig()
    shaped = np.zeros_like(unshaped)
    for i in range(len(flags)):
        traj = ro.trajectory(i, ldba, env if mode.mode == QS else None)
        maips, macs = cycle_sets(ldba, int(ro.b[i, 0]))
        shaped[i] = cycler_assign(traj, maips, macs, ldba, mode).r_cycler
    return shaped, unshaped


def train(env, ldba: LDBA, cfg: TrainConfig, log_path=None, callback=None):
    """Train an actor-critic pair; returns ``(policy, value_net, log)``."""
    rng = np.random.default_rng(cfg.seed)
    policy = make_policy(env, ldba, cfg.hidden, rng, cfg.init_log_std)
    critic = ValueNet(policy.obs_dim, cfg.hidden, rng)
    opt_pi = Adam(policy.theta.size, cfg.actor_lr)
    opt_v = Adam(critic.theta.size, cfg.critic_lr)
    scale = cfg.value_scale or max(1.0, cfg.lam)
    T = cfg.horizon
    disc = cfg.gamma ** np.arange(T)
    log: list[IterationLog] = []
    n_iter = max(1, cfg.episodes // cfg.batch_size)
    for it in range(n_iter):
        ro = collect(policy, env, ldba, cfg.batch_size, T, rng)
        shaped, unshaped = _ltl_streams(ro, env, ldba, cfg)
        flags = ro.accepting_flags
        Gamma = np.stack([eventual_discount_weights(f, cfg.gamma_phi) for f in flags])
        stream = unshaped if cfg.shaping == "unshaped" else shaped
        r_hat = disc * ro.r_mdp + Gamma * cfg.lam * stream
        G = np.flip(np.cumsum(np.flip(r_hat, axis=1), axis=1), axis=1)

        obs = ro.obs.reshape(-1, policy.obs_dim)
        returns = G.reshape(-1) / scale
        v, _ = critic.forward(obs)
        adv = returns - v
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        batch = Batch(obs, ro.actions.reshape(len(obs), policy.act_dim), ro.options.reshape(-1),
                      ro.option_mask.reshape(-1, ro.option_mask.shape[2]), ro.logp.reshape(-1), adv, returns)
        N = len(obs)
        mb = max(1, N // cfg.minibatches)
        pl = vl = 0.0
        for _ in range(cfg.epochs):
            perm = rng.permutation(N)
            for k in range(0, N, mb):
                sub = batch.subset(perm[k:k + mb])
                pl, g = surrogate_loss(policy, sub, cfg.clip, cfg.entropy_coef)
                vl, gv = critic.loss_and_grad(sub.obs, sub.returns)
                if not (math.isfinite(pl) and math.isfinite(vl) and np.isfinite(g).all() and np.isfinite(gv).all()):
                    raise TrainingDivergedError(f"non-finite loss at iteration {it}")
                opt_pi.step(policy.theta, g)
                opt_v.step(critic.theta, gv)
        if not (np.isfinite(policy.theta).all() and np.isfinite(critic.theta).all()):
            raise TrainingDivergedError(f"non-finite parameters at iteration {it}")
        entry = IterationLog(
            iteration=it,
            episodes=(it + 1) * cfg.batch_size,
            ltl_unshaped=float((Gamma * unshaped).sum(axis=1).mean()),
            ltl_shaped=float((Gamma * shaped).sum(axis=1).mean()),
            mdp_return=float((disc * ro.r_mdp).sum(axis=1).mean()),
            accepting_visits=float(flags.sum(axis=1).mean()),
            policy_loss=float(pl),
            value_loss=float(vl),
            std=float(np.exp(policy.forward(obs[:1])[1]).mean()) if policy.act_dim else 0.0,
        )
        log.append(entry)
        if callback is not None:
            callback(entry)
    if log_path is not None:
        write_log(log, log_path)
    return policy, critic, log


def write_log(log: Sequence[IterationLog], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(IterationLog.FIELDS)
        for row in log:
            w.writerow([getattr(row, f) for f in IterationLog.FIELDS])


# --------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalResult:
    visits_mean: float
    visits_std: float
    mdp_mean: float
    mdp_std: float
    visits: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"schema": "cycler.eval/1", "accepting_visits_mean": self.visits_mean,
                "accepting_visits_std": self.visits_std, "r_mdp_mean": self.mdp_mean,
                "r_mdp_std": self.mdp_std, "visits": list(self.visits)}


def evaluate(policy: PolicyNet, env, ldba: LDBA, horizon: int = 360, n_rollouts: int = 10, seed: int = 0,
             greedy: bool = False) -> EvalResult:
    """Accepting visits and undiscounted MDP reward over seeded stochastic rollouts.

    ``policy`` may also be a plain callable ``(ProductState, rng) -> action``,
    which is rolled out one trajectory at a time.
    """
    if not isinstance(policy, PolicyNet):
        trajs = [rollout(policy, env, ldba, horizon, seed=seed + k) for k in range(n_rollouts)]
        visits = np.array([accepting_visits(t, ldba.accepting) for t in trajs])
        mdp = np.array([t.r_mdp.sum() for t in trajs])
    else:
        rng = np.random.default_rng(seed)
        ro = collect(policy, env, ldba, n_rollouts, horizon, rng, greedy=greedy)
        visits = ro.accepting_flags.sum(axis=1)
        mdp = ro.r_mdp.sum(axis=1)
    return EvalResult(float(visits.mean()), float(visits.std()), float(mdp.mean()), float(mdp.std()),
                      tuple(int(v) for v in visits))


# --------------------------------------------------------------------------
# checkpoints

CHECKPOINT_SCHEMA = "cycler.checkpoint/1"


def save_checkpoint(path, policy: PolicyNet, meta: dict | None = None) -> None:
    """One JSON header line followed by the raw little-endian float64 parameters."""
    header = {
        "schema": CHECKPOINT_SCHEMA,
        "policy": policy.spec(),
        "layout": [[n, list(s)] for n, s in policy.params.layout],
        "dtype": "<f8",
        "size": int(policy.theta.size),
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(policy.theta.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[PolicyNet, dict]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError("checkpoint header is missing")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {header.get('schema')!r}")
    theta = np.frombuffer(raw[nl + 1:], dtype=header["dtype"]).astype(float)
    if theta.size != header["size"]:
        raise ValueError("checkpoint is truncated")
    return PolicyNet(**header["policy"], theta=theta), header.get("meta", {})


def default_flatworld(bonus_seed: int = 0) -> FlatWorld:
    """FlatWorld with eight random bonus regions, as used by the training recipe."""
    return FlatWorld(FlatWorldConfig().with_random_bonus(bonus_seed))
