"""PPO pieces: action sampling, GAE, the clipped loss with its exact gradient, and the update."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import Adam, PolicyParams

INCREASE, NO_CHANGE, DECREASE = 0, 1, 2
ACTIONS = ("Increase", "NoChange", "Decrease")


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    c1: float = 0.5
    c2: float = 0.01
    epochs: int = 4
    lr: float = 3e-4
    target_kl: float = 0.015
    max_iterations: int = 30
    tolerance: float = 0.01
    delta_base: float = 0.05
    patience: int = 3  # consecutive quiet iterations that count as converged
    hidden: tuple = (64, 64)

    def __post_init__(self):
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must be in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must be in [0, 1]")
        for name in ("c1", "lr", "target_kl", "tolerance", "delta_base"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.c2 < 0:
            raise ValueError("c2 must be nonnegative")
        if self.epochs < 1 or self.max_iterations < 1 or self.patience < 1:
            raise ValueError("epochs, max_iterations and patience must be >= 1")


@dataclass(frozen=True)
class AgentExperience:
    state: np.ndarray  # 4-vector (gini, c_norm, u_norm, u_dev)
    action: int
    reward: float
    value: float
    log_prob: float

    def __post_init__(self):
        if self.action not in (INCREASE, NO_CHANGE, DECREASE):
            raise ValueError(f"action must be 0, 1 or 2, got {self.action}")
        if self.log_prob > 0:
            raise ValueError("log_prob must be <= 0")


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def policy(params: PolicyParams, states) -> tuple[np.ndarray, np.ndarray]:
    """(log-probabilities n x 3, values n)."""
    logits = params.actor(states)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("actor produced non-finite logits")
    return log_softmax(logits), params.critic(states)[:, 0]


def act(params: PolicyParams, state, rng: np.random.Generator) -> tuple[int, float, float]:
    state = np.asarray(state, dtype=float)
    if not np.all(np.isfinite(state)):
        raise ValueError(f"non-finite state {state}")
    logp, value = policy(params, state[None, :])
    probs = np.exp(logp[0])
    a = int(rng.choice(len(probs), p=probs / probs.sum()))
    return a, float(logp[0, a]), float(value[0])


def entropy(logp: np.ndarray) -> np.ndarray:
    return -(np.exp(logp) * logp).sum(axis=-1)


def kl_divergence(logp_old: np.ndarray, logp_new: np.ndarray) -> float:
    """Mean KL(old || new) of the categorical policies over the batch states."""
    return float(np.mean((np.exp(logp_old) * (logp_old - logp_new)).sum(axis=-1)))


def gae(rewards, values, bootstrap_value: float = 0.0, gamma: float = 0.99, lam: float = 0.95):
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    if r.shape != v.shape or r.ndim != 1 or r.size < 1:
        raise ValueError("rewards and values must be equal-length nonempty series")
    adv = np.zeros_like(r)
    running = 0.0
    next_v = bootstrap_value
    for t in range(r.size - 1, -1, -1):
        delta = r[t] + gamma * next_v - v[t]
        running = delta + gamma * lam * running
        adv[t] = running
        next_v = v[t]
    return adv, adv + v


def normalize(adv: np.ndarray) -> np.ndarray:
    centred = adv - adv.mean()
    std = centred.std()
    return centred / std if std > 1e-12 else np.zeros_like(adv)


@dataclass
class Batch:
    states: np.ndarray  # n x 4
    actions: np.ndarray  # n ints
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    @classmethod
    def from_experience(cls, experience, config: PpoConfig, bootstrap_value: float = 0.0) -> "Batch":
        if not experience:
            raise ValueError("empty batch")
        rewards = np.array([e.reward for e in experience])
        values = np.array([e.value for e in experience])
        adv, ret = gae(rewards, values, bootstrap_value, config.gamma, config.gae_lambda)
        return cls(
            states=np.vstack([np.asarray(e.state, dtype=float) for e in experience]),
            actions=np.array([e.action for e in experience], dtype=int),
            old_log_probs=np.array([e.log_prob for e in experience]),
            advantages=normalize(adv),
            returns=ret,
        )


def loss_terms(params: PolicyParams, batch: Batch, config: PpoConfig) -> dict:
    return loss_and_grad(params, batch, config)[0]


def loss_and_grad(params: PolicyParams, batch: Batch, config: PpoConfig) -> tuple[dict, np.ndarray]:
    """Combined loss (minimised) and its gradient w.r.t. ``params.flat()``."""
    a_out, a_acts = params.actor.forward(batch.states)
    c_out, c_acts = params.critic.forward(batch.states)
    logp = log_softmax(a_out)
    if not np.all(np.isfinite(logp)):
        raise FloatingPointError("actor produced non-finite logits")
    probs = np.exp(logp)
    n = len(batch.actions)
    idx = np.arange(n)
    onehot = np.zeros_like(probs)
    onehot[idx, batch.actions] = 1.0

    ratio = np.exp(logp[idx, batch.actions] - batch.old_log_probs)
    A = batch.advantages
    eps = config.clip_eps
    # the unclipped branch carries the gradient unless the clip is binding
    unclipped = ~(((A > 0) & (ratio > 1 + eps)) | ((A < 0) & (ratio < 1 - eps)))
    surr = np.minimum(ratio * A, np.clip(ratio, 1 - eps, 1 + eps) * A)
    H = entropy(logp)
    v = c_out[:, 0]
    terms = {
        "clip": float(surr.mean()),
        "value": float(np.mean((v - batch.returns) ** 2)),
        "entropy": float(H.mean()),
    }
    terms["loss"] = -terms["clip"] + config.c1 * terms["value"] - config.c2 * terms["entropy"]
    for name, val in terms.items():
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite {name} term in PPO loss")

    d_ratio = np.where(unclipped, -A / n, 0.0)
    g_logits = (d_ratio * ratio)[:, None] * (onehot - probs)
    # dH/dz_k = -pi_k (log pi_k + H)
    g_logits += (config.c2 / n) * probs * (logp + H[:, None])
    g_v = (2.0 * config.c1 / n) * (v - batch.returns)

    ga = params.actor.backward(a_acts, g_logits)
    gc = params.critic.backward(c_acts, g_v[:, None])
    return terms, np.concatenate([ga.flat(), gc.flat()])


@dataclass
class UpdateDiagnostics:
    kl: float
    clip: float
    value: float
    entropy: float
    loss: float
    epochs_run: int
    stopped_early: bool
    kl_per_epoch: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kl": self.kl, "clip": self.clip, "value": self.value, "entropy": self.entropy,
            "loss": self.loss, "epochs_run": self.epochs_run, "stopped_early": self.stopped_early,
        }


def ppo_update(params: PolicyParams, batch: Batch | list, config: PpoConfig,
               optimizer: Adam | None = None) -> tuple[PolicyParams, UpdateDiagnostics]:
    """Up to ``config.epochs`` full-batch Adam steps; stops once KL(old||new) exceeds the target."""
    if not isinstance(batch, Batch):
        batch = Batch.from_experience(batch, config)
    if not params.is_finite():
        raise FloatingPointError("non-finite parameters before update")
    optimizer = optimizer or Adam(params.flat().size, lr=config.lr)
    logp_old, _ = policy(params, batch.states)
    first = None
    x = params.flat()
    current = params
    kl, kls, stopped = 0.0, [], False
    for epoch in range(config.epochs):
        terms, grad = loss_and_grad(current, batch, config)
        if first is None:
            first = terms
        x = optimizer.step(x, grad)
        current = params.with_flat(x)
        kl = kl_divergence(logp_old, policy(current, batch.states)[0])
        kls.append(kl)
        if kl > config.target_kl:
            stopped = True
            break
    return current, UpdateDiagnostics(kl=kl, epochs_run=len(kls), stopped_early=stopped,
                                      kl_per_epoch=kls, **first)
