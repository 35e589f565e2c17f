#!/usr/bin/env python3

"""
teacher.py: Teacher policy and its PPO training loop.

The teacher sees privileged, noiseless observations. Two small encoders
compress the dense and sparse heightmaps into 20-dim latents, and an MLP maps
[o_p, l_d, l_s] to the mean of a diagonal Gaussian over the two action
components. A separate critic with the same shape estimates the state value.

Training alternates fixed-horizon rollouts over a vector of environments with
clipped-surrogate PPO updates:

    A_t = sum_k (gamma * lambda)^k * delta_{t+k},  delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t)
    L   = -E[min(rho A, clip(rho, 1 - eps, 1 + eps) A)] + c_v E[(V - R)^2] - c_e H

The learning rate adapts to the measured KL divergence between the rollout
policy and the updated policy.
"""

__author__ = "RoverNav Developers"
__copyright__ = "Copyright 2026, RoverNav Developers"
__credits__ = ["RoverNav Developers"]
__license__ = "CC BY-NC-SA 4.0"
__version__ = "1.0.0"
__maintainer__ = "RoverNav Developers"
__status__ = "Development"
__date__ = '17.10.2026'
__url__ = "https://github.com/rovernav/rovernav"

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from . import helper as hlp
from .nnkernel import (CheckpointMismatchError, Mlp, Network, adam_step, gaussian_entropy, gaussian_log_prob,
                       gaussian_log_prob_backward, gaussian_sample, load_checkpoint)
from .obs import ACTION_DIM, PROPRIO_DIM, ObservationBatch
from .simkin import TerminationCause, VecRoverEnv

logger = hlp.setup_logger(__name__)

METRICS_COLUMNS = ['iteration', 'env_steps', 'mean_return', 'success_rate', 'approx_kl', 'lr']


@dataclass(frozen=True)
class TeacherArch:
    """Layer widths of the teacher networks."""
    encoder_sizes: Tuple[int, ...] = (60, 20)
    trunk_sizes: Tuple[int, ...] = (512, 256, 128)
    init_log_std: float = 0.0

    def __post_init__(self):
        if not self.encoder_sizes or not self.trunk_sizes or \
                min(self.encoder_sizes) < 1 or min(self.trunk_sizes) < 1:
            raise ValueError("Encoder and trunk sizes must be non-empty lists of positive widths")

    @property
    def latent_dim(self) -> int:
        return self.encoder_sizes[-1]


@dataclass(frozen=True)
class PpoConfig:
    """PPO hyperparameters; defaults follow the reference training setup."""
    lr: float = 1e-4
    kl_threshold: float = 0.008
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    value_coef: float = 1.0
    entropy_coef: float = 0.0
    grad_clip_norm: float = 1.0
    horizon: int = 60
    adaptive_lr: bool = True
    lr_min: float = 1e-6
    lr_max: float = 1e-2

    def __post_init__(self):
        if not (0 < self.gamma <= 1 and 0 < self.lam <= 1):
            raise ValueError("gamma and lam must lie in (0, 1]")
        if self.lr <= 0 or self.kl_threshold <= 0 or self.clip <= 0:
            raise ValueError("lr, kl_threshold and clip must be positive")
        if self.epochs < 1 or self.minibatches < 1 or self.horizon < 1:
            raise ValueError("epochs, minibatches and horizon must be >= 1")
        if self.value_coef < 0 or self.entropy_coef < 0 or self.grad_clip_norm < 0:
            raise ValueError("value_coef, entropy_coef and grad_clip_norm must be non-negative")
        if not 0 < self.lr_min <= self.lr_max:
            raise ValueError("Require 0 < lr_min <= lr_max")


@dataclass
class TeacherOutput:
    mean: np.ndarray
    log_std: np.ndarray
    value: np.ndarray
    cache: Any = None


class TeacherNet(Network):
    """
    Actor-critic teacher. Parameter names are prefixed ``policy.`` (encoders,
    action MLP, log_std) and ``value.`` (critic encoders and MLP).
    """
    kind = 'teacher'

    def __init__(self, k_dense: int, k_sparse: int, arch: TeacherArch = TeacherArch(),
                 seed: int = 0, dtype=np.float32):
        super().__init__(dtype)
        self.k_dense, self.k_sparse, self.arch = int(k_dense), int(k_sparse), arch
        rng = np.random.default_rng(seed)
        enc, trunk = list(arch.encoder_sizes), list(arch.trunk_sizes)
        in_dim = PROPRIO_DIM + 2 * arch.latent_dim

        self.policy_dense = Mlp(self.store, 'policy.dense_encoder', [self.k_dense] + enc, rng,
                                output_activation='leaky_relu')
        self.policy_sparse = Mlp(self.store, 'policy.sparse_encoder', [self.k_sparse] + enc, rng,
                                 output_activation='leaky_relu')
        self.policy_mlp = Mlp(self.store, 'policy.mlp', [in_dim] + trunk + [ACTION_DIM], rng)
        self.store.add('policy.log_std', np.full(ACTION_DIM, arch.init_log_std))

        self.value_dense = Mlp(self.store, 'value.dense_encoder', [self.k_dense] + enc, rng,
                               output_activation='leaky_relu')
        self.value_sparse = Mlp(self.store, 'value.sparse_encoder', [self.k_sparse] + enc, rng,
                                output_activation='leaky_relu')
        self.value_mlp = Mlp(self.store, 'value.mlp', [in_dim] + trunk + [1], rng)

    def architecture(self) -> Dict[str, Any]:
        return {'k_dense': self.k_dense, 'k_sparse': self.k_sparse,
                'encoder_sizes': list(self.arch.encoder_sizes), 'trunk_sizes': list(self.arch.trunk_sizes),
                'init_log_std': self.arch.init_log_std}

    @property
    def policy_parameter_names(self) -> List[str]:
        return [n for n in self.store.names if n.startswith('policy.')]

    def _inputs(self, batch: ObservationBatch) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if batch.dense.shape[1] != self.k_dense or batch.sparse.shape[1] != self.k_sparse:
            raise ValueError(f"Observation dims ({batch.dense.shape[1]}, {batch.sparse.shape[1]}) do not match "
                             f"the network ({self.k_dense}, {self.k_sparse})")
        dt = self.store.dtype
        return batch.proprio.astype(dt), batch.dense.astype(dt), batch.sparse.astype(dt)

    def encode(self, dense: np.ndarray, sparse: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Latents (l_d, l_s) of the policy encoders."""
        dt = self.store.dtype
        l_d, _ = self.policy_dense.forward(np.asarray(dense, dtype=dt))
        l_s, _ = self.policy_sparse.forward(np.asarray(sparse, dtype=dt))
        return l_d, l_s

    def forward(self, batch: ObservationBatch) -> TeacherOutput:
        """Action mean, log_std and value for a batch of observations."""
        proprio, dense, sparse = self._inputs(batch)

        l_d, c_pd = self.policy_dense.forward(dense)
        l_s, c_ps = self.policy_sparse.forward(sparse)
        mean, c_pm = self.policy_mlp.forward(np.concatenate([proprio, l_d, l_s], axis=1))

        v_d, c_vd = self.value_dense.forward(dense)
        v_s, c_vs = self.value_sparse.forward(sparse)
        value, c_vm = self.value_mlp.forward(np.concatenate([proprio, v_d, v_s], axis=1))

        return TeacherOutput(mean=mean, log_std=self.store.values['policy.log_std'], value=value[:, 0],
                             cache=(c_pd, c_ps, c_pm, c_vd, c_vs, c_vm))

    def backward(self, cache, d_mean: Optional[np.ndarray] = None, d_log_std: Optional[np.ndarray] = None,
                 d_value: Optional[np.ndarray] = None) -> None:
        """Accumulate parameter gradients for upstream gradients of the three outputs."""
        c_pd, c_ps, c_pm, c_vd, c_vs, c_vm = cache
        latent = self.arch.latent_dim
        dt = self.store.dtype
        if d_mean is not None:
            dx = self.policy_mlp.backward(d_mean.astype(dt), c_pm)
            self.policy_dense.backward(dx[:, PROPRIO_DIM:PROPRIO_DIM + latent], c_pd)
            self.policy_sparse.backward(dx[:, PROPRIO_DIM + latent:], c_ps)
        if d_log_std is not None:
            self.store.accumulate('policy.log_std', d_log_std.astype(dt))
        if d_value is not None:
            dx = self.value_mlp.backward(d_value.astype(dt)[:, None], c_vm)
            self.value_dense.backward(dx[:, PROPRIO_DIM:PROPRIO_DIM + latent], c_vd)
            self.value_sparse.backward(dx[:, PROPRIO_DIM + latent:], c_vs)

    def act(self, batch: ObservationBatch) -> np.ndarray:
        """Deterministic action: the distribution mean clamped to [-1, 1]."""
        return np.clip(self.forward(batch).mean, -1.0, 1.0)

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path], dtype=np.float32) -> 'TeacherNet':
        _, manifest = load_checkpoint(path)
        if manifest.get('kind') != cls.kind:
            raise CheckpointMismatchError(f"{path}: expected a teacher checkpoint, found '{manifest.get('kind')}'")
        a = manifest['architecture']
        net = cls(a['k_dense'], a['k_sparse'],
                  TeacherArch(encoder_sizes=tuple(a['encoder_sizes']), trunk_sizes=tuple(a['trunk_sizes']),
                              init_log_std=a['init_log_std']), dtype=dtype)
        net.load_weights(path)
        return net


class RolloutBuffer:
    """Fixed-horizon storage of (obs, action, log_prob, value, reward, done) per step and env."""

    def __init__(self, horizon: int, num_envs: int, k_dense: int, k_sparse: int, dtype=np.float32):
        self.horizon, self.num_envs = horizon, num_envs
        self.proprio = np.zeros((horizon, num_envs, PROPRIO_DIM), dtype=dtype)
        self.dense = np.zeros((horizon, num_envs, k_dense), dtype=dtype)
        self.sparse = np.zeros((horizon, num_envs, k_sparse), dtype=dtype)
        self.actions = np.zeros((horizon, num_envs, ACTION_DIM), dtype=np.float64)
        self.log_probs = np.zeros((horizon, num_envs))
        self.values = np.zeros((horizon, num_envs))
        self.rewards = np.zeros((horizon, num_envs))
        self.dones = np.zeros((horizon, num_envs))
        self.last_value: Optional[np.ndarray] = None
        self.advantages: Optional[np.ndarray] = None
        self.returns: Optional[np.ndarray] = None
        self.step = 0

    @property
    def full(self) -> bool:
        return self.step == self.horizon

    def reset(self) -> None:
        self.step = 0
        self.last_value = self.advantages = self.returns = None

    def add(self, obs: ObservationBatch, actions: np.ndarray, log_probs: np.ndarray, values: np.ndarray,
            rewards: np.ndarray, dones: np.ndarray) -> None:
        if self.full:
            raise ValueError("RolloutBuffer is full")
        t = self.step
        self.proprio[t], self.dense[t], self.sparse[t] = obs.proprio, obs.dense, obs.sparse
        self.actions[t], self.log_probs[t], self.values[t] = actions, log_probs, values
        self.rewards[t], self.dones[t] = rewards, dones
        self.step += 1

    def flat(self) -> Dict[str, np.ndarray]:
        """Samples flattened over (step, env) in step-major order."""
        if self.advantages is None:
            raise ValueError("Advantages must be computed before flattening the buffer")
        n = self.horizon * self.num_envs
        return {'proprio': self.proprio.reshape(n, -1), 'dense': self.dense.reshape(n, -1),
                'sparse': self.sparse.reshape(n, -1), 'actions': self.actions.reshape(n, -1),
                'log_probs': self.log_probs.reshape(n), 'values': self.values.reshape(n),
                'advantages': self.advantages.reshape(n), 'returns': self.returns.reshape(n)}


def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray, last_value: np.ndarray,
        gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimation over arrays of shape (T, N).

    A done flag at step t cuts both the bootstrap and the advantage recursion.

    Returns:
        (advantages, returns) with returns = advantages + values
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    horizon = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    running = np.zeros_like(rewards[0])
    for t in reversed(range(horizon)):
        next_value = last_value if t == horizon - 1 else values[t + 1]
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * not_done - values[t]
        running = delta + gamma * lam * not_done * running
        advantages[t] = running
    return advantages, advantages + values


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Fill ``buffer.advantages`` and ``buffer.returns``.

    Raises:
        ValueError: If the buffer is not full or lacks the bootstrap value
    """
    if not buffer.full or buffer.last_value is None:
        raise ValueError(f"Incomplete buffer: {buffer.step}/{buffer.horizon} steps, "
                         f"bootstrap value {'missing' if buffer.last_value is None else 'present'}")
    buffer.advantages, buffer.returns = gae(buffer.rewards, buffer.values, buffer.dones,
                                            np.asarray(buffer.last_value, dtype=np.float64), gamma, lam)
    return buffer.advantages, buffer.returns


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Zero mean, unit std; a constant input maps to zeros."""
    centered = advantages - advantages.mean()
    std = centered.std()
    return centered / std if std > 1e-8 else centered


def kl_adaptive_lr(approx_kl: float, lr: float, kl_threshold: float,
                   lr_min: float = 1e-6, lr_max: float = 1e-2) -> float:
    """Shrink the learning rate above twice the KL threshold, grow it below half of it."""
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    if approx_kl > 2.0 * kl_threshold:
        lr = lr / 1.5
    elif approx_kl < 0.5 * kl_threshold:
        lr = lr * 1.5
    return float(min(lr_max, max(lr_min, lr)))


@dataclass
class PpoStats:
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_frac: float
    lr: float
    epoch_kls: List[float] = field(default_factory=list)
    minibatch_clip_fracs: List[float] = field(default_factory=list)
    minibatch_ratio_dev: List[float] = field(default_factory=list)


def ppo_minibatch_loss(net: TeacherNet, batch: Dict[str, np.ndarray], config: PpoConfig
                       ) -> Dict[str, Any]:
    """
    Clipped-surrogate loss of one minibatch with gradients accumulated into ``net.store``.

    Advantages in ``batch`` must already be normalized.

    Raises:
        FloatingPointError: If the loss is not finite
    """
    obs = ObservationBatch(batch['proprio'], batch['dense'], batch['sparse'])
    out = net.forward(obs)
    mean = out.mean.astype(np.float64)
    log_std = out.log_std.astype(np.float64)
    value = out.value.astype(np.float64)
    actions, old_logp = batch['actions'], batch['log_probs']
    adv, returns = batch['advantages'], batch['returns']
    n = len(adv)

    new_logp = gaussian_log_prob(mean, log_std, actions)
    log_ratio = new_logp - old_logp
    ratio = np.exp(log_ratio)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - config.clip, 1.0 + config.clip) * adv
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
    value_loss = float(np.mean((value - returns) ** 2))
    entropy = gaussian_entropy(log_std)
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy
    if not np.isfinite(loss):
        raise FloatingPointError(f"Non-finite PPO loss: policy={policy_loss}, value={value_loss}, "
                                 f"entropy={entropy}, max|log_ratio|={np.max(np.abs(log_ratio))}")

    d_logp = np.where(surr1 <= surr2, -adv / n, 0.0) * ratio
    d_mean, d_log_std = gaussian_log_prob_backward(mean, log_std, actions, d_logp)
    d_log_std = d_log_std - config.entropy_coef
    d_value = config.value_coef * 2.0 * (value - returns) / n
    net.backward(out.cache, d_mean=d_mean, d_log_std=d_log_std, d_value=d_value)

    return {'policy_loss': policy_loss, 'value_loss': value_loss, 'entropy': entropy,
            'approx_kl': float(np.mean(old_logp - new_logp)),
            'clip_frac': float(np.mean(np.abs(ratio - 1.0) > config.clip)),
            'ratio_dev': float(np.max(np.abs(ratio - 1.0)))}


def ppo_update(net: TeacherNet, buffer: RolloutBuffer, config: PpoConfig, rng: np.random.Generator,
               lr: Optional[float] = None) -> PpoStats:
    """
    Run ``epochs`` passes of ``minibatches`` shuffled minibatches over the buffer.

    Args:
        net: Teacher network (updated in place)
        buffer: Buffer with computed advantages
        config: PPO hyperparameters
        rng: Generator for the minibatch permutation
        lr: Current learning rate (default: ``config.lr``)

    Returns:
        PpoStats with means over all minibatches and the adapted learning rate
    """
    lr = config.lr if lr is None else lr
    data = buffer.flat()
    data['advantages'] = normalize_advantages(data['advantages'])
    n = len(data['advantages'])
    size = max(1, n // config.minibatches)

    totals = {'policy_loss': [], 'value_loss': [], 'entropy': []}
    epoch_kls, clip_fracs, ratio_devs = [], [], []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        kls = []
        for k in range(config.minibatches):
            idx = order[k * size:(k + 1) * size] if k < config.minibatches - 1 else order[k * size:]
            if idx.size == 0:
                continue
            stats = ppo_minibatch_loss(net, {key: value[idx] for key, value in data.items()}, config)
            net.store.clip_grad_norm(config.grad_clip_norm)
            adam_step(net.store, lr)
            for key in totals:
                totals[key].append(stats[key])
            kls.append(stats['approx_kl'])
            clip_fracs.append(stats['clip_frac'])
            ratio_devs.append(stats['ratio_dev'])
        epoch_kl = float(np.mean(kls))
        epoch_kls.append(epoch_kl)
        if config.adaptive_lr:
            lr = kl_adaptive_lr(epoch_kl, lr, config.kl_threshold, config.lr_min, config.lr_max)

    return PpoStats(policy_loss=float(np.mean(totals['policy_loss'])),
                    value_loss=float(np.mean(totals['value_loss'])),
                    entropy=float(np.mean(totals['entropy'])),
                    approx_kl=epoch_kls[-1], clip_frac=float(np.mean(clip_fracs)), lr=lr,
                    epoch_kls=epoch_kls, minibatch_clip_fracs=clip_fracs, minibatch_ratio_dev=ratio_devs)


@dataclass
class TeacherRun:
    checkpoint: Path
    metrics_csv: Path
    iterations: int
    env_steps: int
    lr: float


def train_teacher(env: VecRoverEnv, net: TeacherNet, config: PpoConfig, total_steps: int,
                  out_dir: Union[str, Path], seed: int = 0, domain_rand: bool = False,
                  checkpoint_interval: int = 50, manifest_extra: Optional[Dict[str, Any]] = None) -> TeacherRun:
    """
    Train the teacher with alternating rollouts and PPO updates.

    Writes ``teacher.ckpt`` (+ manifest), periodic checkpoints under
    ``checkpoints/`` and ``metrics.csv`` with one row per iteration. On an
    exception a ``teacher_crash.ckpt`` is flushed before re-raising.

    Args:
        env: Vector environment (its noise config is used when ``domain_rand``)
        net: Teacher network
        config: PPO hyperparameters
        total_steps: Env-step budget; the number of iterations is total_steps // (num_envs * horizon)
        out_dir: Run directory
        seed: Seed of the policy sampling and minibatch streams
        domain_rand: Feed noisy heightmaps to the networks
        checkpoint_interval: Iterations between periodic checkpoints (0 disables)
        manifest_extra: Extra fields for the checkpoint manifests

    Returns:
        TeacherRun
    """
    out_dir = Path(out_dir)
    (out_dir / 'checkpoints').mkdir(parents=True, exist_ok=True)
    metrics_csv = out_dir / 'metrics.csv'
    pd.DataFrame(columns=METRICS_COLUMNS).to_csv(metrics_csv, index=False)
    extra = dict(manifest_extra or {})
    extra.update({'seed': seed, 'domain_rand': domain_rand})

    if domain_rand and env.noise is None:
        raise ValueError("domain_rand requires an environment with a noise config")

    n_envs = env.num_envs
    steps_per_iteration = n_envs * config.horizon
    iterations = total_steps // steps_per_iteration
    streams = np.random.SeedSequence([seed, 1]).spawn(n_envs + 1)
    policy_rngs = [np.random.default_rng(s) for s in streams[:n_envs]]
    update_rng = np.random.default_rng(streams[-1])
    buffer = RolloutBuffer(config.horizon, n_envs, net.k_dense, net.k_sparse, dtype=net.store.dtype)
    lr = config.lr
    env_steps = 0

    def observe() -> ObservationBatch:
        return env.noisy_observation_batch() if domain_rand else env.observation_batch()

    net.save(out_dir / 'checkpoints' / 'teacher_iter_0000.ckpt', iteration=0, env_steps=0, lr=lr, **extra)
    logger.info(f"[STEP] Training teacher: {iterations} iterations x {steps_per_iteration} env steps "
                f"({n_envs} envs, domain_rand={domain_rand})")

    iteration = 0
    try:
        obs = observe()
        for iteration in range(1, iterations + 1):
            buffer.reset()
            completed = []
            for _ in range(config.horizon):
                out = net.forward(obs)
                mean = out.mean.astype(np.float64)
                log_std = out.log_std.astype(np.float64)
                actions = gaussian_sample(mean, log_std, policy_rngs)
                log_probs = gaussian_log_prob(mean, log_std, actions)
                step = env.step(np.clip(actions, -1.0, 1.0))
                buffer.add(obs, actions, log_probs, out.value, step.rewards, step.dones)
                completed.extend(step.completed)
                obs = observe()
            buffer.last_value = net.forward(obs).value.astype(np.float64)
            compute_gae(buffer, config.gamma, config.lam)
            stats = ppo_update(net, buffer, config, update_rng, lr)
            lr = stats.lr
            env_steps += steps_per_iteration

            returns = [c.episode_return for c in completed]
            mean_return = float(np.mean(returns)) if returns else float('nan')
            success = float(np.mean([c.cause == TerminationCause.GOAL_REACHED for c in completed])) \
                if completed else float('nan')
            row = pd.DataFrame([[iteration, env_steps, mean_return, success, stats.approx_kl, lr]],
                               columns=METRICS_COLUMNS)
            row.to_csv(metrics_csv, mode='a', header=False, index=False)
            logger.info(f"iter {iteration:5d} | steps {env_steps:9d} | return {mean_return:8.3f} | "
                        f"success {success:.3f} | kl {stats.approx_kl:.5f} | lr {lr:.2e}")

            if checkpoint_interval and iteration % checkpoint_interval == 0:
                net.save(out_dir / 'checkpoints' / f'teacher_iter_{iteration:04d}.ckpt',
                         iteration=iteration, env_steps=env_steps, lr=lr, **extra)
    except Exception:
        crash = net.save(out_dir / 'teacher_crash.ckpt', iteration=iteration, env_steps=env_steps,
                         lr=lr, **extra)
        logger.error(f"Teacher training failed at iteration {iteration}; flushed {crash}")
        raise

    checkpoint = net.save(out_dir / 'teacher.ckpt', iteration=iterations, env_steps=env_steps, lr=lr, **extra)
    logger.info(f"✓ Teacher training finished: {env_steps} env steps, checkpoint {checkpoint}")
    return TeacherRun(checkpoint=checkpoint, metrics_csv=metrics_csv, iterations=iterations,
                      env_steps=env_steps, lr=lr)
