#!/usr/bin/env python3

"""
student.py: Recurrent student policy and its distillation from teacher data.

The student only sees noisy heightmaps. Its belief encoder accumulates
evidence over time and decides, per latent component, how much of the raw
(noisy) encoder output to trust:

    l_d = e_d(dense), l_s = e_s(sparse)
    x', h_t = GRU([o_p, l_s, l_d], h_{t-1})
    AG = sigmoid(e_a(x'))
    x_t = e_b(x') + [l_s, l_d] * AG
    a_t = mlp(o_p, x_t)

The student is deterministic and trained by supervised imitation: the squared
L2 distance between its action and the logged teacher action, averaged over
all steps of a batch of sequences, with backpropagation through time over each
sequence. Hidden states start at zero at every sequence start and are reset
after every done flag.
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

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import helper as hlp
from .dataset import SequenceBatch, ShardReader, sequence_iter, split_streams
from .nnkernel import CheckpointMismatchError, Gru, Mlp, Network, adam_step, load_checkpoint
from .noise import NoiseConfig, apply_noise, draw_episode_noise
from .obs import ACTION_DIM, PROPRIO_DIM, ObservationBatch

logger = hlp.setup_logger(__name__)

LOSS_COLUMNS = ['epoch', 'train_loss', 'val_loss', 'lr', 'best']


@dataclass(frozen=True)
class StudentArch:
    """Layer widths of the student network."""
    encoder_sizes: Tuple[int, ...] = (60, 20)
    gru_hidden: int = 256
    gru_layers: int = 2
    gate_sizes: Tuple[int, ...] = (128, 256, 512, 1024, 40)
    trunk_sizes: Tuple[int, ...] = (512, 256, 128)

    def __post_init__(self):
        if self.gru_hidden < 1 or self.gru_layers < 1:
            raise ValueError("gru_hidden and gru_layers must be >= 1")
        if not self.encoder_sizes or not self.gate_sizes or not self.trunk_sizes:
            raise ValueError("encoder_sizes, gate_sizes and trunk_sizes must be non-empty")
        if self.gate_sizes[-1] != 2 * self.encoder_sizes[-1]:
            raise ValueError(f"Gate output width {self.gate_sizes[-1]} must equal the concatenated latent "
                             f"width {2 * self.encoder_sizes[-1]}")

    @property
    def latent_dim(self) -> int:
        return self.encoder_sizes[-1]

    @property
    def belief_dim(self) -> int:
        return 2 * self.encoder_sizes[-1]


@dataclass
class BeliefState:
    """Per-layer GRU hidden states and the last belief vector of a batch of rovers."""
    hidden: List[np.ndarray]
    belief: np.ndarray

    def reset(self, mask: np.ndarray) -> None:
        """Zero the rows selected by the boolean ``mask`` (episode starts)."""
        mask = np.asarray(mask, dtype=bool)
        for h in self.hidden:
            h[mask] = 0.0
        self.belief[mask] = 0.0


@dataclass
class _StepCache:
    enc_dense: Any
    enc_sparse: Any
    gru: Any
    attention: Any
    belief: Any
    mlp: Any
    latent: np.ndarray
    gate: np.ndarray
    hidden_mask: Optional[np.ndarray]


class StudentNet(Network):
    """Student policy: heightmap encoders, GRU belief encoder with attention gate and action MLP."""
    kind = 'student'

    def __init__(self, k_dense: int, k_sparse: int, arch: StudentArch = StudentArch(),
                 seed: int = 0, dtype=np.float32):
        super().__init__(dtype)
        self.k_dense, self.k_sparse, self.arch = int(k_dense), int(k_sparse), arch
        rng = np.random.default_rng(seed)
        enc, gate = list(arch.encoder_sizes), list(arch.gate_sizes)

        self.dense_encoder = Mlp(self.store, 'dense_encoder', [self.k_dense] + enc, rng,
                                 output_activation='leaky_relu')
        self.sparse_encoder = Mlp(self.store, 'sparse_encoder', [self.k_sparse] + enc, rng,
                                  output_activation='leaky_relu')
        self.gru = Gru(self.store, 'belief_gru', PROPRIO_DIM + arch.belief_dim, arch.gru_hidden,
                       arch.gru_layers, rng)
        self.attention = Mlp(self.store, 'attention', [arch.gru_hidden] + gate, rng, output_activation='sigmoid')
        self.belief = Mlp(self.store, 'belief', [arch.gru_hidden] + gate, rng)
        self.mlp = Mlp(self.store, 'policy_mlp', [PROPRIO_DIM + arch.belief_dim] + list(arch.trunk_sizes)
                       + [ACTION_DIM], rng)

    def architecture(self) -> Dict[str, Any]:
        a = self.arch
        return {'k_dense': self.k_dense, 'k_sparse': self.k_sparse, 'encoder_sizes': list(a.encoder_sizes),
                'gru_hidden': a.gru_hidden, 'gru_layers': a.gru_layers, 'gate_sizes': list(a.gate_sizes),
                'trunk_sizes': list(a.trunk_sizes)}

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path], dtype=np.float32) -> 'StudentNet':
        _, manifest = load_checkpoint(path)
        if manifest.get('kind') != cls.kind:
            raise CheckpointMismatchError(f"{path}: expected a student checkpoint, found '{manifest.get('kind')}'")
        a = manifest['architecture']
        arch = StudentArch(encoder_sizes=tuple(a['encoder_sizes']), gru_hidden=a['gru_hidden'],
                           gru_layers=a['gru_layers'], gate_sizes=tuple(a['gate_sizes']),
                           trunk_sizes=tuple(a['trunk_sizes']))
        net = cls(a['k_dense'], a['k_sparse'], arch, dtype=dtype)
        net.load_weights(path)
        return net

    def initial_state(self, batch: int) -> BeliefState:
        return BeliefState(hidden=self.gru.initial_state(batch),
                           belief=np.zeros((batch, self.arch.belief_dim), dtype=self.store.dtype))

    def encode(self, dense: np.ndarray, sparse: np.ndarray) -> Tuple[np.ndarray, np.ndarray, Tuple]:
        """Latents (l_d, l_s) and their caches."""
        if dense.shape[-1] != self.k_dense or sparse.shape[-1] != self.k_sparse:
            raise ValueError(f"Heightmap dims ({dense.shape[-1]}, {sparse.shape[-1]}) do not match "
                             f"the network ({self.k_dense}, {self.k_sparse})")
        dt = self.store.dtype
        l_d, c_d = self.dense_encoder.forward(np.asarray(dense, dtype=dt))
        l_s, c_s = self.sparse_encoder.forward(np.asarray(sparse, dtype=dt))
        return l_d, l_s, (c_d, c_s)

    def belief_forward(self, proprio: np.ndarray, l_s: np.ndarray, l_d: np.ndarray,
                       hidden: Sequence[np.ndarray]) -> Tuple[np.ndarray, List[np.ndarray], Tuple]:
        """
        One step of the belief encoder.

        Args:
            proprio: (B, 4) proprioceptive input
            l_s: (B, 20) sparse latent of the noisy heightmap
            l_d: (B, 20) dense latent of the noisy heightmap
            hidden: GRU hidden state per layer

        Returns:
            (belief x_t, new hidden states, cache)
        """
        latent = np.concatenate([l_s, l_d], axis=1)
        if latent.shape[1] != self.arch.belief_dim or proprio.shape[1] != PROPRIO_DIM:
            raise ValueError(f"Belief input dims ({proprio.shape[1]}, {latent.shape[1]}) do not match "
                             f"({PROPRIO_DIM}, {self.arch.belief_dim})")
        gru_in = np.concatenate([np.asarray(proprio, dtype=self.store.dtype), latent], axis=1)
        top, new_hidden, c_gru = self.gru.step(gru_in, hidden)
        gate, c_att = self.attention.forward(top)
        base, c_bel = self.belief.forward(top)
        return base + latent * gate, new_hidden, (c_gru, c_att, c_bel, latent, gate)

    def step(self, proprio: np.ndarray, dense: np.ndarray, sparse: np.ndarray,
             hidden: Sequence[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, List[np.ndarray], _StepCache]:
        """Unclamped action, belief, new hidden state and cache of one time step."""
        proprio = np.asarray(proprio, dtype=self.store.dtype)
        l_d, l_s, (c_d, c_s) = self.encode(dense, sparse)
        belief, new_hidden, (c_gru, c_att, c_bel, latent, gate) = self.belief_forward(proprio, l_s, l_d, hidden)
        action, c_mlp = self.mlp.forward(np.concatenate([proprio, belief], axis=1))
        cache = _StepCache(enc_dense=c_d, enc_sparse=c_s, gru=c_gru, attention=c_att, belief=c_bel,
                           mlp=c_mlp, latent=latent, gate=gate, hidden_mask=None)
        return action, belief, new_hidden, cache

    def unroll(self, proprio: np.ndarray, dense: np.ndarray, sparse: np.ndarray,
               done: Optional[np.ndarray] = None, state: Optional[BeliefState] = None
               ) -> Tuple[np.ndarray, np.ndarray, BeliefState, List[_StepCache]]:
        """
        Run the network over (B, T, ...) sequences.

        The hidden state of a row is reset after a step whose done flag is set.

        Returns:
            (unclamped actions (B, T, 2), beliefs (B, T, 40), final state, caches)
        """
        batch, steps = proprio.shape[:2]
        state = state or self.initial_state(batch)
        hidden = state.hidden
        actions = np.zeros((batch, steps, ACTION_DIM), dtype=self.store.dtype)
        beliefs = np.zeros((batch, steps, self.arch.belief_dim), dtype=self.store.dtype)
        caches: List[_StepCache] = []
        mask = None
        for t in range(steps):
            if mask is not None:
                hidden = [h * mask for h in hidden]
            action, belief, hidden, cache = self.step(proprio[:, t], dense[:, t], sparse[:, t], hidden)
            cache.hidden_mask = mask
            actions[:, t], beliefs[:, t] = action, belief
            caches.append(cache)
            mask = None if done is None else (1.0 - done[:, t].astype(self.store.dtype))[:, None]
        final = BeliefState(hidden=[h * mask for h in hidden] if mask is not None else hidden,
                            belief=beliefs[:, -1].copy())
        return actions, beliefs, final, caches

    def backward(self, caches: Sequence[_StepCache], d_actions: np.ndarray,
                 d_beliefs: Optional[np.ndarray] = None) -> None:
        """
        Backpropagation through time over an ``unroll``.

        Args:
            caches: Caches returned by ``unroll``
            d_actions: (B, T, 2) gradient w.r.t. the unclamped actions
            d_beliefs: Optional (B, T, 40) gradient w.r.t. the beliefs
        """
        dt = self.store.dtype
        L = self.arch.latent_dim
        d_hidden = [np.zeros((d_actions.shape[0], self.arch.gru_hidden), dtype=dt)
                    for _ in range(self.arch.gru_layers)]
        for t in reversed(range(len(caches))):
            c = caches[t]
            d_in = self.mlp.backward(d_actions[:, t].astype(dt), c.mlp)
            d_x = d_in[:, PROPRIO_DIM:]
            if d_beliefs is not None:
                d_x = d_x + d_beliefs[:, t].astype(dt)

            d_top = self.attention.backward(d_x * c.latent, c.attention)
            d_top = d_top + self.belief.backward(d_x, c.belief)
            d_gru_in, d_prev = self.gru.step_backward(d_top, d_hidden, c.gru)

            d_latent = d_gru_in[:, PROPRIO_DIM:] + d_x * c.gate
            self.sparse_encoder.backward(d_latent[:, :L], c.enc_sparse)
            self.dense_encoder.backward(d_latent[:, L:], c.enc_dense)

            d_hidden = d_prev if c.hidden_mask is None else [d * c.hidden_mask for d in d_prev]


def student_forward(net: StudentNet, obs: ObservationBatch, state: Optional[BeliefState] = None
                    ) -> Tuple[np.ndarray, BeliefState]:
    """
    Deterministic student action for a batch of (noisy) observations.

    Args:
        net: Student network
        obs: Observations, one row per rover
        state: Belief state of the previous step (zeros when omitted)

    Returns:
        (actions clamped to [-1, 1], new belief state)
    """
    state = state or net.initial_state(len(obs))
    action, belief, hidden, _ = net.step(obs.proprio, obs.dense, obs.sparse, state.hidden)
    return np.clip(action, -1.0, 1.0), BeliefState(hidden=hidden, belief=belief)


def warm_start_encoders(student: StudentNet, teacher_checkpoint: Union[str, Path]) -> List[str]:
    """Copy the teacher's policy encoders into the student; returns the loaded parameter names."""
    tensors, manifest = load_checkpoint(teacher_checkpoint)
    if manifest.get('kind') != 'teacher':
        raise CheckpointMismatchError(f"{teacher_checkpoint}: warm start needs a teacher checkpoint")
    encoders = {name: value for name, value in tensors.items()
                if name.startswith(('policy.dense_encoder.', 'policy.sparse_encoder.'))}
    loaded = student.store.load_state_dict(encoders, strict=False,
                                           prefix_map={'policy.dense_encoder.': 'dense_encoder.',
                                                       'policy.sparse_encoder.': 'sparse_encoder.'})
    logger.info(f"ℹ Warm-started {len(loaded)} encoder tensors from {teacher_checkpoint}")
    return loaded


@dataclass(frozen=True)
class StudentTrainConfig:
    """Distillation hyperparameters."""
    seq_len: int = 30
    batch_size: int = 64
    lr: float = 3e-4
    epochs: int = 50
    patience: int = 5
    min_delta: float = 1e-5
    val_fraction: float = 0.1
    grad_clip_norm: float = 1.0
    latent_loss_weight: float = 0.0
    warm_start: bool = False
    max_batches_per_epoch: Optional[int] = None

    def __post_init__(self):
        if self.seq_len < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("seq_len and batch_size must be >= 1 and epochs >= 0")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.patience < 0 or self.min_delta < 0 or self.grad_clip_norm < 0 or self.latent_loss_weight < 0:
            raise ValueError("patience, min_delta, grad_clip_norm and latent_loss_weight must be non-negative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")


def noisy_batch(batch: SequenceBatch, noise: Optional[NoiseConfig], rng: np.random.Generator) -> SequenceBatch:
    """
    Copy of a sequence batch with heightmap noise applied.

    Each sequence draws one episode mode (and offset); the per-point noise and
    the zeroed points are drawn anew for every step.
    """
    if noise is None or noise.is_identity:
        return batch
    dense = np.empty_like(batch.dense)
    sparse = np.empty_like(batch.sparse)
    for b in range(len(batch)):
        episode = draw_episode_noise(noise, rng)
        dense[b] = apply_noise(batch.dense[b], episode, rng)
        sparse[b] = apply_noise(batch.sparse[b], episode, rng)
    return SequenceBatch(proprio=batch.proprio, dense=dense, sparse=sparse, action=batch.action,
                         done=batch.done, index=batch.index)


def imitation_loss(actions: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean squared L2 action error over all (sequence, step) pairs and its gradient."""
    diff = actions.astype(np.float64) - targets.astype(np.float64)
    count = diff.shape[0] * diff.shape[1]
    return float(np.sum(diff * diff) / count), 2.0 * diff / count


def latent_targets(teacher, batch: SequenceBatch) -> np.ndarray:
    """Clean teacher latents [l_s, l_d] for every step of a batch."""
    B, T = batch.proprio.shape[:2]
    l_d, l_s = teacher.encode(batch.dense.reshape(B * T, -1), batch.sparse.reshape(B * T, -1))
    return np.concatenate([l_s, l_d], axis=1).reshape(B, T, -1)


def distillation_step(net: StudentNet, batch: SequenceBatch, noise: Optional[NoiseConfig],
                      rng: np.random.Generator, config: StudentTrainConfig, lr: float,
                      teacher=None) -> float:
    """
    One Adam step on one batch; returns the action loss.

    Raises:
        FloatingPointError: If the loss is not finite
    """
    noisy = noisy_batch(batch, noise, rng)
    actions, beliefs, _, caches = net.unroll(noisy.proprio, noisy.dense, noisy.sparse, noisy.done)
    loss, d_actions = imitation_loss(actions, batch.action)
    d_beliefs = None
    if config.latent_loss_weight > 0 and teacher is not None:
        diff = beliefs.astype(np.float64) - latent_targets(teacher, batch)
        aux = float(np.mean(diff * diff))
        loss_total = loss + config.latent_loss_weight * aux
        d_beliefs = config.latent_loss_weight * 2.0 * diff / diff.size
    else:
        loss_total = loss
    if not math.isfinite(loss_total):
        raise FloatingPointError(f"Non-finite distillation loss {loss_total} on batch of {len(batch)} "
                                 f"sequences (first index {batch.index[0].tolist()})")
    net.backward(caches, d_actions, d_beliefs)
    net.store.clip_grad_norm(config.grad_clip_norm)
    adam_step(net.store, lr)
    return loss


def evaluate_loss(net: StudentNet, readers: Sequence[ShardReader], streams, noise: Optional[NoiseConfig],
                  config: StudentTrainConfig, seed: int) -> float:
    """Mean action loss over one pass of the given streams with a fixed noise stream."""
    rng = np.random.default_rng(seed)
    total = count = 0.0
    for batch in sequence_iter(readers, config.seq_len, config.batch_size, rng, streams=streams,
                               max_batches=config.max_batches_per_epoch):
        noisy = noisy_batch(batch, noise, rng)
        actions, _, _, _ = net.unroll(noisy.proprio, noisy.dense, noisy.sparse, noisy.done)
        loss, _ = imitation_loss(actions, batch.action)
        total += loss * len(batch)
        count += len(batch)
    return total / count if count else float('nan')


@dataclass
class StudentRun:
    checkpoint: Path
    loss_csv: Path
    epochs_run: int
    best_epoch: int
    best_loss: float
    stopped_early: bool


def train_student(net: StudentNet, readers: Sequence[ShardReader], noise: Optional[NoiseConfig],
                  config: StudentTrainConfig, out_dir: Union[str, Path], seed: int = 0, teacher=None,
                  manifest_extra: Optional[Dict[str, Any]] = None) -> StudentRun:
    """
    Distill the teacher actions logged in ``readers`` into the student.

    Runs for ``config.epochs`` epochs or until the validation loss has not
    improved by ``min_delta`` for ``patience`` epochs. The best checkpoint is
    written to ``student.ckpt``, the last one to ``student_last.ckpt`` and one
    row per epoch to ``losses.csv``.

    Args:
        net: Student network (trained in place)
        readers: Open dataset shards
        noise: Noise applied to the heightmaps (None for clean training)
        config: Distillation hyperparameters
        out_dir: Run directory
        seed: Seed of the split, the batch order and the noise
        teacher: Teacher network, required when ``latent_loss_weight > 0``
        manifest_extra: Extra checkpoint manifest fields

    Returns:
        StudentRun
    """
    if not readers or sum(len(r) for r in readers) == 0:
        raise ValueError("Empty dataset: no shards to train on")
    if (readers[0].k_dense, readers[0].k_sparse) != (net.k_dense, net.k_sparse):
        raise CheckpointMismatchError(f"Dataset heightmap dims ({readers[0].k_dense}, {readers[0].k_sparse}) "
                                      f"do not match the student ({net.k_dense}, {net.k_sparse})")
    if config.latent_loss_weight > 0 and teacher is None:
        raise ValueError("latent_loss_weight > 0 requires a teacher network")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loss_csv = out_dir / 'losses.csv'
    pd.DataFrame(columns=LOSS_COLUMNS).to_csv(loss_csv, index=False)
    extra = dict(manifest_extra or {})
    extra.update({'seed': seed, 'noise': noise.to_dict() if noise is not None else None})

    train_streams, val_streams = split_streams(readers, config.val_fraction, seed)
    streams = np.random.SeedSequence([seed, 3]).spawn(2)
    batch_rng, noise_rng = (np.random.default_rng(s) for s in streams)
    logger.info(f"[STEP] Distilling student: {len(train_streams)} train / {len(val_streams)} validation "
                f"streams, seq_len {config.seq_len}, batch {config.batch_size}")

    checkpoint = out_dir / 'student.ckpt'
    best_loss, best_epoch, waited, stopped_early = math.inf, 0, 0, False
    epoch = 0
    for epoch in range(1, config.epochs + 1):
        losses, sizes = [], []
        for batch in sequence_iter(readers, config.seq_len, config.batch_size, batch_rng,
                                   streams=train_streams, max_batches=config.max_batches_per_epoch):
            losses.append(distillation_step(net, batch, noise, noise_rng, config, config.lr, teacher))
            sizes.append(len(batch))
        train_loss = float(np.average(losses, weights=sizes))
        val_loss = evaluate_loss(net, readers, val_streams, noise, config, seed + epoch) if val_streams \
            else train_loss

        improved = val_loss < best_loss - config.min_delta
        if improved:
            best_loss, best_epoch, waited = val_loss, epoch, 0
            net.save(checkpoint, epoch=epoch, val_loss=val_loss, **extra)
        else:
            waited += 1
        pd.DataFrame([[epoch, train_loss, val_loss, config.lr, improved]], columns=LOSS_COLUMNS) \
            .to_csv(loss_csv, mode='a', header=False, index=False)
        logger.info(f"epoch {epoch:4d} | train {train_loss:.6f} | val {val_loss:.6f}"
                    f"{' | best' if improved else ''}")
        if config.patience and waited >= config.patience:
            stopped_early = True
            logger.info(f"ℹ Validation loss plateaued for {waited} epochs; stopping at epoch {epoch}")
            break

    net.save(out_dir / 'student_last.ckpt', epoch=epoch, **extra)
    if best_epoch == 0:
        net.save(checkpoint, epoch=epoch, val_loss=None, **extra)
    logger.info(f"✓ Student distillation finished: best epoch {best_epoch}, loss {best_loss:.6f}")
    return StudentRun(checkpoint=checkpoint, loss_csv=loss_csv, epochs_run=epoch, best_epoch=best_epoch,
                      best_loss=best_loss, stopped_early=stopped_early)
