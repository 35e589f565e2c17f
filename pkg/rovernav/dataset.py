#!/usr/bin/env python3

"""
dataset.py: Teacher trajectory shards and the sequence sampler of the student.

The teacher is run in inference mode on a vector of environments and every
control step of every env is logged: the noiseless observation, the action
the teacher took on it and the episode-end flag. Records of up to 64 envs go
into one shard file.

Shard layout (little-endian, fixed stride):
    header   magic "RTSD", u32 version, env_count, steps_per_env, K_d, K_s,
             proprio_dim (4), action_dim (2)
    records  env-major, steps_per_env records per env:
             f32 proprio[4], f32 dense[K_d], f32 sparse[K_s], f32 action[2], u8 done

``dataset.json`` next to the shards lists them with their hashes together with
the teacher checkpoint, terrain and sample pattern the data was logged with.
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

import errno
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.model_selection import train_test_split

from . import helper as hlp
from .nnkernel import gaussian_sample
from .obs import ACTION_DIM, PROPRIO_DIM, ObservationBatch
from .simkin import RoverSimulator, TerminationCause, VecRoverEnv

logger = hlp.setup_logger(__name__)

SHARD_MAGIC = b'RTSD'
SHARD_VERSION = 1
SHARD_SUFFIX = '.rtsd'
DATASET_MANIFEST = 'dataset.json'
DEFAULT_SHARD_ENVS = 64
RESERVE_CHUNK_BYTES = 1 << 22

HEADER_DTYPE = np.dtype([('magic', 'S4'), ('version', '<u4'), ('env_count', '<u4'), ('steps', '<u4'),
                         ('k_dense', '<u4'), ('k_sparse', '<u4'), ('proprio_dim', '<u4'),
                         ('action_dim', '<u4')])


class ShardFormatError(ValueError):
    """Raised when a shard file is structurally invalid."""


def record_dtype(k_dense: int, k_sparse: int) -> np.dtype:
    """Packed record layout for the given heightmap sizes."""
    return np.dtype([('proprio', '<f4', (PROPRIO_DIM,)), ('dense', '<f4', (k_dense,)),
                     ('sparse', '<f4', (k_sparse,)), ('action', '<f4', (ACTION_DIM,)), ('done', 'u1')])


@dataclass(frozen=True)
class ShardHeader:
    env_count: int
    steps: int
    k_dense: int
    k_sparse: int
    version: int = SHARD_VERSION
    proprio_dim: int = PROPRIO_DIM
    action_dim: int = ACTION_DIM

    @property
    def records(self) -> int:
        return self.env_count * self.steps

    @property
    def dtype(self) -> np.dtype:
        return record_dtype(self.k_dense, self.k_sparse)

    @property
    def file_size(self) -> int:
        return HEADER_DTYPE.itemsize + self.records * self.dtype.itemsize

    def to_array(self) -> np.ndarray:
        return np.array([(SHARD_MAGIC, self.version, self.env_count, self.steps, self.k_dense, self.k_sparse,
                          self.proprio_dim, self.action_dim)], dtype=HEADER_DTYPE)

    @classmethod
    def from_array(cls, header: np.ndarray) -> 'ShardHeader':
        h = header[0]
        return cls(env_count=int(h['env_count']), steps=int(h['steps']), k_dense=int(h['k_dense']),
                   k_sparse=int(h['k_sparse']), version=int(h['version']),
                   proprio_dim=int(h['proprio_dim']), action_dim=int(h['action_dim']))


def reserve_blocks(f, size: int) -> None:
    """
    Allocate ``size`` bytes of disk space for an open file.

    Uses ``posix_fallocate`` where the platform and file system support it and
    writes zeros otherwise. Running out of space raises ``OSError`` (ENOSPC).
    """
    f.flush()
    fallocate = getattr(os, 'posix_fallocate', None)
    if fallocate is not None:
        try:
            fallocate(f.fileno(), 0, size)
            return
        except OSError as e:
            if e.errno not in (errno.EINVAL, errno.EOPNOTSUPP):
                raise
    f.seek(0, os.SEEK_END)
    remaining = size - f.tell()
    zeros = bytes(min(RESERVE_CHUNK_BYTES, max(remaining, 0)))
    while remaining > 0:
        chunk = min(remaining, len(zeros))
        f.write(zeros[:chunk])
        remaining -= chunk
    f.flush()


class ShardWriter:
    """
    Writes one shard through a memory map, one control step at a time.

    The whole file is allocated on open, so a full disk fails there with an
    ``OSError`` instead of a bus error on a later store through the map. Used
    as a context manager; on any exception the partial file is removed before
    the error propagates.
    """

    def __init__(self, path: Union[str, Path], env_count: int, steps: int, k_dense: int, k_sparse: int):
        if env_count < 1 or steps < 1:
            raise ValueError(f"env_count and steps must be >= 1, got {env_count}, {steps}")
        self.path = Path(path)
        self.header = ShardHeader(env_count=env_count, steps=steps, k_dense=k_dense, k_sparse=k_sparse)
        self.records: Optional[np.memmap] = None
        self.steps_written = 0

    def __enter__(self) -> 'ShardWriter':
        self.open()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is not None:
            self.discard()
            return
        self.close()

    def open(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            with open(self.path, 'wb') as f:
                f.write(self.header.to_array().tobytes())
                reserve_blocks(f, self.header.file_size)
            self.records = np.memmap(self.path, dtype=self.header.dtype, mode='r+',
                                     offset=HEADER_DTYPE.itemsize,
                                     shape=(self.header.env_count, self.header.steps))
        except BaseException:
            self.discard()
            raise

    def write_step(self, step: int, proprio: np.ndarray, dense: np.ndarray, sparse: np.ndarray,
                   action: np.ndarray, done: np.ndarray) -> None:
        """Write the records of all envs of this shard for control step ``step``."""
        if self.records is None:
            raise RuntimeError("ShardWriter is not open")
        if not 0 <= step < self.header.steps:
            raise IndexError(f"step {step} outside [0, {self.header.steps})")
        column = self.records[:, step]
        column['proprio'] = proprio
        column['dense'] = dense
        column['sparse'] = sparse
        column['action'] = action
        column['done'] = np.asarray(done, dtype=np.uint8)
        self.steps_written = max(self.steps_written, step + 1)

    def close(self) -> Path:
        if self.records is not None:
            self.records.flush()
            del self.records
            self.records = None
        return self.path

    def discard(self) -> None:
        if self.records is not None:
            del self.records
        self.records = None
        if self.path.exists():
            self.path.unlink()
            logger.warning(f"⚠ Removed partial shard {self.path}")


class ShardReader:
    """Read-only view of a shard with structural validation on open."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        if not self.path.exists():
            raise FileNotFoundError(f"Shard not found: {self.path}")
        size = self.path.stat().st_size
        if size < HEADER_DTYPE.itemsize:
            raise ShardFormatError(f"{self.path}: file too small for a shard header")
        raw = np.fromfile(self.path, dtype=HEADER_DTYPE, count=1)
        if raw[0]['magic'] != SHARD_MAGIC:
            raise ShardFormatError(f"{self.path}: bad magic {raw[0]['magic']!r}")
        self.header = ShardHeader.from_array(raw)
        if self.header.version != SHARD_VERSION:
            raise ShardFormatError(f"{self.path}: unsupported version {self.header.version}")
        if self.header.proprio_dim != PROPRIO_DIM or self.header.action_dim != ACTION_DIM:
            raise ShardFormatError(f"{self.path}: proprio/action dims ({self.header.proprio_dim}, "
                                   f"{self.header.action_dim}) differ from ({PROPRIO_DIM}, {ACTION_DIM})")
        if size != self.header.file_size:
            raise ShardFormatError(f"{self.path}: size {size} B does not match header "
                                   f"({self.header.file_size} B expected)")
        self.records = np.memmap(self.path, dtype=self.header.dtype, mode='r', offset=HEADER_DTYPE.itemsize,
                                 shape=(self.header.env_count, self.header.steps))

    @property
    def env_count(self) -> int:
        return self.header.env_count

    @property
    def steps(self) -> int:
        return self.header.steps

    @property
    def k_dense(self) -> int:
        return self.header.k_dense

    @property
    def k_sparse(self) -> int:
        return self.header.k_sparse

    def __len__(self) -> int:
        return self.header.records

    def done(self, env: int) -> np.ndarray:
        return np.asarray(self.records[env]['done'], dtype=bool)


@dataclass
class CollectionResult:
    shards: List[Path]
    manifest: Path
    records: int
    episodes: int
    successes: int = 0
    extra: Dict[str, Any] = field(default_factory=dict)


def collect(teacher, simulator: RoverSimulator, env_count: int, steps: int, out_dir: Union[str, Path],
            seed: int = 0, stochastic: bool = False, shard_envs: int = DEFAULT_SHARD_ENVS,
            manifest_extra: Optional[Dict[str, Any]] = None) -> CollectionResult:
    """
    Log teacher inference trajectories to shards.

    Observations are noiseless; the logged action is the one sent to the
    simulator (the clamped distribution mean, or a clamped sample when
    ``stochastic``). Episodes end and restart inside the log; the done flag
    marks the last step of each episode.

    Args:
        teacher: TeacherNet
        simulator: Rover simulator with at least one spawn slot
        env_count: Number of parallel envs
        steps: Control steps logged per env
        out_dir: Dataset directory
        seed: Seed of the env streams (and of the action samples)
        stochastic: Sample actions from the policy distribution
        shard_envs: Envs per shard
        manifest_extra: Extra manifest fields (terrain, checkpoint hashes, ...)

    Returns:
        CollectionResult
    """
    if env_count < 1 or steps < 1 or shard_envs < 1:
        raise ValueError(f"env_count, steps and shard_envs must be >= 1, got {env_count}, {steps}, {shard_envs}")
    pattern = simulator.pattern
    if (teacher.k_dense, teacher.k_sparse) != (pattern.k_dense, pattern.k_sparse):
        raise ValueError(f"Teacher expects ({teacher.k_dense}, {teacher.k_sparse}) heightmap points, "
                         f"pattern provides ({pattern.k_dense}, {pattern.k_sparse})")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    env = VecRoverEnv(simulator, env_count, seed)
    action_rngs = [np.random.default_rng(s) for s in np.random.SeedSequence([seed, 2]).spawn(env_count)]
    bounds = [(lo, min(lo + shard_envs, env_count)) for lo in range(0, env_count, shard_envs)]
    writers = [ShardWriter(out_dir / f"shard_{i:03d}{SHARD_SUFFIX}", hi - lo, steps,
                           pattern.k_dense, pattern.k_sparse) for i, (lo, hi) in enumerate(bounds)]
    logger.info(f"[STEP] Collecting {env_count} envs x {steps} steps into {len(writers)} shard(s)")

    episodes = successes = 0
    try:
        for writer in writers:
            writer.open()
        for t in range(steps):
            obs: ObservationBatch = env.observation_batch()
            if stochastic:
                out = teacher.forward(obs)
                actions = gaussian_sample(out.mean.astype(np.float64), out.log_std.astype(np.float64),
                                          action_rngs)
            else:
                actions = teacher.forward(obs).mean.astype(np.float64)
            result = env.step(np.clip(actions, -1.0, 1.0))
            for writer, (lo, hi) in zip(writers, bounds):
                writer.write_step(t, obs.proprio[lo:hi], obs.dense[lo:hi], obs.sparse[lo:hi],
                                  result.applied_actions[lo:hi], result.dones[lo:hi])
            episodes += len(result.completed)
            successes += sum(c.cause == TerminationCause.GOAL_REACHED for c in result.completed)
            if (t + 1) % 100 == 0:
                logger.debug(f"collected {t + 1}/{steps} steps, {episodes} episodes finished")
        paths = [writer.close() for writer in writers]
    except BaseException:
        for writer in writers:
            writer.discard()
        raise

    manifest = {'format': 'RTSD', 'version': SHARD_VERSION, 'seed': seed, 'stochastic': stochastic,
                'env_count': env_count, 'steps': steps, 'records': env_count * steps,
                'k_dense': pattern.k_dense, 'k_sparse': pattern.k_sparse,
                'pattern': pattern.config.to_dict(), 'terrain': simulator.terrain.params.to_dict(),
                'shards': [{'file': p.name, 'env_count': hi - lo, 'sha256': hlp.sha256_file(p)}
                           for p, (lo, hi) in zip(paths, bounds)]}
    manifest.update(manifest_extra or {})
    manifest_file = hlp.write_json(manifest, out_dir / DATASET_MANIFEST)
    logger.info(f"✓ Logged {env_count * steps} records ({episodes} finished episodes, "
                f"{successes} reached the goal)")
    return CollectionResult(shards=paths, manifest=manifest_file, records=env_count * steps,
                            episodes=episodes, successes=successes)


def open_dataset(data_dir: Union[str, Path]) -> Tuple[Dict[str, Any], List[ShardReader]]:
    """
    Open the shards listed in ``dataset.json``.

    Raises:
        FileNotFoundError: If the manifest or a shard is missing
        ShardFormatError: If a shard's dims disagree with the manifest or its hash changed
    """
    data_dir = Path(data_dir)
    manifest = hlp.read_json(data_dir / DATASET_MANIFEST)
    readers = []
    for entry in manifest['shards']:
        reader = ShardReader(data_dir / entry['file'])
        if (reader.k_dense, reader.k_sparse) != (manifest['k_dense'], manifest['k_sparse']):
            raise ShardFormatError(f"{reader.path}: heightmap dims ({reader.k_dense}, {reader.k_sparse}) "
                                   f"differ from the manifest")
        if 'sha256' in entry and hlp.sha256_file(reader.path) != entry['sha256']:
            raise ShardFormatError(f"{reader.path}: content hash differs from the manifest")
        readers.append(reader)
    if not readers:
        raise ShardFormatError(f"{data_dir}: dataset lists no shards")
    return manifest, readers


Stream = Tuple[int, int]


def all_streams(readers: Sequence[ShardReader]) -> List[Stream]:
    """Every (shard, env) pair of a dataset."""
    return [(s, e) for s, reader in enumerate(readers) for e in range(reader.env_count)]


def split_streams(readers: Sequence[ShardReader], val_fraction: float = 0.1, seed: int = 0
                  ) -> Tuple[List[Stream], List[Stream]]:
    """
    Disjoint, seed-stable train/validation split over (shard, env) streams.

    Whole env streams are assigned to one side so no sequence straddles the split.
    """
    streams = all_streams(readers)
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in [0, 1), got {val_fraction}")
    if val_fraction == 0.0 or len(streams) < 2:
        if val_fraction > 0.0:
            logger.warning("⚠ Only one env stream; validation set is empty")
        return streams, []
    train, val = train_test_split(streams, test_size=val_fraction, random_state=seed, shuffle=True)
    return sorted(train), sorted(val)


def valid_starts(done: np.ndarray, seq_len: int) -> np.ndarray:
    """
    Start indices of windows of ``seq_len`` steps with no done flag before their last element.
    """
    done = np.asarray(done, dtype=bool)
    steps = done.shape[0]
    if seq_len < 1:
        raise ValueError(f"seq_len must be >= 1, got {seq_len}")
    if seq_len > steps:
        return np.zeros(0, dtype=np.int64)
    # cum[i] = number of done flags in done[:i]
    cum = np.concatenate([[0], np.cumsum(done)])
    starts = np.arange(steps - seq_len + 1)
    inner = cum[starts + seq_len - 1] - cum[starts]
    return starts[inner == 0]


@dataclass
class SequenceBatch:
    """Batch of contiguous sequences; arrays are (B, T, ...)."""
    proprio: np.ndarray
    dense: np.ndarray
    sparse: np.ndarray
    action: np.ndarray
    done: np.ndarray
    index: np.ndarray

    def __len__(self) -> int:
        return int(self.proprio.shape[0])

    @property
    def seq_len(self) -> int:
        return int(self.proprio.shape[1])


def sequence_index(readers: Sequence[ShardReader], seq_len: int,
                   streams: Optional[Sequence[Stream]] = None) -> np.ndarray:
    """
    All valid (shard, env, start) triples of the given streams.

    Raises:
        ValueError: If seq_len exceeds the logged steps or no window fits inside an episode
    """
    streams = all_streams(readers) if streams is None else list(streams)
    if not streams:
        raise ValueError("No env streams to sample from")
    longest = max(readers[s].steps for s, _ in streams)
    if seq_len > longest:
        raise ValueError(f"seq_len {seq_len} exceeds the {longest} steps logged per env")
    rows = []
    for s, e in streams:
        starts = valid_starts(readers[s].done(e), seq_len)
        rows.append(np.stack([np.full(starts.size, s), np.full(starts.size, e), starts], axis=1))
    index = np.concatenate(rows, axis=0).astype(np.int64)
    if index.shape[0] == 0:
        raise ValueError(f"Every episode is shorter than seq_len={seq_len}")
    return index


def gather_sequences(readers: Sequence[ShardReader], index: np.ndarray, seq_len: int) -> SequenceBatch:
    windows = [readers[s].records[e, t:t + seq_len] for s, e, t in index]
    stacked = np.stack(windows)
    return SequenceBatch(proprio=stacked['proprio'].astype(np.float32), dense=stacked['dense'].astype(np.float32),
                         sparse=stacked['sparse'].astype(np.float32), action=stacked['action'].astype(np.float32),
                         done=stacked['done'].astype(bool), index=np.asarray(index))


def sequence_iter(readers: Sequence[ShardReader], seq_len: int, batch_size: int, rng: np.random.Generator,
                  streams: Optional[Sequence[Stream]] = None, max_batches: Optional[int] = None
                  ) -> Iterator[SequenceBatch]:
    """
    One epoch of shuffled sequence batches.

    Every valid window start of the selected streams is yielded at most once,
    in a random order drawn from ``rng``. The final batch may be smaller than
    ``batch_size``.

    Args:
        readers: Open shards
        seq_len: Sequence length in control steps
        batch_size: Sequences per batch
        rng: Generator of the epoch permutation
        streams: Optional subset of (shard, env) streams
        max_batches: Optional cap on the number of batches

    Yields:
        SequenceBatch
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    index = sequence_index(readers, seq_len, streams)
    order = rng.permutation(index.shape[0])
    n_batches = -(-index.shape[0] // batch_size)
    if max_batches is not None:
        n_batches = min(n_batches, max_batches)
    for b in range(n_batches):
        yield gather_sequences(readers, index[order[b * batch_size:(b + 1) * batch_size]], seq_len)
