#!/usr/bin/env python3

"""
evaluation.py: Inference-mode evaluation of navigation policies.

A policy drives independent episodes on one terrain, optionally with noisy
heightmaps, and the harness reports:

    - success rate: fraction of episodes that reached the goal
    - mean success duration: mean control steps / 5 Hz over successful episodes only
    - mean oscillation: mean over episodes of the mean squared action change
      sum_i (a_i,t - a_i,t-1)^2 between consecutive control steps

Episodes run in waves of ``num_envs`` rovers. Every episode owns its reset and
noise streams, so results do not depend on the wave size.

Outputs per evaluation directory: ``report.json``, ``episodes.csv``,
``actions_<ep>.csv`` for the first episodes and ``trajectories.h5``.
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
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import helper as hlp
from .nnkernel import CheckpointMismatchError, load_checkpoint
from .noise import NoiseConfig, apply_noise, draw_episode_noise
from .obs import ObservationBatch
from .simkin import RoverSimulator, TerminationCause, trace_frame
from .student import BeliefState, StudentNet, student_forward
from .teacher import TeacherNet

logger = hlp.setup_logger(__name__)

EPISODE_COLUMNS = ['episode', 'slot', 'cause', 'success', 'steps', 'duration_s', 'episode_return',
                   'oscillation', 'final_distance_m']
MISSING_CELL = '—'
_CELL_PATTERN = re.compile(r'^\s*(-?[\d.]+)% \((-?[\d.]+|nan)s\)\s*$')


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation settings; the terrain and noise presets are labels for the report."""
    terrain: str = 't1'
    noise: str = 'none'
    episodes: int = 512
    num_envs: int = 64
    seed: int = 0
    save_actions: int = 4
    save_trajectories: bool = True

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError(f"episodes must be >= 1, got {self.episodes}")
        if self.num_envs < 1:
            raise ValueError(f"num_envs must be >= 1, got {self.num_envs}")
        if self.save_actions < 0:
            raise ValueError(f"save_actions must be >= 0, got {self.save_actions}")

    @property
    def column(self) -> str:
        """Comparison-table column of this setting: terrain name, '(n)' when noisy."""
        return self.terrain.upper() + ('' if self.noise == 'none' else '(n)')


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

class Policy:
    """Batch policy interface of the harness."""
    name = 'policy'

    def begin(self, batch: int) -> None:
        """Start a wave of ``batch`` fresh episodes."""

    def act(self, obs: ObservationBatch) -> np.ndarray:
        raise NotImplementedError


class TeacherPolicy(Policy):
    """Teacher with deterministic (mean) actions."""
    name = 'teacher'

    def __init__(self, net: TeacherNet):
        self.net = net

    def act(self, obs: ObservationBatch) -> np.ndarray:
        return self.net.act(obs).astype(np.float64)


class StudentPolicy(Policy):
    """Student with one persistent belief state per episode of the wave."""
    name = 'student'

    def __init__(self, net: StudentNet):
        self.net = net
        self.state: Optional[BeliefState] = None

    def begin(self, batch: int) -> None:
        self.state = self.net.initial_state(batch)

    def act(self, obs: ObservationBatch) -> np.ndarray:
        actions, self.state = student_forward(self.net, obs, self.state)
        return actions.astype(np.float64)


class ScriptedPolicy(Policy):
    """Policy defined by a function of the observation batch."""
    name = 'scripted'

    def __init__(self, fn: Callable[[ObservationBatch], np.ndarray], name: str = 'scripted'):
        self.fn = fn
        self.name = name

    def act(self, obs: ObservationBatch) -> np.ndarray:
        return np.asarray(self.fn(obs), dtype=np.float64)


def zero_policy() -> ScriptedPolicy:
    return ScriptedPolicy(lambda obs: np.zeros((len(obs), 2)), name='zero')


def goal_seeking_policy(align_tolerance_rad: float = 0.05, gain: float = 2.0) -> ScriptedPolicy:
    """
    Straight-line driver: turn on the spot until the goal is ahead, then drive at full speed.
    The turn rate is proportional to the heading error in both phases.
    """
    def act(obs: ObservationBatch) -> np.ndarray:
        heading = obs.proprio[:, 1].astype(np.float64)
        turning = np.abs(heading) > align_tolerance_rad
        v_lin = np.where(turning, 0.0, 1.0)
        v_ang = np.clip(gain * heading, -1.0, 1.0)
        return np.stack([v_lin, v_ang], axis=1)
    return ScriptedPolicy(act, name='goal_seeking')


def load_policy(path: Union[str, Path]) -> Policy:
    """Teacher or student policy from a checkpoint, dispatched on the manifest kind."""
    _, manifest = load_checkpoint(path)
    kind = manifest.get('kind')
    if kind == TeacherNet.kind:
        return TeacherPolicy(TeacherNet.from_checkpoint(path))
    if kind == StudentNet.kind:
        return StudentPolicy(StudentNet.from_checkpoint(path))
    raise ValueError(f"{path}: unknown checkpoint kind '{kind}'")


# ---------------------------------------------------------------------------
# Oscillation
# ---------------------------------------------------------------------------

@dataclass
class OscillationTrace:
    frame: pd.DataFrame
    mean_delta_sq: float

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False)
        return path


def oscillation_trace(actions: np.ndarray, control_rate_hz: float = 5.0) -> OscillationTrace:
    """
    Action time series with the squared change between consecutive steps.

    Args:
        actions: (T, 2) normalized actions of one episode
        control_rate_hz: Control rate used for the time column

    Returns:
        OscillationTrace; ``delta_sq`` is 0 on the first row and the summary averages the T - 1 changes
    """
    actions = np.asarray(actions, dtype=np.float64)
    if actions.ndim != 2 or actions.shape[0] == 0 or actions.shape[1] != 2:
        raise ValueError(f"actions must be a non-empty (T, 2) array, got shape {actions.shape}")
    delta_sq = np.zeros(actions.shape[0])
    delta_sq[1:] = np.sum(np.diff(actions, axis=0) ** 2, axis=1)
    frame = pd.DataFrame({'t': np.arange(actions.shape[0]) / control_rate_hz,
                          'v_lin': actions[:, 0], 'v_ang': actions[:, 1], 'delta_sq': delta_sq})
    mean = float(delta_sq[1:].mean()) if actions.shape[0] > 1 else 0.0
    return OscillationTrace(frame=frame, mean_delta_sq=mean)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EpisodeLog:
    records: List[Dict[str, Any]] = field(default_factory=list)
    actions: List[Tuple[float, float]] = field(default_factory=list)
    poses: List[Tuple[float, float, float]] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)


@dataclass
class EvalReport:
    """Summary metrics plus one row per episode."""
    label: str
    terrain: str
    noise: str
    seed: int
    success_rate: float
    mean_success_duration_s: float
    mean_oscillation: float
    episodes: pd.DataFrame
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def column(self) -> str:
        return self.terrain.upper() + ('' if self.noise == 'none' else '(n)')

    def to_dict(self) -> Dict[str, Any]:
        causes = self.episodes['cause'].value_counts().to_dict() if len(self.episodes) else {}
        return {'label': self.label, 'terrain': self.terrain, 'noise': self.noise, 'seed': self.seed,
                'episodes': int(len(self.episodes)), 'success_rate': self.success_rate,
                'mean_success_duration_s': None if math.isnan(self.mean_success_duration_s)
                else self.mean_success_duration_s,
                'mean_oscillation': self.mean_oscillation,
                'causes': {str(k): int(v) for k, v in causes.items()}, 'metadata': self.metadata}

    def save(self, out_dir: Union[str, Path]) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.episodes.to_csv(out_dir / 'episodes.csv', index=False)
        return hlp.write_json(self.to_dict(), out_dir / 'report.json')

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'EvalReport':
        """Load from ``report.json`` or a directory holding it (and ``episodes.csv``)."""
        path = Path(path)
        if path.is_dir():
            path = path / 'report.json'
        data = hlp.read_json(path)
        episodes_csv = path.parent / 'episodes.csv'
        episodes = pd.read_csv(episodes_csv) if episodes_csv.exists() else pd.DataFrame(columns=EPISODE_COLUMNS)
        duration = data.get('mean_success_duration_s')
        return cls(label=data['label'], terrain=data['terrain'], noise=data['noise'], seed=data.get('seed', 0),
                   success_rate=float(data['success_rate']),
                   mean_success_duration_s=float('nan') if duration is None else float(duration),
                   mean_oscillation=float(data['mean_oscillation']), episodes=episodes,
                   metadata=data.get('metadata', {}))


def summarize(rows: pd.DataFrame, label: str, config: EvalConfig,
              metadata: Optional[Dict[str, Any]] = None) -> EvalReport:
    success = rows['success'].astype(bool)
    durations = rows.loc[success, 'duration_s']
    return EvalReport(label=label, terrain=config.terrain, noise=config.noise, seed=config.seed,
                      success_rate=float(success.mean()),
                      mean_success_duration_s=float(durations.mean()) if len(durations) else float('nan'),
                      mean_oscillation=float(rows['oscillation'].mean()), episodes=rows,
                      metadata=dict(metadata or {}))


def run_eval(policy: Policy, simulator: RoverSimulator, config: EvalConfig = EvalConfig(),
             noise: Optional[NoiseConfig] = None, out_dir: Optional[Union[str, Path]] = None,
             label: Optional[str] = None, metadata: Optional[Dict[str, Any]] = None) -> EvalReport:
    """
    Run ``config.episodes`` independent episodes and summarize them.

    Args:
        policy: Policy under test
        simulator: Simulator of the evaluation terrain
        config: Evaluation settings
        noise: Heightmap noise applied to the policy inputs (None for clean inputs)
        out_dir: Optional output directory for the report files
        label: Agent label of the report (default: the policy name)
        metadata: Extra report fields (checkpoint hashes, ...)

    Returns:
        EvalReport
    """
    pattern = simulator.pattern
    net = getattr(policy, 'net', None)
    if net is not None and (net.k_dense, net.k_sparse) != (pattern.k_dense, pattern.k_sparse):
        raise CheckpointMismatchError(f"Policy expects ({net.k_dense}, {net.k_sparse}) heightmap points, "
                                      f"pattern provides ({pattern.k_dense}, {pattern.k_sparse})")

    label = label or policy.name
    rate = simulator.config.control_hz
    streams = [child.spawn(2) for child in np.random.SeedSequence(config.seed).spawn(config.episodes)]
    logs: List[EpisodeLog] = []
    rows = []
    logger.info(f"[STEP] Evaluating '{label}' on {config.terrain} ({config.noise} noise): "
                f"{config.episodes} episodes in waves of {config.num_envs}")

    for lo in range(0, config.episodes, config.num_envs):
        ids = list(range(lo, min(lo + config.num_envs, config.episodes)))
        reset_rngs = [np.random.default_rng(streams[i][0]) for i in ids]
        noise_rngs = [np.random.default_rng(streams[i][1]) for i in ids]
        states = [simulator.reset(i % simulator.slots, rng) for i, rng in zip(ids, reset_rngs)]
        episode_noise = [draw_episode_noise(noise, rng) if noise is not None else None for rng in noise_rngs]
        observations = [simulator.observe(s) for s in states]
        wave_logs = [EpisodeLog() for _ in ids]
        causes = [TerminationCause.NONE] * len(ids)
        policy.begin(len(ids))

        while any(s.alive for s in states):
            batch = ObservationBatch.from_observations(observations)
            if noise is not None:
                dense, sparse = batch.dense.copy(), batch.sparse.copy()
                for k, state in enumerate(states):
                    if state.alive:
                        dense[k] = apply_noise(batch.dense[k], episode_noise[k], noise_rngs[k])
                        sparse[k] = apply_noise(batch.sparse[k], episode_noise[k], noise_rngs[k])
                batch = ObservationBatch(batch.proprio, dense, sparse)
            actions = policy.act(batch)

            alive = [k for k, s in enumerate(states) if s.alive]
            results = simulator.step_batch([states[k] for k in alive], actions[alive])
            for k, result in zip(alive, results):
                state, log = states[k], wave_logs[k]
                applied = state.prev_action
                log.actions.append((applied.v_lin, applied.v_ang))
                log.poses.append((state.x, state.y, state.yaw))
                log.rewards.append(result.reward)
                log.records.append({'t': state.steps_elapsed / rate, 'x': state.x, 'y': state.y,
                                    'yaw': state.yaw, 'v_lin': applied.v_lin, 'v_ang': applied.v_ang,
                                    'reward': result.reward, 'cause': result.termination_cause})
                observations[k] = result.observation
                causes[k] = result.termination_cause

        for k, i in enumerate(ids):
            state, log = states[k], wave_logs[k]
            trace = oscillation_trace(np.array(log.actions), rate)
            success = causes[k] == TerminationCause.GOAL_REACHED
            rows.append({'episode': i, 'slot': state.slot, 'cause': causes[k].value, 'success': success,
                         'steps': state.steps_elapsed, 'duration_s': state.steps_elapsed / rate,
                         'episode_return': float(np.sum(log.rewards)), 'oscillation': trace.mean_delta_sq,
                         'final_distance_m': math.hypot(state.goal[0] - state.x, state.goal[1] - state.y)})
            logs.append(log)
        logger.debug(f"wave {lo // config.num_envs + 1}: {len(ids)} episodes done")

    frame = pd.DataFrame(rows, columns=EPISODE_COLUMNS)
    extra = {'policy': policy.name, 'episodes_requested': config.episodes}
    extra.update(metadata or {})
    report = summarize(frame, label, config, extra)
    logger.info(f"✓ {label}: success {100.0 * report.success_rate:.1f}%, "
                f"mean success duration {report.mean_success_duration_s:.1f}s, "
                f"oscillation {report.mean_oscillation:.4f}")

    if out_dir is not None:
        save_episode_artifacts(report, logs, config, rate, out_dir)
    return report


def save_episode_artifacts(report: EvalReport, logs: Sequence[EpisodeLog], config: EvalConfig,
                           control_rate: float, out_dir: Union[str, Path]) -> Path:
    """Write the report, per-episode action traces and the trajectory store."""
    out_dir = Path(out_dir)
    path = report.save(out_dir)
    for i, log in enumerate(logs[:config.save_actions]):
        oscillation_trace(np.array(log.actions), control_rate).save(out_dir / f'actions_{i}.csv')
        trace_frame(log.records).to_csv(out_dir / f'trace_{i}.csv', index=False)
    if config.save_trajectories:
        trajectories = {f'episode_{i:04d}': {'poses': np.array(log.poses), 'actions': np.array(log.actions),
                                             'rewards': np.array(log.rewards)} for i, log in enumerate(logs)}
        attrs = {f'episode_{int(row.episode):04d}': {'cause': row.cause, 'success': bool(row.success)}
                 for row in report.episodes.itertuples()}
        hlp.store_trajectories(trajectories, out_dir / 'trajectories.h5', control_rate, attrs,
                               metadata={'label': report.label, 'terrain': report.terrain, 'noise': report.noise})
    return path


# ---------------------------------------------------------------------------
# Comparison table
# ---------------------------------------------------------------------------

COLUMN_ORDER = ['T1', 'T1(n)', 'T2', 'T2(n)']


def format_cell(success_rate: float, duration_s: float) -> str:
    return f"{100.0 * success_rate:.1f}% ({duration_s:.1f}s)"


def parse_cell(cell: str) -> Optional[Tuple[float, float]]:
    """Inverse of ``format_cell``: (success percent, duration s), None for a missing cell."""
    if cell is None or cell.strip() == MISSING_CELL or cell.strip() == '':
        return None
    match = _CELL_PATTERN.match(cell)
    if match is None:
        raise ValueError(f"Malformed comparison cell '{cell}'")
    return float(match.group(1)), float(match.group(2))


def compare_report(reports: Sequence[EvalReport], out_dir: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """
    Agents x settings table with "success% (duration s)" cells.

    Rows follow the first appearance of each label; columns follow T1, T1(n),
    T2, T2(n) and then any other setting. Missing combinations render as "—".
    When ``out_dir`` is given, ``comparison.csv`` and ``comparison.md`` are written.

    A single report is accepted and gives a one-cell table.

    Raises:
        ValueError: If ``reports`` is empty
    """
    if not reports:
        raise ValueError("compare_report needs at least one report")
    labels = list(dict.fromkeys(r.label for r in reports))
    present = list(dict.fromkeys(r.column for r in reports))
    columns = [c for c in COLUMN_ORDER if c in present] + [c for c in present if c not in COLUMN_ORDER]

    table = pd.DataFrame(MISSING_CELL, index=pd.Index(labels, name='agent'), columns=columns)
    for r in reports:
        table.loc[r.label, r.column] = format_cell(r.success_rate, r.mean_success_duration_s)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        table.to_csv(out_dir / 'comparison.csv')
        (out_dir / 'comparison.md').write_text(comparison_markdown(table), encoding='utf-8')
        logger.info(f"✓ Wrote comparison of {len(labels)} agent(s) x {len(columns)} setting(s) to {out_dir}")
    return table


def comparison_markdown(table: pd.DataFrame) -> str:
    header = '| Agent | ' + ' | '.join(table.columns) + ' |'
    rule = '|' + '---|' * (len(table.columns) + 1)
    body = ['| ' + str(label) + ' | ' + ' | '.join(row) + ' |' for label, row in zip(table.index, table.values)]
    return '\n'.join([header, rule] + body) + '\n'


def read_comparison(path: Union[str, Path]) -> pd.DataFrame:
    """Read ``comparison.csv`` back with every cell as text."""
    return pd.read_csv(path, index_col='agent', dtype=str, keep_default_na=False)
