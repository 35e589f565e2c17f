#!/usr/bin/env python3

"""
core.py: Experiment configuration, run directories and the command-line pipeline.

Pipeline stages (each a subcommand of ``rovernav``):

    terrain        generate a terrain map and export it
    train-teacher  PPO training of the privileged teacher
    collect        log teacher inference trajectories to dataset shards
    train-student  distill the logged actions into the recurrent student
    eval           evaluate a teacher or student checkpoint
    report         comparison table of several evaluations
    plot           learning curves or action traces from CSV files

Every stage writes into its own run directory:

    config.json     resolved configuration (CLI overrides applied); loading and
                    re-saving it is byte-identical
    manifest.json   stage, seed, package version, config hash and the
                    sha256 of every input artifact and upstream manifest
    .lock           present while a stage is running in the directory

A stage that consumes an artifact requires the manifest of the run directory
that produced it, so every student can be traced back through its dataset to
the teacher checkpoint and the configs and seeds of each step.
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

import argparse
import dataclasses
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union, get_args, get_origin, get_type_hints

import pandas as pd

from . import helper as hlp
from .dataset import collect, open_dataset
from .evaluation import EvalConfig, EvalReport, compare_report, load_policy, run_eval
from .nnkernel import CheckpointMismatchError, load_checkpoint
from .noise import NOISE_PRESETS, NoiseConfig
from .obs import PatternConfig, build_pattern
from .reward import RewardWeights
from .simkin import KinematicsConfig, RoverGeometry, RoverSimulator, VecRoverEnv
from .student import StudentArch, StudentNet, StudentTrainConfig, train_student, warm_start_encoders
from .teacher import PpoConfig, TeacherArch, TeacherNet, train_teacher
from .terrain import TERRAIN_PRESETS, TerrainMap, TerrainParams, generate_terrain, load_terrain, save_terrain, \
    terrain_preset

logger = hlp.setup_logger(__name__)

CONFIG_SNAPSHOT = 'config.json'
RUN_MANIFEST = 'manifest.json'
LOCK_FILE = '.lock'
STAGES = ('terrain', 'train-teacher', 'collect', 'train-student', 'eval', 'report', 'plot')


class ConfigError(ValueError):
    """Raised for invalid configuration files; the message names the offending field."""


class ProvenanceError(RuntimeError):
    """Raised when an input artifact lacks the manifest of the stage that produced it."""


class RunLockedError(RuntimeError):
    """Raised when another stage holds the run directory."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TeacherSection:
    num_envs: int = 64
    total_steps: int = 2_000_000
    checkpoint_interval: int = 50
    domain_rand: bool = False
    terrain_preset: str = 't1'
    arch: TeacherArch = TeacherArch()

    def __post_init__(self):
        if self.num_envs < 1 or self.total_steps < 0 or self.checkpoint_interval < 0:
            raise ValueError("num_envs must be >= 1, total_steps and checkpoint_interval >= 0")
        if self.terrain_preset.lower() not in TERRAIN_PRESETS:
            raise ValueError(f"unknown terrain preset '{self.terrain_preset}'")


@dataclass(frozen=True)
class NoiseSection:
    """Noise preset names per stage plus optional custom presets ({name: {"modes": {...}}})."""
    domain_rand: str = 'train-mix'
    student: str = 'train-mix'
    evaluation: str = 'eval-noise'
    presets: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name, data in self.presets.items():
            NoiseConfig.from_dict({'name': name, **data})
        for name in (self.domain_rand, self.student, self.evaluation):
            self.resolve(name)

    def resolve(self, name: str) -> NoiseConfig:
        if name in self.presets:
            return NoiseConfig.from_dict({'name': name, **self.presets[name]})
        if name in NOISE_PRESETS:
            return NOISE_PRESETS[name]
        raise ValueError(f"unknown noise preset '{name}'; available: "
                         f"{sorted(set(NOISE_PRESETS) | set(self.presets))}")


@dataclass(frozen=True)
class DatasetSection:
    env_count: int = 512
    steps: int = 1500
    shard_envs: int = 64
    stochastic: bool = False
    terrain_preset: str = 't1'

    def __post_init__(self):
        if self.env_count < 1 or self.steps < 1 or self.shard_envs < 1:
            raise ValueError("env_count, steps and shard_envs must be >= 1")
        if self.terrain_preset.lower() not in TERRAIN_PRESETS:
            raise ValueError(f"unknown terrain preset '{self.terrain_preset}'")


@dataclass(frozen=True)
class StudentSection:
    arch: StudentArch = StudentArch()
    train: StudentTrainConfig = StudentTrainConfig()


@dataclass(frozen=True)
class EvaluationSection:
    episodes: int = 512
    num_envs: int = 64
    save_actions: int = 4
    save_trajectories: bool = True
    terrain_seed: Optional[int] = None

    def __post_init__(self):
        if self.episodes < 1 or self.num_envs < 1 or self.save_actions < 0:
            raise ValueError("episodes and num_envs must be >= 1, save_actions >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment configuration; every section is a frozen dataclass."""
    seed: int = 0
    terrain: TerrainParams = TerrainParams()
    pattern: PatternConfig = PatternConfig()
    simulation: KinematicsConfig = KinematicsConfig()
    geometry: RoverGeometry = RoverGeometry()
    reward: RewardWeights = RewardWeights()
    ppo: PpoConfig = PpoConfig()
    teacher: TeacherSection = TeacherSection()
    noise: NoiseSection = NoiseSection()
    dataset: DatasetSection = DatasetSection()
    student: StudentSection = StudentSection()
    evaluation: EvaluationSection = EvaluationSection()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'ExperimentConfig':
        """
        Build a config from nested dictionaries.

        Missing keys take their defaults; unknown keys and invalid values raise
        ConfigError with the dotted path of the field.
        """
        return _build(cls, data, '')

    def to_dict(self) -> Dict[str, Any]:
        return _to_plain(dataclasses.asdict(self))

    def replace(self, section: str, **changes: Any) -> 'ExperimentConfig':
        """Copy with fields of one section replaced (``section='seed'`` replaces the seed)."""
        if section == 'seed':
            return dataclasses.replace(self, seed=int(changes['seed']))
        try:
            updated = dataclasses.replace(getattr(self, section), **changes)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{section}: {e}") from e
        return dataclasses.replace(self, **{section: updated})


def _to_plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    return value


def _to_tuple(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_to_tuple(v) for v in value)
    return value


def _check_type(default: Any, value: Any, path: str) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
    elif isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        value = _to_tuple(value)
    elif isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object, got {value!r}")
    return value


_TYPE_SAMPLES = {bool: False, int: 0, float: 0.0, str: '', tuple: (), dict: {}}


def _allows_none(hint: Any) -> bool:
    return type(None) in get_args(hint)


def _check_hint(hint: Any, value: Any, path: str) -> Any:
    """Type check against an annotation, for fields whose default is None."""
    inner = [a for a in get_args(hint) if a is not type(None)] or [hint]
    target = get_origin(inner[0]) or inner[0]
    sample = _TYPE_SAMPLES.get(target)
    return value if sample is None else _check_type(sample, value, path)


def _build(cls, data: Any, path: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    defaults = cls()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    hints = get_type_hints(cls)
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = f"{path}." if path else ''
        raise ConfigError(f"{where}{unknown[0]}: unknown key (allowed: {sorted(fields)})")

    kwargs = {}
    for name, value in data.items():
        key_path = f"{path}.{name}" if path else name
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, key_path)
        elif value is None:
            if default is not None and not _allows_none(hints[name]):
                raise ConfigError(f"{key_path}: must not be null")
            kwargs[name] = None
        elif default is None:
            kwargs[name] = _check_hint(hints[name], value, key_path)
        else:
            kwargs[name] = _check_type(default, value, key_path)
    try:
        return cls(**kwargs)
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{path or 'config'}: {e}") from e


class ConfigManager:
    """
    Loads, validates and snapshots experiment configurations.
    """

    @staticmethod
    def load_config(config_path: Union[str, Path]) -> ExperimentConfig:
        """
        Load configuration from a JSON file.

        Args:
            config_path: Path to configuration file

        Returns:
            ExperimentConfig

        Raises:
            FileNotFoundError: If the file does not exist
            ConfigError: For unknown keys, wrong types or invalid values
        """
        config_path = Path(config_path)
        if not config_path.exists():
            raise FileNotFoundError(f"Configuration file not found: {config_path}")

        logger.info(f"Loading configuration from {config_path}")
        try:
            data = hlp.read_json(config_path)
        except ValueError as e:
            raise ConfigError(f"{config_path}: invalid JSON ({e})") from e
        config = ExperimentConfig.from_dict(data)
        logger.info("✓ Configuration loaded and validated successfully")
        return config

    @staticmethod
    def save_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
        return hlp.write_json(config.to_dict(), path)

    @staticmethod
    def resolve(config_path: Optional[Union[str, Path]]) -> ExperimentConfig:
        """Load ``config_path`` or fall back to the defaults."""
        if config_path is None:
            logger.info("ℹ No configuration file given; using defaults")
            return ExperimentConfig()
        return ConfigManager.load_config(config_path)


# ---------------------------------------------------------------------------
# Run directories and provenance
# ---------------------------------------------------------------------------

class RunDirectory:
    """
    Output directory of one stage run, held under an exclusive lock file.

    Used as a context manager; ``finalize`` writes the manifest.
    """

    def __init__(self, path: Union[str, Path], stage: str, config: Optional[ExperimentConfig] = None,
                 seed: Optional[int] = None):
        if stage not in STAGES:
            raise ValueError(f"Unknown stage '{stage}'")
        self.path = Path(path)
        self.stage = stage
        self.config = config
        self.seed = seed
        self.inputs: Dict[str, Dict[str, Any]] = {}
        self.outputs: Dict[str, str] = {}
        self._lock_fd: Optional[int] = None

    @property
    def lock_path(self) -> Path:
        return self.path / LOCK_FILE

    def __enter__(self) -> 'RunDirectory':
        self.path.mkdir(parents=True, exist_ok=True)
        try:
            self._lock_fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as e:
            raise RunLockedError(f"Run directory {self.path} is locked by another stage "
                                 f"(remove {self.lock_path} if no stage is running)") from e
        os.write(self._lock_fd, str(os.getpid()).encode())
        if self.config is not None:
            ConfigManager.save_config(self.config, self.path / CONFIG_SNAPSHOT)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            self._lock_fd = None
            self.lock_path.unlink(missing_ok=True)

    def add_input(self, name: str, artifact: Union[str, Path], upstream: Optional[Path] = None) -> None:
        """Record an input file with its hash and, if given, the upstream run manifest hash."""
        artifact = Path(artifact)
        entry: Dict[str, Any] = {'path': str(artifact.resolve()), 'sha256': hlp.sha256_file(artifact)}
        if upstream is not None:
            entry['manifest'] = str(upstream.resolve())
            entry['manifest_sha256'] = hlp.sha256_file(upstream)
        self.inputs[name] = entry

    def add_output(self, name: str, artifact: Union[str, Path]) -> None:
        self.outputs[name] = str(Path(artifact).relative_to(self.path)) \
            if Path(artifact).is_relative_to(self.path) else str(artifact)

    def finalize(self, **extra: Any) -> Path:
        manifest = {'stage': self.stage, 'seed': self.seed, 'version': __version__,
                    'finished': datetime.now(timezone.utc).isoformat(timespec='seconds'),
                    'config_sha256': hlp.sha256_file(self.path / CONFIG_SNAPSHOT)
                    if (self.path / CONFIG_SNAPSHOT).exists() else None,
                    'inputs': self.inputs, 'outputs': self.outputs}
        manifest.update(extra)
        path = hlp.write_json(manifest, self.path / RUN_MANIFEST)
        logger.info(f"✓ Wrote run manifest {path}")
        return path


def require_manifest(artifact: Union[str, Path], stages: Sequence[str]) -> Path:
    """
    Manifest of the run directory that produced ``artifact``.

    The artifact may be a file inside a run directory or the directory itself.

    Raises:
        FileNotFoundError: If the artifact does not exist
        ProvenanceError: If there is no manifest or it comes from another stage
    """
    artifact = Path(artifact)
    if not artifact.exists():
        raise FileNotFoundError(f"Input artifact not found: {artifact}")
    run_dir = artifact if artifact.is_dir() else artifact.parent
    manifest = run_dir / RUN_MANIFEST
    if not manifest.exists():
        raise ProvenanceError(f"{artifact} has no upstream manifest ({manifest} missing); "
                              f"produce it with one of the stages {list(stages)}")
    stage = hlp.read_json(manifest).get('stage')
    if stage not in stages:
        raise ProvenanceError(f"{manifest} was written by stage '{stage}', expected one of {list(stages)}")
    return manifest


# ---------------------------------------------------------------------------
# Stage helpers
# ---------------------------------------------------------------------------

def _log_step(message: str, level: str = "INFO") -> None:
    """Log a pipeline stage with consistent formatting."""
    logger.log(getattr(logging, level), f"[STEP] {message}")


def build_terrain(config: ExperimentConfig, preset: str, seed: Optional[int] = None) -> TerrainMap:
    params = terrain_preset(preset, base=config.terrain, seed=seed)
    return generate_terrain(params)


def build_simulator(config: ExperimentConfig, terrain: TerrainMap, slots: int) -> RoverSimulator:
    return RoverSimulator(terrain, build_pattern(config.pattern), config.simulation, config.geometry,
                          config.reward, slots=slots)


def _stage_terrain(args: argparse.Namespace) -> None:
    config = ConfigManager.resolve(args.config)
    if args.seed is not None:
        config = config.replace('terrain', seed=args.seed)
    _log_step(f"Generating terrain '{args.preset}' (seed {config.terrain.seed})")
    with RunDirectory(args.out, 'terrain', config, config.terrain.seed) as run:
        terrain = build_terrain(config, args.preset)
        save_terrain(terrain, run.path / 'terrain')
        run.add_output('terrain', run.path / 'terrain')
        run.finalize(preset=args.preset, rocks=len(terrain.rocks))


def _stage_train_teacher(args: argparse.Namespace) -> None:
    config = ConfigManager.resolve(args.config)
    if args.seed is not None:
        config = config.replace('seed', seed=args.seed)
    changes = {}
    if args.domain_rand:
        changes['domain_rand'] = True
    if args.total_steps is not None:
        changes['total_steps'] = args.total_steps
    if args.envs is not None:
        changes['num_envs'] = args.envs
    if changes:
        config = config.replace('teacher', **changes)
    section = config.teacher

    with RunDirectory(args.out, 'train-teacher', config, config.seed) as run:
        if args.terrain is not None:
            manifest = require_manifest(args.terrain, ['terrain'])
            terrain_dir = Path(args.terrain) / 'terrain'
            terrain = load_terrain(terrain_dir)
            run.add_input('terrain', terrain_dir / 'terrain.json', manifest)
        else:
            terrain = build_terrain(config, section.terrain_preset)
        simulator = build_simulator(config, terrain, section.num_envs)
        noise = config.noise.resolve(config.noise.domain_rand) if section.domain_rand else None
        env = VecRoverEnv(simulator, section.num_envs, config.seed, noise=noise)
        net = TeacherNet(simulator.pattern.k_dense, simulator.pattern.k_sparse, section.arch, seed=config.seed)

        _log_step(f"Training teacher (seed {config.seed}, {section.total_steps} env steps)")
        result = train_teacher(env, net, config.ppo, section.total_steps, run.path, seed=config.seed,
                               domain_rand=section.domain_rand, checkpoint_interval=section.checkpoint_interval,
                               manifest_extra={'pattern': config.pattern.to_dict(),
                                               'terrain': terrain.params.to_dict()})
        run.add_output('checkpoint', result.checkpoint)
        run.add_output('metrics', result.metrics_csv)
        run.finalize(env_steps=result.env_steps, iterations=result.iterations, domain_rand=section.domain_rand,
                     checkpoint_sha256=hlp.sha256_file(result.checkpoint))


def _check_pattern(manifest: Mapping[str, Any], config: ExperimentConfig, source: Path) -> None:
    pattern = manifest.get('pattern')
    if pattern is not None and pattern != config.pattern.to_dict():
        raise CheckpointMismatchError(f"{source} was built for pattern {pattern}, config has "
                                      f"{config.pattern.to_dict()}")


def _stage_collect(args: argparse.Namespace) -> None:
    config = ConfigManager.resolve(args.config)
    if args.seed is not None:
        config = config.replace('seed', seed=args.seed)
    changes = {}
    if args.envs is not None:
        changes['env_count'] = args.envs
    if args.steps is not None:
        changes['steps'] = args.steps
    if args.stochastic:
        changes['stochastic'] = True
    if changes:
        config = config.replace('dataset', **changes)
    section = config.dataset

    upstream = require_manifest(args.teacher, ['train-teacher'])
    teacher = TeacherNet.from_checkpoint(args.teacher)
    _, ckpt_manifest = load_checkpoint(args.teacher)
    _check_pattern(ckpt_manifest, config, Path(args.teacher))

    with RunDirectory(args.out, 'collect', config, config.seed) as run:
        run.add_input('teacher', args.teacher, upstream)
        terrain = build_terrain(config, section.terrain_preset)
        simulator = build_simulator(config, terrain, section.env_count)
        _log_step(f"Collecting teacher data: {section.env_count} envs x {section.steps} steps")
        result = collect(teacher, simulator, section.env_count, section.steps, run.path, seed=config.seed,
                         stochastic=section.stochastic, shard_envs=section.shard_envs,
                         manifest_extra={'teacher_checkpoint': str(Path(args.teacher).resolve()),
                                         'teacher_sha256': hlp.sha256_file(args.teacher),
                                         'teacher_architecture_hash': teacher.architecture_hash()})
        for path in result.shards:
            run.add_output(path.name, path)
        run.add_output('dataset', result.manifest)
        run.finalize(records=result.records, episodes=result.episodes, successes=result.successes)


def _stage_train_student(args: argparse.Namespace) -> None:
    config = ConfigManager.resolve(args.config)
    if args.seed is not None:
        config = config.replace('seed', seed=args.seed)
    if args.noise is not None:
        config = config.replace('noise', student=args.noise)
    train_changes = {}
    if args.epochs is not None:
        train_changes['epochs'] = args.epochs
    if args.warm_start:
        train_changes['warm_start'] = True
    if train_changes:
        config = dataclasses.replace(config, student=dataclasses.replace(
            config.student, train=dataclasses.replace(config.student.train, **train_changes)))
    train_cfg = config.student.train

    upstream = require_manifest(args.data, ['collect'])
    data_manifest, readers = open_dataset(args.data)
    _check_pattern(data_manifest, config, Path(args.data))
    noise = config.noise.resolve(config.noise.student)

    teacher = None
    teacher_ckpt = data_manifest.get('teacher_checkpoint')
    if (train_cfg.warm_start or train_cfg.latent_loss_weight > 0) and \
            (teacher_ckpt is None or not Path(teacher_ckpt).exists()):
        raise ProvenanceError(f"{args.data}: the teacher checkpoint recorded in the dataset is not available")

    with RunDirectory(args.out, 'train-student', config, config.seed) as run:
        run.add_input('dataset', Path(args.data) / 'dataset.json', upstream)
        net = StudentNet(readers[0].k_dense, readers[0].k_sparse, config.student.arch, seed=config.seed)
        if train_cfg.warm_start:
            warm_start_encoders(net, teacher_ckpt)
        if train_cfg.latent_loss_weight > 0:
            teacher = TeacherNet.from_checkpoint(teacher_ckpt)
        if teacher_ckpt is not None and Path(teacher_ckpt).exists():
            run.add_input('teacher', teacher_ckpt)

        _log_step(f"Distilling student with '{noise.name}' noise for up to {train_cfg.epochs} epochs")
        result = train_student(net, readers, noise, train_cfg, run.path, seed=config.seed, teacher=teacher,
                               manifest_extra={'pattern': config.pattern.to_dict(),
                                               'dataset_sha256': hlp.sha256_file(Path(args.data) / 'dataset.json')})
        run.add_output('checkpoint', result.checkpoint)
        run.add_output('losses', result.loss_csv)
        run.finalize(best_epoch=result.best_epoch, best_loss=result.best_loss, epochs_run=result.epochs_run,
                     stopped_early=result.stopped_early, checkpoint_sha256=hlp.sha256_file(result.checkpoint))


def _stage_eval(args: argparse.Namespace) -> None:
    config = ConfigManager.resolve(args.config)
    if args.seed is not None:
        config = config.replace('seed', seed=args.seed)
    if args.episodes is not None:
        config = config.replace('evaluation', episodes=args.episodes)
    section = config.evaluation
    noise_name = args.noise
    noise = None if noise_name == 'none' else config.noise.resolve(noise_name)

    upstream = require_manifest(args.policy, ['train-teacher', 'train-student'])
    policy = load_policy(args.policy)
    _, ckpt_manifest = load_checkpoint(args.policy)
    _check_pattern(ckpt_manifest, config, Path(args.policy))

    with RunDirectory(args.out, 'eval', config, config.seed) as run:
        run.add_input('policy', args.policy, upstream)
        terrain = build_terrain(config, args.terrain, section.terrain_seed)
        simulator = build_simulator(config, terrain, min(section.num_envs, section.episodes))
        eval_cfg = EvalConfig(terrain=args.terrain, noise=noise_name, episodes=section.episodes,
                              num_envs=section.num_envs, seed=config.seed, save_actions=section.save_actions,
                              save_trajectories=section.save_trajectories)
        _log_step(f"Evaluating {args.policy} on {args.terrain} with '{noise_name}' noise")
        report = run_eval(policy, simulator, eval_cfg, noise, out_dir=run.path,
                          label=args.label or ckpt_manifest.get('kind', 'policy').capitalize(),
                          metadata={'checkpoint_sha256': hlp.sha256_file(args.policy)})
        run.add_output('report', run.path / 'report.json')
        run.add_output('episodes', run.path / 'episodes.csv')
        run.finalize(success_rate=report.success_rate)


def find_reports(paths: Sequence[Union[str, Path]]) -> List[Path]:
    """``report.json`` files given directly or found below the given directories (sorted per directory)."""
    found: List[Path] = []
    for p in map(Path, paths):
        if p.is_file():
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(p.rglob('report.json')))
        else:
            raise FileNotFoundError(f"Report path not found: {p}")
    if not found:
        raise FileNotFoundError(f"No report.json below {list(map(str, paths))}")
    return found


def _stage_report(args: argparse.Namespace) -> None:
    files = find_reports(args.runs)
    reports = [EvalReport.load(f) for f in files]
    with RunDirectory(args.out, 'report') as run:
        for i, f in enumerate(files):
            upstream = f.parent / RUN_MANIFEST
            run.add_input(f'report_{i}', f, upstream if upstream.exists() else None)
        _log_step(f"Comparing {len(reports)} evaluation report(s)")
        table = compare_report(reports, run.path)
        run.add_output('comparison_csv', run.path / 'comparison.csv')
        run.add_output('comparison_md', run.path / 'comparison.md')
        run.finalize(agents=list(table.index), settings=list(table.columns))


def _stage_plot(args: argparse.Namespace) -> None:
    files = [Path(f) for f in args.files]
    for f in files:
        if not f.exists():
            raise FileNotFoundError(f"CSV file not found: {f}")
    out = Path(args.out) if args.out else files[0].with_suffix('.png')
    columns = set(pd.read_csv(files[0], nrows=0).columns)
    _log_step(f"Plotting {len(files)} file(s) to {out}")
    if {'t', 'v_lin', 'v_ang'} <= columns:
        hlp.plot_action_traces(files, out, args.labels)
    else:
        hlp.plot_training_curves(files, out, args.labels, metric=args.metric)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='rovernav',
        description='Teacher-student navigation pipeline for a rover with heightmap perception: '
                    'terrain generation, teacher PPO training, data collection, student distillation, '
                    'evaluation and reporting.')
    parser.add_argument('--verbose', '-v', action='store_true', help='Enable verbose output')
    sub = parser.add_subparsers(dest='command', required=True)

    terrain = sub.add_parser('terrain', help='Terrain maps')
    actions = terrain.add_subparsers(dest='terrain_action', required=True)
    p = actions.add_parser('gen', help='Generate and export a terrain map')
    p.add_argument('--config', help='Path to JSON configuration file')
    p.add_argument('--preset', default='t1', choices=sorted(TERRAIN_PRESETS))
    p.add_argument('--seed', type=int, help='Terrain seed')
    p.add_argument('--out', required=True, help='Run directory')

    p = sub.add_parser('train-teacher', help='Train the teacher policy with PPO')
    p.add_argument('--config', help='Path to JSON configuration file')
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True, help='Run directory')
    p.add_argument('--domain-rand', action='store_true', help='Train on noisy heightmaps')
    p.add_argument('--total-steps', type=int, help='Env-step budget')
    p.add_argument('--envs', type=int, help='Parallel envs')
    p.add_argument('--terrain', help='Terrain run directory (default: generate from config)')

    p = sub.add_parser('collect', help='Log teacher trajectories to dataset shards')
    p.add_argument('--config', help='Path to JSON configuration file')
    p.add_argument('--teacher', required=True, help='Teacher checkpoint')
    p.add_argument('--envs', type=int)
    p.add_argument('--steps', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--stochastic', action='store_true', help='Sample actions instead of using the mean')
    p.add_argument('--out', required=True, help='Run directory')

    p = sub.add_parser('train-student', help='Distill the student from a dataset')
    p.add_argument('--config', help='Path to JSON configuration file')
    p.add_argument('--data', required=True, help='Dataset run directory')
    p.add_argument('--noise', help='Noise preset applied to the heightmaps')
    p.add_argument('--epochs', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--warm-start', action='store_true', help='Initialize encoders from the teacher')
    p.add_argument('--out', required=True, help='Run directory')

    p = sub.add_parser('eval', help='Evaluate a teacher or student checkpoint')
    p.add_argument('--config', help='Path to JSON configuration file')
    p.add_argument('--policy', required=True, help='Policy checkpoint')
    p.add_argument('--terrain', default='t1', choices=sorted(TERRAIN_PRESETS))
    p.add_argument('--noise', default='none', help="Noise preset ('none', 'eval-noise', ...)")
    p.add_argument('--episodes', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--label', help='Agent label in reports')
    p.add_argument('--out', required=True, help='Run directory')

    p = sub.add_parser('report', help='Comparison table of evaluation runs')
    p.add_argument('runs', nargs='+', help='Evaluation run directories or report.json files')
    p.add_argument('--out', required=True, help='Output directory')

    p = sub.add_parser('plot', help='Plot learning curves or action traces')
    p.add_argument('files', nargs='+', help='metrics.csv or actions_<ep>.csv files')
    p.add_argument('--labels', nargs='+', help='Label per file (files sharing a label are aggregated)')
    p.add_argument('--metric', default='mean_return', help='Metrics column for learning curves')
    p.add_argument('--out', help='Output image (default: first file with .png suffix)')
    return parser


_HANDLERS = {'terrain': _stage_terrain, 'train-teacher': _stage_train_teacher, 'collect': _stage_collect,
             'train-student': _stage_train_student, 'eval': _stage_eval, 'report': _stage_report,
             'plot': _stage_plot}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point of the rovernav pipeline; returns the process exit status."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        hlp.set_package_log_level(logging.DEBUG)

    try:
        _HANDLERS[args.command](args)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}", exc_info=args.verbose)
        return 2
    except Exception as e:
        logger.error(f"Stage '{args.command}' failed: {e}", exc_info=args.verbose)
        return 1

    logger.info(f"✓ Stage '{args.command}' completed successfully")
    return 0


if __name__ == '__main__':
    raise SystemExit(main())
