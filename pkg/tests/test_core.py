"""
Test suite for the core module.

This suite includes tests for:
- Loading, validating and snapshotting experiment configurations
- Run directories, lock files and run manifests
- Provenance checks between pipeline stages
- Exit codes of the command-line entry point
- A miniature run of the whole pipeline
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

import json
from pathlib import Path

import pandas as pd
import pytest

from rovernav import core
from rovernav import helper as hlp
from rovernav.evaluation import read_comparison
from rovernav.nnkernel import load_checkpoint
from rovernav.teacher import TeacherArch, TeacherNet

TINY_CONFIG = {
    "seed": 3,
    "terrain": {"extent_m": 40.0, "cell_m": 0.1, "rock_count": 0},
    "pattern": {"dense_half_extent_m": 1.0, "dense_pitch_m": 0.5, "sparse_pitch_m": 1.0,
                "sparse_inner_m": 1.0, "sparse_outer_m": 4.0},
    "simulation": {"max_episode_steps": 20},
    "ppo": {"horizon": 4, "epochs": 1, "minibatches": 2},
    "teacher": {"num_envs": 2, "total_steps": 16, "checkpoint_interval": 1,
                "arch": {"encoder_sizes": [6, 3], "trunk_sizes": [16, 8]}},
    "dataset": {"env_count": 2, "steps": 20, "shard_envs": 2},
    "student": {"arch": {"encoder_sizes": [6, 3], "gru_hidden": 8, "gru_layers": 1, "gate_sizes": [8, 6],
                         "trunk_sizes": [16, 8]},
                "train": {"seq_len": 4, "batch_size": 4, "epochs": 2, "val_fraction": 0.0}},
    "evaluation": {"episodes": 2, "num_envs": 2, "save_actions": 1}
}


def _write_config(path: Path, data) -> Path:
    path.write_text(json.dumps(data), encoding='utf-8')
    return path


def test_default_config():
    """
    Test the default ExperimentConfig:
    - Resolving without a file gives the defaults.
    - The default dataset holds 512 envs x 1500 steps = 768000 records.
    """
    config = core.ConfigManager.resolve(None)
    assert config == core.ExperimentConfig()
    assert config.dataset.env_count * config.dataset.steps == 768000
    assert config.teacher.arch.trunk_sizes == (512, 256, 128)


def test_config_snapshot_is_byte_identical(tmp_path):
    """
    Test the config snapshot round trip:
    - Saving, loading and saving again writes identical bytes.
    - The loaded config equals the original, including tuples and None values.
    """
    config = core.ExperimentConfig.from_dict(TINY_CONFIG)
    first = core.ConfigManager.save_config(config, tmp_path / 'a.json')
    loaded = core.ConfigManager.load_config(first)
    second = core.ConfigManager.save_config(loaded, tmp_path / 'b.json')
    assert first.read_bytes() == second.read_bytes()
    assert loaded == config
    assert loaded.student.arch.gate_sizes == (8, 6)
    assert loaded.terrain.rock_count == 0 and loaded.evaluation.terrain_seed is None


def test_config_errors(tmp_path):
    """
    Test config validation:
    - Unknown keys, wrong types and invalid values raise ConfigError naming the field.
    - Optional fields are type checked when set; null is only accepted where a field is optional.
    - Integers are accepted for float fields.
    - A missing file raises FileNotFoundError; broken JSON raises ConfigError.
    """
    with pytest.raises(core.ConfigError, match='teacher.bogus'):
        core.ExperimentConfig.from_dict({"teacher": {"bogus": 1}})
    with pytest.raises(core.ConfigError, match='ppo.lr'):
        core.ExperimentConfig.from_dict({"ppo": {"lr": "fast"}})
    with pytest.raises(core.ConfigError, match='dataset.steps'):
        core.ExperimentConfig.from_dict({"dataset": {"steps": 1.5}})
    with pytest.raises(core.ConfigError, match='ppo'):
        core.ExperimentConfig.from_dict({"ppo": {"gamma": 2.0}})
    with pytest.raises(core.ConfigError):
        core.ExperimentConfig.from_dict({"noise": {"student": "loud"}})
    with pytest.raises(core.ConfigError):
        core.ExperimentConfig().replace('teacher', num_envs=0)
    with pytest.raises(core.ConfigError, match='terrain.rock_count'):
        core.ExperimentConfig.from_dict({"terrain": {"rock_count": "ten"}})
    with pytest.raises(core.ConfigError, match='student.train.max_batches_per_epoch'):
        core.ExperimentConfig.from_dict({"student": {"train": {"max_batches_per_epoch": "all"}}})
    with pytest.raises(core.ConfigError, match='evaluation.terrain_seed'):
        core.ExperimentConfig.from_dict({"evaluation": {"terrain_seed": 1.5}})
    with pytest.raises(core.ConfigError, match='ppo.lr'):
        core.ExperimentConfig.from_dict({"ppo": {"lr": None}})
    optional = core.ExperimentConfig.from_dict({"terrain": {"rock_count": 3}, "evaluation": {"terrain_seed": None}})
    assert optional.terrain.rock_count == 3 and optional.evaluation.terrain_seed is None

    config = core.ExperimentConfig.from_dict({"ppo": {"lr": 1}, "teacher": {"domain_rand": True}})
    assert config.ppo.lr == 1.0 and isinstance(config.ppo.lr, float)
    assert config.teacher.domain_rand

    custom = core.ExperimentConfig.from_dict({"noise": {"student": "mine", "presets": {"mine": {"modes": {
        "only": {"sigma_m": 0.2, "offset_sigma_m": 0.0, "zero_fraction": 0.0, "probability": 1.0}}}}}})
    assert custom.noise.resolve('mine').name == 'mine'

    with pytest.raises(FileNotFoundError):
        core.ConfigManager.load_config(tmp_path / 'missing.json')
    broken = tmp_path / 'broken.json'
    broken.write_text('{"seed": ', encoding='utf-8')
    with pytest.raises(core.ConfigError):
        core.ConfigManager.load_config(broken)


def test_run_directory(tmp_path):
    """
    Test RunDirectory:
    - The config snapshot and manifest are written and the lock is released.
    - A directory holding a lock file is refused.
    """
    config = core.ExperimentConfig()
    with core.RunDirectory(tmp_path / 'run', 'eval', config, seed=5) as run:
        assert run.lock_path.exists()
        artifact = hlp.write_json({'x': 1}, run.path / 'out.json')
        run.add_output('out', artifact)
        manifest_path = run.finalize(extra_field=7)
    assert not (tmp_path / 'run' / core.LOCK_FILE).exists()
    manifest = hlp.read_json(manifest_path)
    assert manifest['stage'] == 'eval' and manifest['seed'] == 5 and manifest['extra_field'] == 7
    assert manifest['outputs'] == {'out': 'out.json'}
    assert manifest['config_sha256'] == hlp.sha256_file(tmp_path / 'run' / core.CONFIG_SNAPSHOT)

    (tmp_path / 'locked').mkdir()
    (tmp_path / 'locked' / core.LOCK_FILE).write_text('123')
    with pytest.raises(core.RunLockedError):
        with core.RunDirectory(tmp_path / 'locked', 'eval'):
            pass
    with pytest.raises(ValueError):
        core.RunDirectory(tmp_path / 'x', 'deploy')


def test_require_manifest(tmp_path):
    """
    Test require_manifest:
    - A missing artifact raises FileNotFoundError.
    - An artifact without a manifest or from the wrong stage raises ProvenanceError.
    """
    with pytest.raises(FileNotFoundError):
        core.require_manifest(tmp_path / 'nothing.ckpt', ['train-teacher'])

    ckpt = TeacherNet(25, 44, TeacherArch((6, 3), (16, 8))).save(tmp_path / 'teacher.ckpt')
    with pytest.raises(core.ProvenanceError):
        core.require_manifest(ckpt, ['train-teacher'])

    hlp.write_json({'stage': 'collect'}, tmp_path / core.RUN_MANIFEST)
    with pytest.raises(core.ProvenanceError):
        core.require_manifest(ckpt, ['train-teacher'])
    assert core.require_manifest(tmp_path, ['collect']) == tmp_path / core.RUN_MANIFEST


def test_main_exit_codes(tmp_path):
    """
    Test the exit codes of main:
    - An invalid configuration returns 2.
    - A checkpoint without provenance, a missing file or a locked run directory returns 1.
    - An unknown stage or a terrain command without its action is a usage error.
    """
    bad = _write_config(tmp_path / 'bad.json', {"teacher": {"num_envs": "many"}})
    assert core.main(['terrain', 'gen', '--config', str(bad), '--out', str(tmp_path / 't')]) == 2
    optional = _write_config(tmp_path / 'optional.json', {"terrain": {"rock_count": "many"}})
    assert core.main(['terrain', 'gen', '--config', str(optional), '--out', str(tmp_path / 't')]) == 2

    ckpt = TeacherNet(25, 44, TeacherArch((6, 3), (16, 8))).save(tmp_path / 'bare' / 'teacher.ckpt')
    assert core.main(['eval', '--policy', str(ckpt), '--out', str(tmp_path / 'e')]) == 1
    assert core.main(['eval', '--policy', str(tmp_path / 'none.ckpt'), '--out', str(tmp_path / 'e')]) == 1

    locked = tmp_path / 'locked'
    locked.mkdir()
    (locked / core.LOCK_FILE).write_text('1')
    config = _write_config(tmp_path / 'tiny.json', TINY_CONFIG)
    assert core.main(['terrain', 'gen', '--config', str(config), '--out', str(locked)]) == 1

    with pytest.raises(SystemExit):
        core.main(['fly'])
    with pytest.raises(SystemExit):
        core.main(['terrain', '--out', str(tmp_path / 't')])


def test_plot_stage(tmp_path):
    """
    Test the plot stage:
    - Metrics files give a learning-curve image.
    - Action traces are detected by their columns.
    """
    for seed in range(2):
        pd.DataFrame({'env_steps': [0, 100, 200], 'mean_return': [0.0, 1.0 + seed, 2.0]}) \
            .to_csv(tmp_path / f'metrics_{seed}.csv', index=False)
    files = [str(tmp_path / 'metrics_0.csv'), str(tmp_path / 'metrics_1.csv')]
    assert core.main(['plot', *files, '--labels', 'teacher', 'teacher', '--out', str(tmp_path / 'c.png')]) == 0
    assert (tmp_path / 'c.png').exists()

    pd.DataFrame({'t': [0.0, 0.2], 'v_lin': [0.1, 0.2], 'v_ang': [0.0, -0.1], 'delta_sq': [0.0, 0.02]}) \
        .to_csv(tmp_path / 'actions_0.csv', index=False)
    assert core.main(['plot', str(tmp_path / 'actions_0.csv')]) == 0
    assert (tmp_path / 'actions_0.png').exists()
    assert core.main(['plot', str(tmp_path / 'missing.csv')]) == 1


def test_pipeline_end_to_end(tmp_path):
    """
    Test a miniature run of every stage through main:
    - Each stage exits with 0 and writes its manifest.
    - The student manifest points back to the dataset, which points back to the teacher.
    - The report stage builds a comparison table of both agents.
    """
    config = str(_write_config(tmp_path / 'tiny.json', TINY_CONFIG))
    runs = tmp_path / 'runs'

    assert core.main(['terrain', 'gen', '--config', config, '--preset', 'flat', '--out', str(runs / 'terrain')]) == 0
    assert core.main(['train-teacher', '--config', config, '--terrain', str(runs / 'terrain'),
                      '--out', str(runs / 'teacher')]) == 0
    teacher_ckpt = runs / 'teacher' / 'teacher.ckpt'
    assert load_checkpoint(teacher_ckpt)[1]['iteration'] == 2
    assert len(pd.read_csv(runs / 'teacher' / 'metrics.csv')) == 2

    assert core.main(['collect', '--config', config, '--teacher', str(teacher_ckpt),
                      '--out', str(runs / 'data')]) == 0
    assert hlp.read_json(runs / 'data' / core.RUN_MANIFEST)['records'] == 40

    assert core.main(['train-student', '--config', config, '--data', str(runs / 'data'), '--warm-start',
                      '--out', str(runs / 'student')]) == 0
    student_manifest = hlp.read_json(runs / 'student' / core.RUN_MANIFEST)
    assert student_manifest['inputs']['dataset']['manifest_sha256'] == \
        hlp.sha256_file(runs / 'data' / core.RUN_MANIFEST)
    data_manifest = hlp.read_json(runs / 'data' / core.RUN_MANIFEST)
    assert data_manifest['inputs']['teacher']['sha256'] == hlp.sha256_file(teacher_ckpt)

    for agent, ckpt in (('teacher', teacher_ckpt), ('student', runs / 'student' / 'student.ckpt')):
        assert core.main(['eval', '--config', config, '--policy', str(ckpt), '--noise', 'eval-noise',
                          '--label', agent, '--out', str(runs / f'eval_{agent}')]) == 0
    assert (runs / 'eval_student' / 'actions_0.csv').exists()

    assert core.main(['report', str(runs / 'eval_teacher'), str(runs / 'eval_student'),
                      '--out', str(runs / 'report')]) == 0
    table = read_comparison(runs / 'report' / 'comparison.csv')
    assert list(table.index) == ['teacher', 'student']
    assert list(table.columns) == ['T1(n)']

    # a teacher run is not a dataset
    assert core.main(['train-student', '--config', config, '--data', str(runs / 'teacher'),
                      '--out', str(runs / 'bad')]) == 1
