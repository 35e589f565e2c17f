"""
Test suite for the helper module.

This suite includes tests for:
- Angle wrapping and body-to-world rotation of offsets
- Content hashing and JSON helpers
- The HDF5 trajectory store
- The static plots rendered from CSV files
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

import logging

import h5py
import numpy as np
import pandas as pd
import pytest

from rovernav import helper as hlp


def test_setup_logger_does_not_duplicate_handlers():
    """
    Test the setup_logger function:
    - Repeated setup of the same logger keeps a single handler.
    - The requested level is applied.
    """
    logger = hlp.setup_logger("rovernav.test_logger", level=logging.WARNING)
    logger = hlp.setup_logger("rovernav.test_logger", level=logging.WARNING)
    assert len(logger.handlers) == 1
    assert logger.level == logging.WARNING

    hlp.set_package_log_level(logging.DEBUG)
    assert logger.level == logging.DEBUG
    hlp.set_package_log_level(logging.INFO)


def test_wrap_angle():
    """
    Test the wrap_angle function:
    - Values inside (-pi, pi] are unchanged.
    - Both pi and -pi map to +pi.
    - Arrays are wrapped elementwise.
    """
    assert hlp.wrap_angle(0.5) == pytest.approx(0.5)
    assert hlp.wrap_angle(np.pi) == pytest.approx(np.pi)
    assert hlp.wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert hlp.wrap_angle(3 * np.pi) == pytest.approx(np.pi)
    assert hlp.wrap_angle(2 * np.pi + 0.25) == pytest.approx(0.25)

    wrapped = hlp.wrap_angle(np.array([-3 * np.pi / 2, 0.0, 3 * np.pi / 2]))
    np.testing.assert_allclose(wrapped, [np.pi / 2, 0.0, -np.pi / 2], atol=1e-12)


def test_rotate_offsets():
    """
    Test the rotate_offsets function:
    - Zero yaw is the identity.
    - A quarter turn maps the forward axis onto the left axis.
    """
    offsets = np.array([[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_allclose(hlp.rotate_offsets(offsets, 0.0), offsets)
    np.testing.assert_allclose(hlp.rotate_offsets(offsets, np.pi / 2), [[0.0, 1.0], [-2.0, 0.0]], atol=1e-12)


def test_hashes_and_json(tmp_path):
    """
    Test the hashing and JSON helpers:
    - sha256_json does not depend on key order.
    - write_json/read_json preserve content and create parent directories.
    - sha256_file changes with the file content.
    - read_json raises FileNotFoundError for a missing file.
    """
    assert hlp.sha256_json({'a': 1, 'b': [1, 2]}) == hlp.sha256_json({'b': [1, 2], 'a': 1})
    assert hlp.sha256_json({'a': 1}) != hlp.sha256_json({'a': 2})

    path = hlp.write_json({'z': 1.5, 'a': 'text'}, tmp_path / 'nested' / 'doc.json')
    assert path.exists()
    assert hlp.read_json(path) == {'z': 1.5, 'a': 'text'}

    first = hlp.sha256_file(path)
    hlp.write_json({'z': 2.5}, path)
    assert hlp.sha256_file(path) != first

    with pytest.raises(FileNotFoundError):
        hlp.read_json(tmp_path / 'missing.json')


def test_store_and_load_trajectories(tmp_path):
    """
    Test the HDF5 trajectory store:
    - Episodes come back with all datasets and attributes.
    - File-level metadata and the control rate are written.
    """
    trajectories = {
        'episode_0000': {'poses': np.random.rand(5, 3), 'actions': np.random.rand(5, 2)},
        'episode_0001': {'poses': np.random.rand(3, 3), 'actions': np.random.rand(3, 2)},
    }
    attrs = {'episode_0000': {'cause': 'goal_reached', 'success': True}}
    out_file = tmp_path / 'trajectories.h5'
    hlp.store_trajectories(trajectories, out_file, control_rate=5.0, episode_attrs=attrs,
                           metadata={'label': 'Teacher'})

    loaded = hlp.load_trajectories(out_file)
    assert set(loaded) == set(trajectories)
    np.testing.assert_allclose(loaded['episode_0001']['poses'], trajectories['episode_0001']['poses'])
    assert loaded['episode_0000']['attrs']['cause'] == 'goal_reached'
    assert bool(loaded['episode_0000']['attrs']['success'])

    with h5py.File(out_file, 'r') as f:
        assert f.attrs['control_rate'] == 5.0
        assert f.attrs['num_episodes'] == 2
        assert f.attrs['label'] == 'Teacher'

    with pytest.raises(FileNotFoundError):
        hlp.load_trajectories(tmp_path / 'missing.h5')


def test_plot_training_curves(tmp_path):
    """
    Test the plot_training_curves function:
    - Writes an image for runs grouped by label.
    - Rejects CSVs without the requested metric.
    - Rejects a label list of the wrong length.
    """
    files = []
    for seed in range(2):
        frame = pd.DataFrame({'iteration': [1, 2, 3], 'env_steps': [100, 200, 300],
                              'mean_return': np.random.rand(3) + seed})
        path = tmp_path / f'metrics_{seed}.csv'
        frame.to_csv(path, index=False)
        files.append(path)

    out = hlp.plot_training_curves(files, tmp_path / 'curves.png', labels=['teacher', 'teacher'])
    assert out.exists() and out.stat().st_size > 0

    with pytest.raises(ValueError):
        hlp.plot_training_curves(files, tmp_path / 'bad.png', metric='missing_metric')
    with pytest.raises(ValueError):
        hlp.plot_training_curves(files, tmp_path / 'bad.png', labels=['only_one'])
    with pytest.raises(ValueError):
        hlp.plot_training_curves([], tmp_path / 'bad.png')


def test_plot_action_traces(tmp_path):
    """
    Test the plot_action_traces function:
    - Writes an image for one action trace CSV.
    """
    t = np.arange(20) / 5.0
    path = tmp_path / 'actions_0.csv'
    pd.DataFrame({'t': t, 'v_lin': np.sin(t), 'v_ang': np.cos(t)}).to_csv(path, index=False)
    out = hlp.plot_action_traces([path], tmp_path / 'actions.png', labels=['student'])
    assert out.exists() and out.stat().st_size > 0
