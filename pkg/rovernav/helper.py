#!/usr/bin/env python3

"""
helper.py: General helper functions and utilities for the rover navigation pipeline.

This module provides utilities that are shared by the simulation, training and
evaluation stages: colored logging, angle wrapping, content hashing, the HDF5
trajectory store and the static plots emitted from CSV files.
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

import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import h5py
import numpy as np
import pandas as pd

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


# Custom logger with colors
class ColoredFormatter(logging.Formatter):
    """Custom formatter with colors for different log levels."""

    # Color codes
    COLORS = {
        'DEBUG': '\033[36m',  # Cyan
        'INFO': '\033[32m',  # Green
        'WARNING': '\033[33m',  # Yellow
        'ERROR': '\033[31m',  # Red
        'CRITICAL': '\033[35m',  # Magenta
    }
    RESET = '\033[0m'
    BOLD = '\033[1m'

    def format(self, record) -> str:
        """
        Format the log record with colors and separators.

        Args:
            record: The log record to format
        Returns:
            str: The formatted log message with colors and separators
        """
        levelname = record.levelname
        if levelname in self.COLORS:
            record.levelname = f"{self.COLORS[levelname]}{self.BOLD}{levelname}{self.RESET}"

        formatted = super().format(record)
        record.levelname = levelname

        if levelname in ['ERROR', 'CRITICAL']:
            formatted = f"\n{'=' * 80}\n{formatted}\n{'=' * 80}"
        elif isinstance(record.msg, str) and record.msg.startswith('[STEP]'):
            formatted = f"\n{'-' * 60}\n{formatted}\n{'-' * 60}"

        return formatted


def setup_logger(name: str = __name__, level: int = logging.INFO) -> logging.Logger:
    """
    Set up a logger with colored output.

    Args:
        name: Name of the logger (default: module name)
        level: Logging level (default: INFO)

    Returns:
        logging.Logger: Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.propagate = False

    # Remove existing handlers
    logger.handlers = []

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(logging.DEBUG)

    formatter = ColoredFormatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    return logger


def set_package_log_level(level: int) -> None:
    """Apply a log level to every logger of the package."""
    for name, candidate in logging.root.manager.loggerDict.items():
        if name.startswith("rovernav") and isinstance(candidate, logging.Logger):
            candidate.setLevel(level)


# Set up module logger
logger = setup_logger(__name__)


def wrap_angle(angle: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Wrap an angle (or array of angles) to the half-open interval (-pi, pi].

    Args:
        angle: Angle(s) in radians

    Returns:
        Wrapped angle(s); +pi is kept, -pi maps to +pi
    """
    if isinstance(angle, np.ndarray):
        return np.pi - np.mod(np.pi - angle, 2.0 * np.pi)
    return float(np.pi - ((np.pi - angle) % (2.0 * np.pi)))


def rotate_offsets(offsets: np.ndarray, yaw: float) -> np.ndarray:
    """
    Rotate body-frame 2-D offsets into the world frame.

    Args:
        offsets: Array of shape (K, 2)
        yaw: Heading of the body frame (rad)

    Returns:
        np.ndarray: Rotated offsets of shape (K, 2)
    """
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s], [s, c]])
    return offsets @ rot.T


def sha256_file(path: Union[str, Path], chunk_size: int = 1 << 20) -> str:
    """Hex SHA-256 digest of a file's contents."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_json(obj: Any) -> str:
    """Hex SHA-256 digest of the canonical JSON encoding of an object."""
    encoded = json.dumps(obj, sort_keys=True, separators=(',', ':')).encode('utf-8')
    return hashlib.sha256(encoded).hexdigest()


def write_json(obj: Any, path: Union[str, Path]) -> Path:
    """Write an object as indented, key-sorted JSON and return the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_json(path: Union[str, Path]) -> Any:
    """Read a JSON document, raising FileNotFoundError with the path on absence."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def store_trajectories(trajectories: Mapping[str, Mapping[str, np.ndarray]],
                       filename: Union[str, Path],
                       control_rate: float,
                       episode_attrs: Optional[Mapping[str, Mapping[str, Any]]] = None,
                       metadata: Optional[Mapping[str, Any]] = None) -> None:
    """
    Store per-episode trajectories in an HDF5 file.

    One group is written per episode, holding one dataset per array in the
    episode mapping (e.g. ``poses``, ``actions``, ``rewards``).

    Args:
        trajectories: Mapping episode name -> mapping dataset name -> array
        filename: Output file path
        control_rate: Control frequency (Hz), stored as a file attribute
        episode_attrs: Optional per-episode scalar attributes
        metadata: Optional file-level attributes
    """
    filename = Path(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)

    with h5py.File(filename, 'w') as f:
        f.attrs['control_rate'] = control_rate
        f.attrs['num_episodes'] = len(trajectories)
        for key, value in (metadata or {}).items():
            f.attrs[key] = value

        for name, arrays in trajectories.items():
            group = f.create_group(name)
            for dataset_name, data in arrays.items():
                group.create_dataset(dataset_name, data=np.asarray(data))
            for key, value in (episode_attrs or {}).get(name, {}).items():
                group.attrs[key] = value

    logger.info(f"✓ Stored {len(trajectories)} trajectories in {filename}")


def load_trajectories(filename: Union[str, Path]) -> Dict[str, Dict[str, Any]]:
    """
    Load trajectories written by ``store_trajectories``.

    Args:
        filename: HDF5 file path

    Returns:
        Mapping episode name -> {dataset name -> array, 'attrs' -> dict}
    """
    filename = Path(filename)
    if not filename.exists():
        raise FileNotFoundError(f"HDF5 file not found: {filename}")

    result: Dict[str, Dict[str, Any]] = {}
    with h5py.File(filename, 'r') as f:
        for name in f.keys():
            group = f[name]
            entry: Dict[str, Any] = {key: group[key][()] for key in group.keys()}
            entry['attrs'] = {key: group.attrs[key] for key in group.attrs.keys()}
            result[name] = entry
    return result


def plot_training_curves(csv_files: Sequence[Union[str, Path]],
                         filename: Union[str, Path],
                         labels: Optional[Sequence[str]] = None,
                         metric: str = 'mean_return',
                         title: str = 'Training progress') -> Path:
    """
    Plot a metric against env steps, aggregated over runs with the same label.

    Runs sharing a label are aligned on their ``env_steps`` column; the median
    is drawn as a line and the band spans one standard deviation around it.

    Args:
        csv_files: Metrics CSV files (columns ``env_steps`` and ``metric``)
        filename: Output image path
        labels: Group label per file (default: one group per file stem)
        metric: Column to plot
        title: Figure title

    Returns:
        Path of the written image
    """
    if not csv_files:
        raise ValueError("At least one metrics CSV is required")
    labels = list(labels) if labels is not None else [Path(p).stem for p in csv_files]
    if len(labels) != len(csv_files):
        raise ValueError("labels must match csv_files in length")

    groups: Dict[str, List[pd.DataFrame]] = {}
    for path, label in zip(csv_files, labels):
        frame = pd.read_csv(path)
        if 'env_steps' not in frame.columns or metric not in frame.columns:
            raise ValueError(f"{path}: columns 'env_steps' and '{metric}' are required")
        groups.setdefault(label, []).append(frame.set_index('env_steps')[metric])

    fig, ax = plt.subplots(figsize=(8, 5))
    for label, series_list in groups.items():
        table = pd.concat(series_list, axis=1).sort_index()
        median = table.median(axis=1)
        std = table.std(axis=1, ddof=0).fillna(0.0)
        ax.plot(table.index, median, linewidth=1.5, label=label)
        if len(series_list) > 1:
            ax.fill_between(table.index, median - std, median + std, alpha=0.25)

    ax.set_xlabel('Environment steps')
    ax.set_ylabel(metric.replace('_', ' '))
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()

    filename = Path(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(filename, dpi=300, bbox_inches='tight')
    plt.close(fig)
    logger.info(f"✓ Saved training curves to {filename}")
    return filename


def plot_action_traces(csv_files: Sequence[Union[str, Path]],
                       filename: Union[str, Path],
                       labels: Optional[Sequence[str]] = None) -> Path:
    """
    Plot v_lin and v_ang over time for one or more action trace CSVs.

    Args:
        csv_files: Trace files with columns ``t``, ``v_lin``, ``v_ang``
        filename: Output image path
        labels: Legend label per file

    Returns:
        Path of the written image
    """
    if not csv_files:
        raise ValueError("At least one action trace CSV is required")
    labels = list(labels) if labels is not None else [Path(p).stem for p in csv_files]

    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for path, label in zip(csv_files, labels):
        frame = pd.read_csv(path)
        axes[0].plot(frame['t'], frame['v_lin'], linewidth=1.2, label=label)
        axes[1].plot(frame['t'], frame['v_ang'], linewidth=1.2, label=label)

    axes[0].set_ylabel('v_lin (normalized)')
    axes[1].set_ylabel('v_ang (normalized)')
    axes[1].set_xlabel('Time (s)')
    for ax in axes:
        ax.set_ylim(-1.05, 1.05)
        ax.grid(True, alpha=0.3)
    axes[0].legend()

    filename = Path(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(filename, dpi=300, bbox_inches='tight')
    plt.close(fig)
    logger.info(f"✓ Saved action traces to {filename}")
    return filename
