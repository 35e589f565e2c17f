#!/usr/bin/env python3

"""
obs.py: Egocentric observations of the rover.

An observation holds the proprioceptive tuple (distance to goal, heading to
goal, previous action) and two heightmaps sampled in the body frame: a dense
square grid around the rover and a sparse annulus reaching 4 m. Heights are
relative to the ground height under the rover.

Conventions:
    - Body frame: x forward, y left; yaw counter-clockwise positive.
    - heading = wrap(atan2(goal - pos) - yaw), so a goal on the rover's left
      gives a positive heading; a goal straight behind gives +pi.
    - Vector order: distance, heading, prev_action[2], dense[K_d], sparse[K_s].
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

import dataclasses
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Dict, List, Sequence, Tuple

import numpy as np

from . import helper as hlp
from .terrain import OutOfExtentError, TerrainMap, heights_at

if TYPE_CHECKING:
    from .simkin import RoverState

logger = hlp.setup_logger(__name__)

PROPRIO_DIM = 4
ACTION_DIM = 2


@dataclass(frozen=True)
class PatternConfig:
    """Geometry of the heightmap sample pattern (m)."""
    dense_half_extent_m: float = 1.0
    dense_pitch_m: float = 0.05
    sparse_pitch_m: float = 0.15
    sparse_inner_m: float = 1.0
    sparse_outer_m: float = 4.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{f.name} must be a finite positive number, got {value}")
        if self.sparse_inner_m >= self.sparse_outer_m:
            raise ValueError("sparse_inner_m must be smaller than sparse_outer_m")
        steps = 2.0 * self.dense_half_extent_m / self.dense_pitch_m
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("2 * dense_half_extent_m must be a multiple of dense_pitch_m")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SamplePattern:
    """Body-frame sample offsets of the dense and sparse heightmaps."""
    config: PatternConfig
    dense: np.ndarray
    sparse: np.ndarray

    @property
    def k_dense(self) -> int:
        return int(self.dense.shape[0])

    @property
    def k_sparse(self) -> int:
        return int(self.sparse.shape[0])

    @property
    def max_range_m(self) -> float:
        """Largest offset norm over both heightmaps."""
        return float(max(np.hypot(*self.dense.T).max(), np.hypot(*self.sparse.T).max()))


def build_pattern(config: PatternConfig = PatternConfig()) -> SamplePattern:
    """
    Build the sample pattern.

    The dense map is a square grid centered on the rover; the sparse map keeps
    the points of a grid whose norm lies in (inner, outer]. Both are ordered
    row-major with the forward coordinate as the row index.

    Args:
        config: Pattern geometry

    Returns:
        SamplePattern
    """
    n_dense = int(round(2.0 * config.dense_half_extent_m / config.dense_pitch_m)) + 1
    axis = (np.arange(n_dense) - (n_dense - 1) / 2.0) * config.dense_pitch_m
    gx, gy = np.meshgrid(axis, axis, indexing='ij')
    dense = np.stack([gx.ravel(), gy.ravel()], axis=1)

    m = int(math.floor(config.sparse_outer_m / config.sparse_pitch_m))
    axis = np.arange(-m, m + 1) * config.sparse_pitch_m
    gx, gy = np.meshgrid(axis, axis, indexing='ij')
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    norm = np.hypot(grid[:, 0], grid[:, 1])
    sparse = grid[(norm > config.sparse_inner_m) & (norm <= config.sparse_outer_m)]

    dense.flags.writeable = False
    sparse.flags.writeable = False
    return SamplePattern(config=config, dense=dense, sparse=sparse)


@dataclass
class Observation:
    """Teacher observation of one rover at one control step."""
    distance_m: float
    heading_rad: float
    prev_action: Tuple[float, float]
    dense: np.ndarray
    sparse: np.ndarray

    def proprio(self) -> np.ndarray:
        return np.array([self.distance_m, self.heading_rad,
                         self.prev_action[0], self.prev_action[1]], dtype=np.float64)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.proprio(), self.dense, self.sparse])


@dataclass
class ObservationBatch:
    """Stacked observations of several rovers, one row per rover."""
    proprio: np.ndarray
    dense: np.ndarray
    sparse: np.ndarray

    def __post_init__(self):
        n = self.proprio.shape[0]
        if self.proprio.shape != (n, PROPRIO_DIM) or self.dense.shape[0] != n or self.sparse.shape[0] != n:
            raise ValueError(f"Inconsistent observation batch shapes: {self.proprio.shape}, "
                             f"{self.dense.shape}, {self.sparse.shape}")

    def __len__(self) -> int:
        return int(self.proprio.shape[0])

    @classmethod
    def from_observations(cls, observations: Sequence[Observation]) -> 'ObservationBatch':
        return cls(proprio=np.stack([o.proprio() for o in observations]),
                   dense=np.stack([o.dense for o in observations]),
                   sparse=np.stack([o.sparse for o in observations]))

    def take(self, indices) -> 'ObservationBatch':
        return ObservationBatch(self.proprio[indices], self.dense[indices], self.sparse[indices])

    def astype(self, dtype) -> 'ObservationBatch':
        return ObservationBatch(self.proprio.astype(dtype), self.dense.astype(dtype), self.sparse.astype(dtype))


def goal_polar(x: float, y: float, yaw: float, goal: Tuple[float, float]) -> Tuple[float, float]:
    """Distance and body-frame heading from a pose to the goal."""
    dx, dy = goal[0] - x, goal[1] - y
    return math.hypot(dx, dy), hlp.wrap_angle(math.atan2(dy, dx) - yaw)


def observe(state: 'RoverState', terrain: TerrainMap, pattern: SamplePattern) -> Observation:
    """
    Observation of a rover on a terrain.

    Args:
        state: Rover state
        terrain: Terrain map
        pattern: Heightmap sample pattern

    Returns:
        Observation

    Raises:
        OutOfExtentError: If the rover is closer to the map edge than the pattern range
    """
    margin = pattern.max_range_m
    if not terrain.contains(state.x, state.y, margin):
        raise OutOfExtentError(f"Rover at ({state.x:.3f}, {state.y:.3f}) violates the "
                               f"{margin:.2f} m observation margin")

    distance, heading = goal_polar(state.x, state.y, state.yaw, state.goal)

    offsets = np.concatenate([pattern.dense, pattern.sparse], axis=0)
    world = hlp.rotate_offsets(offsets, state.yaw)
    xs = np.append(world[:, 0] + state.x, state.x)
    ys = np.append(world[:, 1] + state.y, state.y)
    heights = heights_at(terrain, xs, ys)
    relative = heights[:-1] - heights[-1]

    return Observation(distance_m=distance, heading_rad=heading,
                       prev_action=(float(state.prev_action[0]), float(state.prev_action[1])),
                       dense=relative[:pattern.k_dense], sparse=relative[pattern.k_dense:])


def observe_all(states: List['RoverState'], terrain: TerrainMap, pattern: SamplePattern) -> ObservationBatch:
    return ObservationBatch.from_observations([observe(s, terrain, pattern) for s in states])
