#!/usr/bin/env python3

"""
simkin.py: Kinematic rover environment.

The rover is commanded with a normalized (v_lin, v_ang) pair at 5 Hz. Each
command is held for 12 physics substeps at 60 Hz of planar unicycle
integration. If the linear/angular velocity ratio drops below 0.15 the rover
turns on the spot. Ackermann wheel setpoints are provided as a pure function
of the command for hardware use and tests; they do not feed back into the
planar motion.

Episode lifecycle:
    reset  -> rover at its spawn slot, random yaw, goal on a 9 m circle
    step   -> integrate, check collision, evaluate termination, reward
    end    -> goal reached (d <= 0.25 m), fatal collision (non-climbable rock
              or leaving the navigable region), or timeout (600 steps)
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
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import helper as hlp
from .noise import EpisodeNoise, NoiseConfig, apply_noise, draw_episode_noise
from .obs import Observation, ObservationBatch, SamplePattern, goal_polar, observe
from .reward import RewardWeights, total_reward
from .terrain import TerrainMap

logger = hlp.setup_logger(__name__)

TRACE_COLUMNS = ['t', 'x', 'y', 'yaw', 'v_lin', 'v_ang', 'reward', 'cause']


class ResetError(RuntimeError):
    """Raised when no valid goal can be sampled for a reset."""


class TerminationCause(str, Enum):
    GOAL_REACHED = 'goal_reached'
    COLLISION = 'collision'
    TIMEOUT = 'timeout'
    NONE = 'none'


class CollisionKind(str, Enum):
    NONE = 'none'
    CLIMBABLE_CONTACT = 'climbable_contact'
    FATAL = 'fatal'


class Action(NamedTuple):
    """Normalized rover command; both components live in [-1, 1]."""
    v_lin: float
    v_ang: float

    @classmethod
    def zero(cls) -> 'Action':
        return cls(0.0, 0.0)

    @classmethod
    def from_any(cls, value: Sequence[float]) -> 'Action':
        """Build a clamped action from any 2-sequence, rejecting NaN components."""
        v_lin, v_ang = float(value[0]), float(value[1])
        if math.isnan(v_lin) or math.isnan(v_ang):
            raise ValueError(f"Action components must not be NaN, got ({v_lin}, {v_ang})")
        return cls(min(1.0, max(-1.0, v_lin)), min(1.0, max(-1.0, v_ang)))


@dataclass(frozen=True)
class KinematicsConfig:
    """Rates, limits and episode rules of the simulator."""
    v_lin_max: float = 0.5
    v_ang_max: float = 0.6
    physics_hz: int = 60
    control_hz: int = 5
    point_turn_ratio: float = 0.15
    ratio_eps: float = 1e-6
    goal_radius_m: float = 9.0
    goal_threshold_m: float = 0.25
    goal_clearance_m: float = 1.0
    max_goal_attempts: int = 100
    max_episode_steps: int = 600
    collision_rays: int = 16
    spawn_margin_m: float = 14.0
    boundary_margin_m: float = 4.5

    def __post_init__(self):
        for name in ('v_lin_max', 'v_ang_max', 'goal_radius_m', 'goal_threshold_m', 'ratio_eps'):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.physics_hz <= 0 or self.control_hz <= 0 or self.physics_hz % self.control_hz:
            raise ValueError("physics_hz must be a positive multiple of control_hz")
        if self.max_episode_steps < 1 or self.max_goal_attempts < 1 or self.collision_rays < 1:
            raise ValueError("max_episode_steps, max_goal_attempts and collision_rays must be >= 1")
        if self.point_turn_ratio < 0 or self.goal_clearance_m < 0:
            raise ValueError("point_turn_ratio and goal_clearance_m must be non-negative")
        if self.spawn_margin_m < self.boundary_margin_m:
            raise ValueError("spawn_margin_m must not be smaller than boundary_margin_m")

    @property
    def substeps(self) -> int:
        return self.physics_hz // self.control_hz

    @property
    def physics_dt(self) -> float:
        return 1.0 / self.physics_hz

    @property
    def control_dt(self) -> float:
        return 1.0 / self.control_hz


@dataclass(frozen=True)
class RoverGeometry:
    """
    Rover footprint, wheel layout (body frame, x forward, y left) and collision radius.

    Wheel order: front-left, front-right, middle-left, middle-right, rear-left, rear-right.
    """
    footprint_x_m: float = 1.03
    footprint_y_m: float = 1.05
    wheel_positions: Tuple[Tuple[float, float], ...] = (
        (0.4, 0.45), (0.4, -0.45), (0.0, 0.45), (0.0, -0.45), (-0.4, 0.45), (-0.4, -0.45))
    steerable: Tuple[bool, ...] = (True, True, False, False, True, True)
    collision_radius_m: float = 0.74

    def __post_init__(self):
        if len(self.wheel_positions) != 6 or len(self.steerable) != 6:
            raise ValueError("RoverGeometry requires six wheels with steerable flags")
        half_diagonal = 0.5 * math.hypot(self.footprint_x_m, self.footprint_y_m)
        if self.collision_radius_m < 0.9 * half_diagonal:
            raise ValueError(f"collision_radius_m must be >= {0.9 * half_diagonal:.4f} m")
        for (x, _), steer in zip(self.wheel_positions, self.steerable):
            if not steer and x != 0.0:
                raise ValueError("Fixed wheels must sit on the rear axle line x = 0")

    @property
    def wheels(self) -> np.ndarray:
        return np.array(self.wheel_positions, dtype=np.float64)


@dataclass
class WheelSetpoints:
    """Steering angle (rad, in (-pi/2, pi/2]) and signed wheel speed (m/s) per wheel."""
    steer_angle_rad: np.ndarray
    wheel_speed_mps: np.ndarray
    point_turn: bool
    icr: Optional[Tuple[float, float]]


def denormalize(action: Action, config: KinematicsConfig) -> Tuple[float, float]:
    """
    Physical (v, omega) of an action after applying the point-turn rule.

    Returns:
        (v m/s, omega rad/s); v is zero in point-turn mode
    """
    v = action.v_lin * config.v_lin_max
    w = action.v_ang * config.v_ang_max
    if abs(v) / max(abs(w), config.ratio_eps) < config.point_turn_ratio:
        v = 0.0
    return v, w


def ackermann_setpoints(action: Action, geometry: RoverGeometry = RoverGeometry(),
                        config: KinematicsConfig = KinematicsConfig()) -> WheelSetpoints:
    """
    Per-wheel steering angles and speeds for a command.

    Every wheel velocity is the rigid-body velocity omega x (p - ICR), with the
    instantaneous center of rotation at (0, v / omega) in the body frame. In
    point-turn mode the ICR is the rover center. For omega = 0 the rover drives
    straight with all wheels aligned.

    Args:
        action: Normalized command
        geometry: Wheel layout
        config: Velocity limits and point-turn rule

    Returns:
        WheelSetpoints
    """
    action = Action.from_any(action)
    v, w = denormalize(action, config)
    wheels = geometry.wheels
    point_turn = v == 0.0 and w != 0.0

    if w == 0.0:
        return WheelSetpoints(steer_angle_rad=np.zeros(len(wheels)),
                              wheel_speed_mps=np.full(len(wheels), v),
                              point_turn=False, icr=None)

    radius = v / w
    vel_x = w * (radius - wheels[:, 1])
    vel_y = w * wheels[:, 0]
    steer = np.arctan2(vel_y, vel_x)
    steer = np.where(steer > np.pi / 2, steer - np.pi, steer)
    steer = np.where(steer <= -np.pi / 2, steer + np.pi, steer)
    speed = vel_x * np.cos(steer) + vel_y * np.sin(steer)
    return WheelSetpoints(steer_angle_rad=steer, wheel_speed_mps=speed,
                          point_turn=point_turn, icr=(0.0, radius))


@dataclass
class RoverState:
    """Planar pose, goal and episode counters of one rover."""
    x: float
    y: float
    yaw: float
    goal: Tuple[float, float]
    prev_action: Action = Action(0.0, 0.0)
    steps_elapsed: int = 0
    alive: bool = True
    slot: int = 0

    def copy(self) -> 'RoverState':
        return dataclasses.replace(self)


@dataclass
class StepResult:
    observation: Observation
    reward: float
    terminated: bool
    termination_cause: TerminationCause
    collision: CollisionKind = CollisionKind.NONE


def integrate_unicycle(x: float, y: float, yaw: float, action: Action,
                       config: KinematicsConfig) -> Tuple[float, float, float]:
    """Hold an action for one control step of explicit Euler substeps."""
    v, w = denormalize(action, config)
    dt = config.physics_dt
    for _ in range(config.substeps):
        x += v * math.cos(yaw) * dt
        y += v * math.sin(yaw) * dt
        yaw += w * dt
    return x, y, hlp.wrap_angle(yaw)


def check_collision(state: RoverState, terrain: TerrainMap, geometry: RoverGeometry = RoverGeometry(),
                    n_rays: int = 16) -> CollisionKind:
    """
    Ray-based collision check against the rock layer.

    ``n_rays`` body-frame rays are cast from the rover center to the collision
    radius. A rock counts as hit when a ray crosses its disc or when its disc
    overlaps the rover disc, so small rocks between two rays are not missed.
    Hitting a non-climbable rock is fatal; hitting only climbable rocks is
    reported as contact.

    Args:
        state: Rover state
        terrain: Terrain map
        geometry: Rover geometry (collision radius)
        n_rays: Number of rays

    Returns:
        CollisionKind
    """
    radius = geometry.collision_radius_m
    idx = terrain.index.query((state.x, state.y), radius)
    if idx.size == 0:
        return CollisionKind.NONE

    angles = state.yaw + 2.0 * np.pi * np.arange(n_rays) / n_rays
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    rel = terrain.index.centers[idx] - np.array([state.x, state.y])
    proj = np.clip(rel @ dirs.T, 0.0, radius)
    diff = rel[:, None, :] - proj[:, :, None] * dirs[None, :, :]
    dist2 = np.einsum('mnk,mnk->mn', diff, diff)
    rock_radii = terrain.index.radii[idx]
    hit = np.any(dist2 <= rock_radii[:, None] ** 2, axis=1)
    hit |= np.hypot(rel[:, 0], rel[:, 1]) <= radius + rock_radii

    climbable = terrain.rock_climbable[idx]
    if np.any(hit & ~climbable):
        return CollisionKind.FATAL
    if np.any(hit & climbable):
        return CollisionKind.CLIMBABLE_CONTACT
    return CollisionKind.NONE


def _disc_is_free(terrain: TerrainMap, point: Tuple[float, float], radius: float) -> bool:
    idx = terrain.index.query(point, radius)
    return not np.any(~terrain.rock_climbable[idx])


def spawn_points(terrain: TerrainMap, count: int, geometry: RoverGeometry = RoverGeometry(),
                 config: KinematicsConfig = KinematicsConfig()) -> List[Tuple[float, float]]:
    """
    Fixed spawn positions for ``count`` env slots.

    Slots form a square grid inside ``spawn_margin_m`` of the map edges. A
    slot whose rover disc touches a non-climbable rock moves to the first free
    point on rings of 0.5 m spacing around it.

    Raises:
        ValueError: If the map is too small or a slot has no free point within 3 m
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    lo, hi = config.spawn_margin_m, terrain.extent_m - config.spawn_margin_m
    if hi < lo:
        raise ValueError(f"Map extent {terrain.extent_m} m leaves no room for spawn margin "
                         f"{config.spawn_margin_m} m")

    side = int(math.ceil(math.sqrt(count)))
    coords = lo + (hi - lo) * (np.arange(side) + 0.5) / side
    clearance = geometry.collision_radius_m + 0.1
    edge_margin = max(config.boundary_margin_m, config.spawn_margin_m - 3.0)

    points = []
    for slot in range(count):
        base = (float(coords[slot % side]), float(coords[slot // side]))
        candidates = [base]
        for ring in range(1, 7):
            r = 0.5 * ring
            for k in range(8 * ring):
                phi = 2.0 * math.pi * k / (8 * ring)
                candidates.append((base[0] + r * math.cos(phi), base[1] + r * math.sin(phi)))
        for candidate in candidates:
            if terrain.contains(*candidate, edge_margin) and \
                    _disc_is_free(terrain, candidate, clearance):
                points.append(candidate)
                break
        else:
            raise ValueError(f"No free spawn point near slot {slot} at {base}")
    return points


class RoverSimulator:
    """
    Rover environment over one terrain map.

    Holds the immutable pieces shared by all env slots (terrain, sample
    pattern, geometry, config, reward weights and spawn points). Rover states
    are owned by the caller and mutated only by ``step_batch``.
    """

    def __init__(self, terrain: TerrainMap, pattern: SamplePattern,
                 config: KinematicsConfig = KinematicsConfig(),
                 geometry: RoverGeometry = RoverGeometry(),
                 weights: RewardWeights = RewardWeights(),
                 slots: int = 1):
        self.terrain = terrain
        self.pattern = pattern
        self.config = config
        self.geometry = geometry
        self.weights = weights
        self.spawn_points = spawn_points(terrain, slots, geometry, config)

    @property
    def slots(self) -> int:
        return len(self.spawn_points)

    def reset(self, slot: int, rng: np.random.Generator) -> RoverState:
        """
        Spawn a rover in a slot with a random yaw and a goal on the goal circle.

        The goal is re-sampled until it is at least ``goal_clearance_m`` away
        from every non-climbable rock and at least ``goal_threshold_m`` inside the
        navigable region, so the goal disc never reaches the boundary.

        Raises:
            ResetError: After ``max_goal_attempts`` rejected goals
        """
        cfg = self.config
        sx, sy = self.spawn_points[slot % self.slots]
        yaw = hlp.wrap_angle(float(rng.uniform(-np.pi, np.pi)))

        for _ in range(cfg.max_goal_attempts):
            phi = float(rng.uniform(0.0, 2.0 * np.pi))
            goal = (sx + cfg.goal_radius_m * math.cos(phi), sy + cfg.goal_radius_m * math.sin(phi))
            if not self.terrain.contains(*goal, cfg.boundary_margin_m + cfg.goal_threshold_m):
                continue
            if cfg.goal_clearance_m > 0 and not _disc_is_free(self.terrain, goal, cfg.goal_clearance_m):
                continue
            return RoverState(x=sx, y=sy, yaw=yaw, goal=goal, slot=slot)

        raise ResetError(f"No valid goal for slot {slot} after {cfg.max_goal_attempts} attempts")

    def observe(self, state: RoverState) -> Observation:
        return observe(state, self.terrain, self.pattern)

    def check_collision(self, state: RoverState) -> CollisionKind:
        return check_collision(state, self.terrain, self.geometry, self.config.collision_rays)

    def step(self, state: RoverState, action: Action) -> StepResult:
        """Advance one alive rover by one control step (mutates ``state``)."""
        cfg = self.config
        x, y, yaw = integrate_unicycle(state.x, state.y, state.yaw, action, cfg)
        state.x, state.y, state.yaw = x, y, yaw
        state.steps_elapsed += 1

        collision = self.check_collision(state)
        out_of_bounds = not self.terrain.contains(x, y, cfg.boundary_margin_m)
        distance, _ = goal_polar(x, y, yaw, state.goal)

        if distance <= cfg.goal_threshold_m:
            cause = TerminationCause.GOAL_REACHED
        elif collision == CollisionKind.FATAL or out_of_bounds:
            cause = TerminationCause.COLLISION
        elif state.steps_elapsed >= cfg.max_episode_steps:
            cause = TerminationCause.TIMEOUT
        else:
            cause = TerminationCause.NONE

        prev_action = state.prev_action
        state.prev_action = action
        observation = self.observe(state)
        reward = total_reward(observation.distance_m, observation.heading_rad, action, prev_action,
                              cause, self.weights)

        terminated = cause != TerminationCause.NONE
        if terminated:
            state.alive = False
        return StepResult(observation=observation, reward=reward, terminated=terminated,
                          termination_cause=cause, collision=collision)

    def step_batch(self, states: Sequence[RoverState], actions: Sequence[Sequence[float]]) -> List[StepResult]:
        """
        Advance independent rovers by one control step each.

        Args:
            states: Alive rover states (mutated in place)
            actions: One action per state; components are clamped to [-1, 1]

        Returns:
            List of StepResult, aligned with ``states``

        Raises:
            ValueError: On length mismatch, NaN actions or terminated states
        """
        if len(states) != len(actions):
            raise ValueError(f"Got {len(states)} states but {len(actions)} actions")
        clamped = [Action.from_any(a) for a in actions]
        if not all(s.alive for s in states):
            raise ValueError("step_batch requires all states to be alive")
        return [self.step(state, action) for state, action in zip(states, clamped)]


@dataclass
class EpisodeSummary:
    env_index: int
    episode_return: float
    steps: int
    cause: TerminationCause


@dataclass
class VecStep:
    """Result of one vectorized step; ``observations`` already reflect auto-resets."""
    rewards: np.ndarray
    dones: np.ndarray
    causes: List[TerminationCause]
    completed: List[EpisodeSummary]
    observations: ObservationBatch
    applied_actions: np.ndarray


class VecRoverEnv:
    """
    A fixed set of env slots stepped together with automatic resets.

    Every slot owns two random streams spawned from one seed: one for resets
    and one for observation noise. Results therefore do not depend on the
    number of slots stepped at once or on their order.
    """

    def __init__(self, simulator: RoverSimulator, num_envs: int, seed: int,
                 noise: Optional[NoiseConfig] = None):
        if num_envs < 1:
            raise ValueError(f"num_envs must be >= 1, got {num_envs}")
        self.sim = simulator
        self.num_envs = num_envs
        self.noise = noise

        self.env_rngs: List[np.random.Generator] = []
        self.noise_rngs: List[np.random.Generator] = []
        for child in np.random.SeedSequence(seed).spawn(num_envs):
            env_seq, noise_seq = child.spawn(2)
            self.env_rngs.append(np.random.default_rng(env_seq))
            self.noise_rngs.append(np.random.default_rng(noise_seq))

        self.states = [simulator.reset(i, self.env_rngs[i]) for i in range(num_envs)]
        self.observations = [simulator.observe(s) for s in self.states]
        self.episode_noise: List[Optional[EpisodeNoise]] = [self._draw_noise(i) for i in range(num_envs)]
        self.returns = np.zeros(num_envs)

    def _draw_noise(self, i: int) -> Optional[EpisodeNoise]:
        if self.noise is None:
            return None
        return draw_episode_noise(self.noise, self.noise_rngs[i])

    def observation_batch(self) -> ObservationBatch:
        """Clean observations of all slots."""
        return ObservationBatch.from_observations(self.observations)

    def noisy_observation_batch(self) -> ObservationBatch:
        """Observations with one step of episode noise applied (clean when no noise is configured)."""
        batch = self.observation_batch()
        if self.noise is None:
            return batch
        dense = np.empty_like(batch.dense)
        sparse = np.empty_like(batch.sparse)
        for i, episode_noise in enumerate(self.episode_noise):
            dense[i] = apply_noise(batch.dense[i], episode_noise, self.noise_rngs[i])
            sparse[i] = apply_noise(batch.sparse[i], episode_noise, self.noise_rngs[i])
        return ObservationBatch(batch.proprio, dense, sparse)

    def step(self, actions: np.ndarray) -> VecStep:
        """
        Step every slot and reset the slots whose episode terminated.

        Args:
            actions: Array (num_envs, 2) of normalized actions

        Returns:
            VecStep
        """
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.num_envs, 2):
            raise ValueError(f"actions must have shape {(self.num_envs, 2)}, got {actions.shape}")

        results = self.sim.step_batch(self.states, actions)
        applied = np.array([s.prev_action for s in self.states], dtype=np.float64)
        rewards = np.array([r.reward for r in results])
        dones = np.array([r.terminated for r in results])
        self.returns += rewards

        completed = []
        for i, result in enumerate(results):
            if result.terminated:
                completed.append(EpisodeSummary(env_index=i, episode_return=float(self.returns[i]),
                                                steps=self.states[i].steps_elapsed,
                                                cause=result.termination_cause))
                self.returns[i] = 0.0
                self.states[i] = self.sim.reset(i, self.env_rngs[i])
                self.observations[i] = self.sim.observe(self.states[i])
                self.episode_noise[i] = self._draw_noise(i)
            else:
                self.observations[i] = result.observation

        return VecStep(rewards=rewards, dones=dones, causes=[r.termination_cause for r in results],
                       completed=completed, observations=self.observation_batch(), applied_actions=applied)


def trace_frame(records: Sequence[Dict[str, Any]]) -> pd.DataFrame:
    """Trajectory trace as a DataFrame with the columns t, x, y, yaw, v_lin, v_ang, reward, cause."""
    frame = pd.DataFrame(list(records), columns=TRACE_COLUMNS)
    frame['cause'] = [c.value if isinstance(c, Enum) else str(c) for c in frame['cause']]
    return frame


def save_trace_csv(records: Sequence[Dict[str, Any]], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace_frame(records).to_csv(path, index=False)
    return path
