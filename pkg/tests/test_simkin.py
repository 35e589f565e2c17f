"""
Test suite for the simkin module.

This suite includes tests for:
- Action clamping and Ackermann wheel setpoints
- Unicycle integration over one control step
- Ray-based collision checks against the rock layer
- Resets, termination causes and batched stepping
- The vectorized environment with automatic resets
- Trajectory trace export
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

import numpy as np
import pandas as pd
import pytest

from rovernav import reward as rw
from rovernav import simkin as sk
from rovernav.terrain import Rock, TerrainMap, TerrainParams


def _rock_map(rocks):
    """Flat 40 m map with an explicit rock layer."""
    params = TerrainParams(extent_m=40.0, cell_m=0.5, rock_count=0)
    return TerrainMap(params=params, heights=np.zeros((81, 81)), rocks=list(rocks))


def _disc_oracle(state, rocks, radius):
    """Brute-force disc-disc intersection over every rock."""
    fatal = contact = False
    for rock in rocks:
        if math.hypot(rock.center[0] - state.x, rock.center[1] - state.y) <= radius + rock.radius_m:
            if rock.climbable:
                contact = True
            else:
                fatal = True
    if fatal:
        return sk.CollisionKind.FATAL
    return sk.CollisionKind.CLIMBABLE_CONTACT if contact else sk.CollisionKind.NONE


def test_action_from_any():
    """
    Test the Action.from_any constructor:
    - Components are clamped to [-1, 1].
    - NaN components are rejected.
    """
    assert sk.Action.from_any((2.0, -3.0)) == sk.Action(1.0, -1.0)
    assert sk.Action.from_any(np.array([0.25, 0.5])) == sk.Action(0.25, 0.5)
    assert sk.Action.zero() == sk.Action(0.0, 0.0)
    with pytest.raises(ValueError):
        sk.Action.from_any((float('nan'), 0.0))


def test_ackermann_straight_and_point_turn():
    """
    Test ackermann_setpoints in the degenerate modes:
    - Zero turn rate aligns all wheels at the commanded speed.
    - A pure turn command is a point turn with opposite speeds on both sides.
    """
    straight = sk.ackermann_setpoints(sk.Action(1.0, 0.0))
    np.testing.assert_allclose(straight.steer_angle_rad, 0.0)
    np.testing.assert_allclose(straight.wheel_speed_mps, 0.5)
    assert not straight.point_turn

    turn = sk.ackermann_setpoints(sk.Action(0.0, 1.0))
    assert turn.point_turn
    left, right = turn.wheel_speed_mps[2], turn.wheel_speed_mps[3]
    assert left == pytest.approx(-right)
    assert abs(left) == pytest.approx(0.6 * 0.45)
    assert np.all(np.abs(turn.steer_angle_rad) <= np.pi / 2)

    # below the ratio threshold the linear speed is dropped
    assert sk.ackermann_setpoints(sk.Action(0.05, 1.0)).point_turn


def test_ackermann_icr_geometry():
    """
    Test ackermann_setpoints for a left arc:
    - The inner (left) wheels steer more than the outer ones.
    - Every wheel heading is perpendicular to the line from the ICR to the wheel.
    """
    geometry = sk.RoverGeometry()
    setpoints = sk.ackermann_setpoints(sk.Action(0.5, 0.2), geometry)
    assert not setpoints.point_turn
    assert setpoints.steer_angle_rad[0] > setpoints.steer_angle_rad[1] > 0.0
    assert setpoints.steer_angle_rad[2] == pytest.approx(0.0)

    icr = np.array(setpoints.icr)
    assert icr[1] == pytest.approx(0.25 / 0.12)
    for (px, py), steer in zip(geometry.wheel_positions, setpoints.steer_angle_rad):
        heading = np.array([math.cos(steer), math.sin(steer)])
        assert abs(heading @ (np.array([px, py]) - icr)) < 1e-9


def test_integrate_unicycle():
    """
    Test one control step of integration:
    - Full forward speed covers 0.1 m in 0.2 s.
    - A point turn rotates by 0.12 rad without moving.
    """
    config = sk.KinematicsConfig()
    x, y, yaw = sk.integrate_unicycle(1.0, 2.0, 0.0, sk.Action(1.0, 0.0), config)
    assert (x, y, yaw) == pytest.approx((1.1, 2.0, 0.0))

    x, y, yaw = sk.integrate_unicycle(1.0, 2.0, 0.0, sk.Action(0.0, 1.0), config)
    assert (x, y) == pytest.approx((1.0, 2.0))
    assert yaw == pytest.approx(0.12)


def test_check_collision_cases():
    """
    Test the check_collision function:
    - No rock near the rover gives NONE.
    - A tall rock crossing a ray is FATAL; a low one is a climbable contact.
    - A rock just beyond the collision radius is not hit.
    """
    state = sk.RoverState(x=20.0, y=20.0, yaw=0.0, goal=(25.0, 20.0))
    assert sk.check_collision(state, _rock_map([])) == sk.CollisionKind.NONE

    tall = Rock(center=(20.9, 20.0), radius_m=0.3, height_m=0.5, climbable=False)
    low = Rock(center=(20.9, 20.0), radius_m=0.3, height_m=0.1, climbable=True)
    far = Rock(center=(21.1, 20.0), radius_m=0.3, height_m=0.5, climbable=False)
    assert sk.check_collision(state, _rock_map([tall])) == sk.CollisionKind.FATAL
    assert sk.check_collision(state, _rock_map([low])) == sk.CollisionKind.CLIMBABLE_CONTACT
    assert sk.check_collision(state, _rock_map([far])) == sk.CollisionKind.NONE


def test_check_collision_between_rays():
    """
    Test that a small rock fitting between two rays still collides:
    - A 0.1 m rock at 0.8 m, halfway between the first two of 16 rays, overlaps the rover disc.
    """
    state = sk.RoverState(x=20.0, y=20.0, yaw=0.0, goal=(25.0, 20.0))
    angle = math.pi / 16
    rock = Rock(center=(20.0 + 0.8 * math.cos(angle), 20.0 + 0.8 * math.sin(angle)),
                radius_m=0.1, height_m=0.5, climbable=False)
    assert sk.check_collision(state, _rock_map([rock]), n_rays=16) == sk.CollisionKind.FATAL

    pebble = Rock(center=rock.center, radius_m=0.1, height_m=0.1, climbable=True)
    assert sk.check_collision(state, _rock_map([pebble]), n_rays=16) == sk.CollisionKind.CLIMBABLE_CONTACT


def test_check_collision_matches_disc_oracle():
    """
    Test check_collision against a brute-force disc-disc reference on random rock layouts.
    """
    rng = np.random.default_rng(4)
    radius = sk.RoverGeometry().collision_radius_m
    for _ in range(200):
        rocks = []
        for _ in range(12):
            height = float(rng.uniform(0.05, 0.8))
            rocks.append(Rock(center=(float(rng.uniform(18.0, 22.0)), float(rng.uniform(18.0, 22.0))),
                              radius_m=float(rng.uniform(0.1, 0.5)), height_m=height,
                              climbable=height <= 0.2))
        terrain = _rock_map(rocks)
        state = sk.RoverState(x=float(rng.uniform(19.0, 21.0)), y=float(rng.uniform(19.0, 21.0)),
                              yaw=float(rng.uniform(-np.pi, np.pi)), goal=(0.0, 0.0))
        assert sk.check_collision(state, terrain, n_rays=16) == _disc_oracle(state, rocks, radius)


def test_reset(flat_sim):
    """
    Test RoverSimulator.reset:
    - The goal lies on the goal circle around the spawn point.
    - The same generator state gives the same reset.
    - A goal circle that never fits in the map raises ResetError.
    """
    state = flat_sim.reset(0, np.random.default_rng(3))
    assert (state.x, state.y) == flat_sim.spawn_points[0]
    assert math.hypot(state.goal[0] - state.x, state.goal[1] - state.y) == pytest.approx(9.0, abs=1e-9)
    assert state.alive and state.steps_elapsed == 0 and state.prev_action == sk.Action(0.0, 0.0)

    again = flat_sim.reset(0, np.random.default_rng(3))
    assert again == state

    wide = sk.RoverSimulator(flat_sim.terrain, flat_sim.pattern, sk.KinematicsConfig(goal_radius_m=30.0))
    with pytest.raises(sk.ResetError):
        wide.reset(0, np.random.default_rng(0))


def test_reset_keeps_goal_inside_margin(flat_sim):
    """
    Test that reset never places the goal disc across the navigable boundary:
    - With a goal circle reaching the margin, every goal stays goal_threshold_m inside it.
    """
    config = sk.KinematicsConfig(goal_radius_m=12.5, max_episode_steps=50)
    sim = sk.RoverSimulator(flat_sim.terrain, flat_sim.pattern, config, slots=4)
    assert sim.spawn_points[0] == (17.0, 17.0)
    rng = np.random.default_rng(11)
    inner = config.boundary_margin_m + config.goal_threshold_m
    for _ in range(200):
        state = sim.reset(0, rng)
        assert sim.terrain.contains(*state.goal, inner)


def test_spawn_points_avoid_rocks():
    """
    Test the spawn_points function:
    - Slots form a grid inside the spawn margin.
    - A slot blocked by a tall rock moves to a free point nearby.
    """
    free = sk.spawn_points(_rock_map([]), 4)
    assert free == [(17.0, 17.0), (23.0, 17.0), (17.0, 23.0), (23.0, 23.0)]

    rock = Rock(center=(17.0, 17.0), radius_m=0.5, height_m=0.6, climbable=False)
    moved = sk.spawn_points(_rock_map([rock]), 4)
    assert moved[0] != (17.0, 17.0)
    assert math.hypot(moved[0][0] - 17.0, moved[0][1] - 17.0) >= 0.74 + 0.1 + 0.5
    assert moved[1:] == free[1:]


def test_step_reward_and_state(flat_sim):
    """
    Test RoverSimulator.step on flat ground:
    - The state moves forward and the previous action is updated.
    - The reward is the sum of the reward terms at the new pose.
    """
    state = sk.RoverState(x=20.0, y=20.0, yaw=0.0, goal=(25.0, 20.0))
    result = flat_sim.step(state, sk.Action(1.0, 0.0))
    assert state.x == pytest.approx(20.1)
    assert state.prev_action == sk.Action(1.0, 0.0)
    assert state.steps_elapsed == 1
    assert result.termination_cause == sk.TerminationCause.NONE and not result.terminated
    expected = rw.distance_reward(4.9, rw.RewardWeights()) - 0.01
    assert result.reward == pytest.approx(expected)
    assert result.observation.distance_m == pytest.approx(4.9)


def test_termination_causes(flat_sim):
    """
    Test the termination rules:
    - Reaching the goal threshold ends the episode with goal_reached.
    - Hitting the step limit ends the episode with timeout.
    - Leaving the navigable region counts as a collision.
    - A goal reached on the margin is goal_reached, not a collision.
    """
    state = sk.RoverState(x=20.0, y=20.0, yaw=0.0, goal=(20.2, 20.0))
    result = flat_sim.step(state, sk.Action(1.0, 0.0))
    assert result.termination_cause == sk.TerminationCause.GOAL_REACHED
    assert not state.alive

    state = sk.RoverState(x=20.0, y=20.0, yaw=0.0, goal=(25.0, 20.0), steps_elapsed=49)
    assert flat_sim.step(state, sk.Action(0.0, 0.0)).termination_cause == sk.TerminationCause.TIMEOUT

    state = sk.RoverState(x=35.45, y=20.0, yaw=0.0, goal=(30.0, 20.0))
    result = flat_sim.step(state, sk.Action(1.0, 0.0))
    assert result.termination_cause == sk.TerminationCause.COLLISION
    assert result.reward < -9.0

    state = sk.RoverState(x=35.45, y=20.0, yaw=0.0, goal=(35.5, 20.0))
    result = flat_sim.step(state, sk.Action(1.0, 0.0))
    assert result.observation.distance_m <= 0.25
    assert result.termination_cause == sk.TerminationCause.GOAL_REACHED


def test_step_batch(flat_sim):
    """
    Test RoverSimulator.step_batch:
    - A batch step equals stepping each rover on its own.
    - Actions are clamped before they are applied.
    - Length mismatches and terminated states are rejected.
    """
    rng = np.random.default_rng(0)
    states = [flat_sim.reset(i, rng) for i in range(4)]
    copies = [s.copy() for s in states]
    actions = [(0.3, -0.2), (1.0, 1.0), (2.0, 0.0), (-0.5, 0.4)]

    batch = flat_sim.step_batch(states, actions)
    single = [flat_sim.step(s, sk.Action.from_any(a)) for s, a in zip(copies, actions)]
    assert states == copies
    assert [r.reward for r in batch] == [r.reward for r in single]
    assert states[2].prev_action == sk.Action(1.0, 0.0)

    with pytest.raises(ValueError):
        flat_sim.step_batch(states, actions[:2])
    states[0].alive = False
    with pytest.raises(ValueError):
        flat_sim.step_batch(states, actions)


def test_vec_env_auto_reset(flat_sim):
    """
    Test VecRoverEnv:
    - Standing still runs every slot into the timeout at step 50.
    - Terminated slots are reset and report a completed episode.
    - The clean batch is returned when no noise is configured.
    """
    env = sk.VecRoverEnv(flat_sim, num_envs=4, seed=5)
    for step in range(50):
        out = env.step(np.zeros((4, 2)))
        if step < 49:
            assert not out.dones.any()
    assert out.dones.all()
    assert all(c == sk.TerminationCause.TIMEOUT for c in out.causes)
    assert len(out.completed) == 4 and all(e.steps == 50 for e in out.completed)
    assert all(s.steps_elapsed == 0 and s.alive for s in env.states)
    np.testing.assert_array_equal(env.returns, 0.0)

    clean = env.observation_batch()
    noisy = env.noisy_observation_batch()
    np.testing.assert_array_equal(clean.dense, noisy.dense)


def test_vec_env_is_deterministic(flat_sim):
    """
    Test VecRoverEnv determinism:
    - Equal seeds and actions give equal rewards and states.
    - Another seed gives other resets.
    """
    actions = np.random.default_rng(1).uniform(-1, 1, size=(20, 3, 2))
    runs = []
    for _ in range(2):
        env = sk.VecRoverEnv(flat_sim, num_envs=3, seed=9)
        rewards = [env.step(a).rewards for a in actions]
        runs.append((np.array(rewards), [s.copy() for s in env.states]))
    np.testing.assert_array_equal(runs[0][0], runs[1][0])
    assert runs[0][1] == runs[1][1]

    other = sk.VecRoverEnv(flat_sim, num_envs=3, seed=10)
    assert other.states[0].goal != sk.VecRoverEnv(flat_sim, num_envs=3, seed=9).states[0].goal

    with pytest.raises(ValueError):
        env.step(np.zeros((2, 2)))


def test_save_trace_csv(tmp_path):
    """
    Test the trajectory trace export:
    - The CSV has the trace columns in order.
    - Termination causes are written by value.
    """
    records = [dict(t=0.0, x=1.0, y=2.0, yaw=0.0, v_lin=0.5, v_ang=0.0, reward=0.3,
                    cause=sk.TerminationCause.NONE),
               dict(t=0.2, x=1.1, y=2.0, yaw=0.0, v_lin=0.5, v_ang=0.0, reward=0.4,
                    cause=sk.TerminationCause.GOAL_REACHED)]
    path = sk.save_trace_csv(records, tmp_path / 'traces' / 'trace.csv')
    frame = pd.read_csv(path)
    assert list(frame.columns) == sk.TRACE_COLUMNS
    assert list(frame['cause']) == ['none', 'goal_reached']
