#!/usr/bin/env python3

"""
reward.py: Composite navigation reward.

    r_total = r_d + r_a + r_v + r_h  (+ collision penalty on a fatal collision)

    r_d = w_d / (1 + d / 3)                    distance to goal
    r_a = -w_a * sum_i (a_i,t - a_i,t-1)^2     action oscillation
    r_v = -w_v * |v_lin|  if v_lin < 0         driving backwards
    r_h = -w_h * |theta|  if |theta| > 115 deg heading away from the goal

Weights are stored as magnitudes; the minus signs live in the formulas only.
Actions are the normalized policy outputs in [-1, 1].
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
from typing import Sequence


@dataclass(frozen=True)
class RewardWeights:
    """Reward weights (magnitudes) and the terminal collision penalty."""
    w_d: float = 1.0
    w_a: float = 0.01
    w_v: float = 0.005
    w_h: float = 0.05
    collision_penalty: float = -10.0
    heading_limit_rad: float = math.radians(115.0)

    def __post_init__(self):
        for name in ('w_d', 'w_a', 'w_v', 'w_h'):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.collision_penalty > 0:
            raise ValueError(f"collision_penalty must be <= 0, got {self.collision_penalty}")
        if not 0 < self.heading_limit_rad <= math.pi:
            raise ValueError(f"heading_limit_rad must lie in (0, pi], got {self.heading_limit_rad}")


def collision_penalty_from_return(w_d: float, gamma: float, fraction: float = 0.1) -> float:
    """Penalty as a fraction of the discounted return of sitting at the goal: -fraction * w_d / (1 - gamma)."""
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    return -fraction * w_d / (1.0 - gamma)


def distance_reward(d: float, w: RewardWeights) -> float:
    """Distance term w_d / (1 + d/3); raises ValueError for negative d."""
    if d < 0 or math.isnan(d):
        raise ValueError(f"distance must be non-negative, got {d}")
    return w.w_d / (1.0 + d / 3.0)


def oscillation_penalty(a_t: Sequence[float], a_prev: Sequence[float], w: RewardWeights) -> float:
    return -w.w_a * ((a_t[0] - a_prev[0]) ** 2 + (a_t[1] - a_prev[1]) ** 2)


def velocity_penalty(v_lin: float, w: RewardWeights) -> float:
    return -w.w_v * abs(v_lin) if v_lin < 0 else 0.0


def heading_penalty(theta: float, w: RewardWeights) -> float:
    return -w.w_h * abs(theta) if abs(theta) > w.heading_limit_rad else 0.0


def total_reward(distance: float, heading: float, action: Sequence[float], prev_action: Sequence[float],
                 termination_cause: str, w: RewardWeights) -> float:
    """
    Sum of the four reward terms for one control step.

    Args:
        distance: Distance to goal after the step (m)
        heading: Heading error to the goal after the step (rad)
        action: Action applied this step (normalized)
        prev_action: Action applied on the previous step (normalized)
        termination_cause: Cause name ('collision' adds the penalty once)
        w: Reward weights

    Returns:
        float: Total reward
    """
    reward = (distance_reward(distance, w)
              + oscillation_penalty(action, prev_action, w)
              + velocity_penalty(action[0], w)
              + heading_penalty(heading, w))
    if termination_cause == 'collision':
        reward += w.collision_penalty
    return reward
