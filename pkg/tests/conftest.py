"""
Shared fixtures of the test suite.

The fixtures describe a small world that keeps every test fast: a 40 m flat
terrain without rocks, a coarse sample pattern (25 dense and 44 sparse points)
and tiny network architectures.
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

import pytest

from rovernav.obs import PatternConfig, build_pattern
from rovernav.simkin import KinematicsConfig, RoverSimulator
from rovernav.student import StudentArch
from rovernav.teacher import TeacherArch
from rovernav.terrain import TerrainParams, generate_terrain


@pytest.fixture
def flat_params():
    return TerrainParams(seed=0, extent_m=40.0, cell_m=0.1, hill_amplitude_m=0.0,
                         bump_amplitude_m=0.0, rock_count=0)


@pytest.fixture
def flat_terrain(flat_params):
    return generate_terrain(flat_params)


@pytest.fixture
def coarse_pattern_config():
    return PatternConfig(dense_half_extent_m=1.0, dense_pitch_m=0.5, sparse_pitch_m=1.0,
                         sparse_inner_m=1.0, sparse_outer_m=4.0)


@pytest.fixture
def coarse_pattern(coarse_pattern_config):
    return build_pattern(coarse_pattern_config)


@pytest.fixture
def flat_sim(flat_terrain, coarse_pattern):
    """Simulator with four spawn slots and 50-step episodes."""
    return RoverSimulator(flat_terrain, coarse_pattern, KinematicsConfig(max_episode_steps=50), slots=4)


@pytest.fixture
def tiny_teacher_arch():
    return TeacherArch(encoder_sizes=(6, 3), trunk_sizes=(16, 8))


@pytest.fixture
def tiny_student_arch():
    return StudentArch(encoder_sizes=(6, 3), gru_hidden=8, gru_layers=2, gate_sizes=(8, 6), trunk_sizes=(16, 8))
