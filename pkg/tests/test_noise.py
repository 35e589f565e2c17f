"""
Test suite for the noise module.

This suite includes tests for:
- The noise mode tables and their validation
- Categorical mode selection per episode
- Per-step Gaussian jitter, episode offsets and point zeroing
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

import numpy as np
import pytest

from rovernav import noise as nz


def test_presets_and_validation():
    """
    Test the noise presets:
    - Every preset's probabilities sum to one.
    - 'none' is the identity, the others are not.
    - Tables not summing to one and unknown preset names are rejected.
    """
    for config in nz.NOISE_PRESETS.values():
        assert sum(s.probability for s in config.modes.values()) == pytest.approx(1.0)
    assert nz.noise_preset('none').is_identity
    assert not nz.noise_preset('train-mix').is_identity
    assert nz.noise_preset('train-mix').mode_names == ('low', 'low_offset', 'high')

    with pytest.raises(ValueError):
        nz.NoiseConfig('bad', {'a': nz.NoiseModeSpec(0.1, probability=0.5)})
    with pytest.raises(ValueError):
        nz.NoiseModeSpec(0.1, zero_fraction=1.5)
    with pytest.raises(ValueError):
        nz.noise_preset('storm')


def test_sample_mode_frequencies():
    """
    Test the sample_mode function:
    - 10000 draws from train-mix match the table within 0.02.
    - A mode with probability zero is never drawn.
    - Equal seeds give equal draws.
    """
    config = nz.noise_preset('train-mix')
    rng = np.random.default_rng(0)
    draws = [nz.sample_mode(config, rng) for _ in range(10000)]
    for name, spec in config.modes.items():
        assert draws.count(name) / len(draws) == pytest.approx(spec.probability, abs=0.02)

    degenerate = nz.NoiseConfig('degenerate', {'never': nz.NoiseModeSpec(0.1, probability=0.0),
                                               'always': nz.NoiseModeSpec(0.2, probability=1.0)})
    rng = np.random.default_rng(1)
    assert {nz.sample_mode(degenerate, rng) for _ in range(500)} == {'always'}

    a = [nz.sample_mode(config, np.random.default_rng(7)) for _ in range(3)]
    b = [nz.sample_mode(config, np.random.default_rng(7)) for _ in range(3)]
    assert a == b


def test_identity_noise():
    """
    Test apply_noise for the identity mode:
    - The output equals the input and is a copy.
    """
    noise = nz.draw_episode_noise(nz.noise_preset('none'), np.random.default_rng(0))
    values = np.linspace(-1.0, 1.0, 25)
    out = nz.apply_noise(values, noise, np.random.default_rng(0))
    np.testing.assert_array_equal(out, values)
    assert out is not values


def test_jitter_statistics_and_zeroing():
    """
    Test apply_noise for the low mode:
    - The jitter standard deviation is 0.1 within 3 %.
    - Exactly floor(0.1 * K) points per map are zeroed.
    - The input array is left untouched.
    """
    spec = nz.noise_preset('train-mix').modes['low']
    noise = nz.EpisodeNoise(mode='low', spec=spec)
    values = np.ones((200, 1681))
    out = nz.apply_noise(values, noise, np.random.default_rng(2))

    np.testing.assert_array_equal(values, 1.0)
    assert out.shape == values.shape
    zeros = (out == 0.0).sum(axis=1)
    np.testing.assert_array_equal(zeros, 168)
    kept = out[out != 0.0] - 1.0
    assert kept.std() == pytest.approx(0.1, rel=0.03)


def test_episode_offsets():
    """
    Test the episode offsets of low_offset:
    - Offsets have mean zero within three standard errors and a 0.05 m spread.
    - One offset is added to every point of every step in the episode.
    """
    config = nz.NoiseConfig('offset_only', {'low_offset': nz.NoiseModeSpec(0.0, offset_sigma_m=0.05)})
    rng = np.random.default_rng(3)
    offsets = np.array([nz.draw_episode_noise(config, rng).offset_m for _ in range(4000)])
    assert abs(offsets.mean()) < 3 * 0.05 / np.sqrt(len(offsets))
    assert offsets.std() == pytest.approx(0.05, rel=0.05)

    noise = nz.draw_episode_noise(config, rng)
    step_a = nz.apply_noise(np.zeros(10), noise, rng)
    step_b = nz.apply_noise(np.zeros(10), noise, rng)
    np.testing.assert_allclose(step_a, noise.offset_m)
    np.testing.assert_allclose(step_b, noise.offset_m)


def test_zero_count_and_serialization():
    """
    Test the helpers:
    - zero_count floors the product.
    - to_dict/from_dict reproduce the table.
    """
    assert nz.zero_count(0.1, 1681) == 168
    assert nz.zero_count(0.1, 44) == 4
    assert nz.zero_count(0.1, 9) == 0
    assert nz.zero_count(0.1, 10) == 1

    config = nz.noise_preset('train-mix')
    assert nz.NoiseConfig.from_dict(config.to_dict()) == config
