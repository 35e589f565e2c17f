#!/usr/bin/env python3

"""
noise.py: Exteroceptive noise model for heightmap observations.

Three noise modes are mixed per episode: small deviations, small deviations
with a per-episode offset, and large deviations. Each mode adds per-point
Gaussian jitter (resampled every step), optionally a constant offset (drawn
once per episode) and then zeroes a fixed fraction of the points to emulate
missing depth returns. Proprioceptive inputs are never touched.
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
from typing import Any, Dict, Mapping

import numpy as np

from . import helper as hlp

logger = hlp.setup_logger(__name__)


@dataclass(frozen=True)
class NoiseModeSpec:
    """One row of the noise mode table."""
    sigma_m: float
    offset_sigma_m: float = 0.0
    zero_fraction: float = 0.0
    probability: float = 1.0

    def __post_init__(self):
        if self.sigma_m < 0 or self.offset_sigma_m < 0:
            raise ValueError("Noise standard deviations must be non-negative")
        if not 0.0 <= self.zero_fraction <= 1.0:
            raise ValueError(f"zero_fraction must lie in [0, 1], got {self.zero_fraction}")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability must lie in [0, 1], got {self.probability}")

    @property
    def is_identity(self) -> bool:
        return self.sigma_m == 0 and self.offset_sigma_m == 0 and self.zero_fraction == 0


@dataclass(frozen=True)
class NoiseConfig:
    """A named table of noise modes with selection probabilities."""
    name: str
    modes: Mapping[str, NoiseModeSpec] = field(default_factory=dict)

    def __post_init__(self):
        if not self.modes:
            raise ValueError(f"Noise config '{self.name}' has no modes")
        total = sum(spec.probability for spec in self.modes.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"Noise mode probabilities of '{self.name}' sum to {total}, expected 1")

    @property
    def mode_names(self):
        return tuple(self.modes.keys())

    @property
    def is_identity(self) -> bool:
        return all(spec.is_identity for spec in self.modes.values())

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name,
                'modes': {k: dataclasses.asdict(v) for k, v in self.modes.items()}}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'NoiseConfig':
        modes = {k: NoiseModeSpec(**v) for k, v in data['modes'].items()}
        return cls(name=data['name'], modes=modes)


NOISE_PRESETS: Dict[str, NoiseConfig] = {
    'train-mix': NoiseConfig('train-mix', {
        'low': NoiseModeSpec(sigma_m=0.1, offset_sigma_m=0.0, zero_fraction=0.1, probability=0.6),
        'low_offset': NoiseModeSpec(sigma_m=0.1, offset_sigma_m=0.05, zero_fraction=0.1, probability=0.3),
        'high': NoiseModeSpec(sigma_m=0.2, offset_sigma_m=0.0, zero_fraction=0.1, probability=0.1),
    }),
    'eval-noise': NoiseConfig('eval-noise', {
        'eval': NoiseModeSpec(sigma_m=0.1, offset_sigma_m=0.0, zero_fraction=0.1, probability=1.0),
    }),
    'none': NoiseConfig('none', {
        'none': NoiseModeSpec(sigma_m=0.0, offset_sigma_m=0.0, zero_fraction=0.0, probability=1.0),
    }),
}


def noise_preset(name: str) -> NoiseConfig:
    """Look up a named noise preset (``train-mix``, ``eval-noise``, ``none``)."""
    if name not in NOISE_PRESETS:
        raise ValueError(f"Unknown noise preset '{name}'. Available: {sorted(NOISE_PRESETS)}")
    return NOISE_PRESETS[name]


@dataclass(frozen=True)
class EpisodeNoise:
    """Noise state held for one episode: the selected mode and its offset."""
    mode: str
    spec: NoiseModeSpec
    offset_m: float = 0.0


def sample_mode(config: NoiseConfig, rng: np.random.Generator) -> str:
    """
    Categorical draw of a noise mode according to the mode probabilities.

    Args:
        config: Noise mode table
        rng: Random generator

    Returns:
        Name of the selected mode
    """
    names = config.mode_names
    cumulative = np.cumsum([config.modes[n].probability for n in names])
    index = int(np.searchsorted(cumulative, rng.random(), side='right'))
    return names[min(index, len(names) - 1)]


def draw_episode_noise(config: NoiseConfig, rng: np.random.Generator) -> EpisodeNoise:
    """Select the mode for a new episode and draw its constant offset."""
    mode = sample_mode(config, rng)
    spec = config.modes[mode]
    offset = float(rng.normal(0.0, spec.offset_sigma_m)) if spec.offset_sigma_m > 0 else 0.0
    return EpisodeNoise(mode=mode, spec=spec, offset_m=offset)


def zero_count(fraction: float, points: int) -> int:
    """Number of points zeroed per map: floor(fraction * points)."""
    return int(math.floor(fraction * points + 1e-9))


def apply_noise(values: np.ndarray, noise: EpisodeNoise, rng: np.random.Generator) -> np.ndarray:
    """
    Apply one step of exteroceptive noise to heightmap vectors.

    The last axis indexes the points of one map; leading axes are independent
    maps. The input array is never modified.

    Args:
        values: Clean heightmap(s), shape (..., K)
        noise: Episode noise state
        rng: Random generator for the per-step jitter and zeroing

    Returns:
        np.ndarray: Noisy copy with the same shape
    """
    clean = np.asarray(values)
    out_dtype = np.result_type(clean.dtype, np.float32)
    noisy = np.array(clean, dtype=out_dtype, copy=True)
    spec = noise.spec

    if spec.sigma_m > 0:
        noisy += rng.normal(0.0, spec.sigma_m, size=noisy.shape).astype(out_dtype)
    if noise.offset_m != 0.0:
        noisy += out_dtype.type(noise.offset_m)

    points = noisy.shape[-1] if noisy.ndim else 0
    count = zero_count(spec.zero_fraction, points)
    if count > 0:
        flat = noisy.reshape(-1, points)
        keys = rng.random(flat.shape)
        chosen = np.argsort(keys, axis=1)[:, :count]
        np.put_along_axis(flat, chosen, 0.0, axis=1)
        noisy = flat.reshape(noisy.shape)
    return noisy
