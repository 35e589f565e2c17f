#!/usr/bin/env python3

"""
terrain.py: Procedural Mars-like terrain with a layered rock set.

The heightfield is the sum of two octaves of smooth gradient noise: long
wavelength hills and short wavelength bumps. Rocks are placed on top of the
heightfield by blue-noise dart throwing and split into a climbable and a
non-climbable class by their height.

Mathematical Framework:
    h(x, y) = A_hill * n(x / L_hill, y / L_hill) + A_bump * n(x / L_bump, y / L_bump)

    where n is 2-D gradient noise with quintic fade, scaled to [-1, 1]. Grid
    node (i, j) sits at x = i * cell_m, y = j * cell_m and is stored at
    heights[j, i]. Queries between nodes are bilinear; a rock adds its full
    height inside its footprint disc.
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
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.ndimage import map_coordinates

from . import helper as hlp

logger = hlp.setup_logger(__name__)

HEIGHTS_FILENAME = "heights.bin"
SIDECAR_FILENAME = "terrain.json"


class OutOfExtentError(ValueError):
    """Raised when a query point lies outside the terrain extent."""


@dataclass(frozen=True)
class TerrainParams:
    """Parameters of a procedural terrain."""
    seed: int = 0
    extent_m: float = 60.0
    cell_m: float = 0.05
    hill_amplitude_m: float = 0.5
    hill_wavelength_m: float = 16.0
    bump_amplitude_m: float = 0.04
    bump_wavelength_m: float = 1.0
    rock_density_per_m2: float = 0.01
    small_rock_fraction: float = 0.0
    climb_height_threshold_m: float = 0.2
    rock_radius_min_m: float = 0.1
    rock_radius_max_m: float = 0.5
    rock_height_min_m: float = 0.05
    rock_height_max_m: float = 0.8
    rock_count: Optional[int] = None  # overrides the density when set

    def __post_init__(self):
        for name in ('extent_m', 'cell_m', 'hill_wavelength_m', 'bump_wavelength_m',
                     'climb_height_threshold_m', 'rock_radius_min_m', 'rock_radius_max_m',
                     'rock_height_min_m', 'rock_height_max_m'):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be a finite positive number, got {value}")
        for name in ('hill_amplitude_m', 'bump_amplitude_m', 'rock_density_per_m2'):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative number, got {value}")
        if not 0.0 <= self.small_rock_fraction <= 1.0:
            raise ValueError(f"small_rock_fraction must lie in [0, 1], got {self.small_rock_fraction}")
        ratio = self.extent_m / self.cell_m
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 2:
            raise ValueError(f"extent_m / cell_m must be an integer >= 2, got {ratio}")
        if self.hill_wavelength_m <= self.bump_wavelength_m:
            raise ValueError("hill_wavelength_m must be greater than bump_wavelength_m")
        if self.rock_radius_min_m > self.rock_radius_max_m:
            raise ValueError("rock_radius_min_m must not exceed rock_radius_max_m")
        if not self.rock_height_min_m <= self.climb_height_threshold_m < self.rock_height_max_m:
            raise ValueError("rock heights must straddle climb_height_threshold_m")
        if 2.0 * self.rock_radius_max_m >= self.extent_m:
            raise ValueError("rock_radius_max_m is too large for the map extent")
        if self.rock_count is not None and self.rock_count < 0:
            raise ValueError(f"rock_count must be >= 0, got {self.rock_count}")

    @property
    def cells_per_side(self) -> int:
        return int(round(self.extent_m / self.cell_m))

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)


# Named presets applied on top of a base parameter set
TERRAIN_PRESETS: Dict[str, Dict[str, float]] = {
    't1': {'small_rock_fraction': 0.0},
    't2': {'small_rock_fraction': 0.5},
    'flat': {'hill_amplitude_m': 0.0, 'bump_amplitude_m': 0.0, 'small_rock_fraction': 0.0},
}


def terrain_preset(name: str, base: Optional[TerrainParams] = None,
                   seed: Optional[int] = None) -> TerrainParams:
    """
    Build terrain parameters from a named preset.

    Args:
        name: One of ``TERRAIN_PRESETS`` (case-insensitive)
        base: Parameters the preset is applied to (default: ``TerrainParams()``)
        seed: Optional seed override

    Returns:
        TerrainParams with the preset applied
    """
    key = name.lower()
    if key not in TERRAIN_PRESETS:
        raise ValueError(f"Unknown terrain preset '{name}'. Available: {sorted(TERRAIN_PRESETS)}")
    overrides = dict(TERRAIN_PRESETS[key])
    if seed is not None:
        overrides['seed'] = int(seed)
    return dataclasses.replace(base or TerrainParams(), **overrides)


@dataclass(frozen=True)
class Rock:
    """A cylindrical rock on top of the heightfield."""
    center: Tuple[float, float]
    radius_m: float
    height_m: float
    climbable: bool

    def __post_init__(self):
        if self.radius_m <= 0 or self.height_m <= 0:
            raise ValueError("Rock radius and height must be positive")


class RockIndex:
    """
    Uniform spatial hash grid over rock discs.

    Each rock is bucketed by the grid cell of its center; a disc query visits
    every cell within ``radius + max rock radius`` of the query center.
    """

    def __init__(self, rocks: List[Rock], cell_m: float = 1.0):
        self.cell_m = cell_m
        self.centers = np.array([r.center for r in rocks], dtype=np.float64).reshape(-1, 2)
        self.radii = np.array([r.radius_m for r in rocks], dtype=np.float64)
        self.max_radius = float(self.radii.max()) if len(rocks) else 0.0
        self.buckets: Dict[Tuple[int, int], List[int]] = {}
        for i, (cx, cy) in enumerate(self.centers):
            key = (int(math.floor(cx / cell_m)), int(math.floor(cy / cell_m)))
            self.buckets.setdefault(key, []).append(i)

    def __len__(self) -> int:
        return len(self.radii)

    def query(self, center: Tuple[float, float], radius: float) -> np.ndarray:
        """Indices (ascending) of rocks whose disc intersects the query disc."""
        if not len(self.radii):
            return np.empty(0, dtype=np.int64)
        cx, cy = float(center[0]), float(center[1])
        reach = radius + self.max_radius
        ix0, ix1 = int(math.floor((cx - reach) / self.cell_m)), int(math.floor((cx + reach) / self.cell_m))
        iy0, iy1 = int(math.floor((cy - reach) / self.cell_m)), int(math.floor((cy + reach) / self.cell_m))

        candidates: List[int] = []
        if (ix1 - ix0 + 1) * (iy1 - iy0 + 1) > len(self.buckets):
            for (bx, by), members in self.buckets.items():
                if ix0 <= bx <= ix1 and iy0 <= by <= iy1:
                    candidates.extend(members)
        else:
            for bx in range(ix0, ix1 + 1):
                for by in range(iy0, iy1 + 1):
                    candidates.extend(self.buckets.get((bx, by), ()))
        if not candidates:
            return np.empty(0, dtype=np.int64)

        idx = np.array(sorted(candidates), dtype=np.int64)
        dist = np.hypot(self.centers[idx, 0] - cx, self.centers[idx, 1] - cy)
        return idx[dist <= radius + self.radii[idx]]


@dataclass
class TerrainMap:
    """
    Heightfield grid plus rock layer. Treated as immutable after construction.

    ``heights`` has shape (n + 1, n + 1) with n = extent_m / cell_m and is
    indexed ``heights[j, i]`` for the node at (i * cell_m, j * cell_m).
    """
    params: TerrainParams
    heights: np.ndarray
    rocks: List[Rock] = field(default_factory=list)

    def __post_init__(self):
        n = self.params.cells_per_side
        heights = np.array(self.heights, dtype=np.float64)
        if heights.shape != (n + 1, n + 1):
            raise ValueError(f"heights must have shape {(n + 1, n + 1)}, got {heights.shape}")
        if not np.all(np.isfinite(heights)):
            raise ValueError("heights must be finite")
        heights.flags.writeable = False
        self.heights = heights

        extent = self.params.extent_m
        threshold = self.params.climb_height_threshold_m
        for rock in self.rocks:
            x, y = rock.center
            if x - rock.radius_m < 0 or y - rock.radius_m < 0 or \
                    x + rock.radius_m > extent or y + rock.radius_m > extent:
                raise ValueError(f"Rock at {rock.center} lies outside the map extent")
            if rock.climbable != (rock.height_m <= threshold):
                raise ValueError(f"Rock at {rock.center} violates the climb height threshold rule")

        self.rocks = list(self.rocks)
        self.index = RockIndex(self.rocks, cell_m=max(2.0 * self.params.rock_radius_max_m, 1.0))
        self.rock_heights = np.array([r.height_m for r in self.rocks], dtype=np.float64)
        self.rock_climbable = np.array([r.climbable for r in self.rocks], dtype=bool)

    @property
    def extent_m(self) -> float:
        return self.params.extent_m

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return margin <= x <= self.extent_m - margin and margin <= y <= self.extent_m - margin


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def gradient_noise(nodes: int, cell_m: float, wavelength_m: float,
                   rng: np.random.Generator) -> np.ndarray:
    """
    Sample one octave of 2-D gradient noise on a square node grid.

    Args:
        nodes: Nodes per side
        cell_m: Node spacing (m)
        wavelength_m: Lattice spacing of the noise (m)
        rng: Random generator for the lattice gradients

    Returns:
        np.ndarray: (nodes, nodes) array with values in [-1, 1]
    """
    coords = np.arange(nodes) * (cell_m / wavelength_m)
    lattice = int(math.floor(coords[-1])) + 2
    angles = rng.uniform(0.0, 2.0 * np.pi, size=(lattice, lattice))
    gx, gy = np.cos(angles), np.sin(angles)

    i0 = np.floor(coords).astype(np.int64)
    f = coords - i0
    x0, y0 = i0[None, :], i0[:, None]
    fx, fy = f[None, :], f[:, None]

    n00 = gx[y0, x0] * fx + gy[y0, x0] * fy
    n10 = gx[y0, x0 + 1] * (fx - 1.0) + gy[y0, x0 + 1] * fy
    n01 = gx[y0 + 1, x0] * fx + gy[y0 + 1, x0] * (fy - 1.0)
    n11 = gx[y0 + 1, x0 + 1] * (fx - 1.0) + gy[y0 + 1, x0 + 1] * (fy - 1.0)

    u, v = _fade(fx), _fade(fy)
    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    return np.sqrt(2.0) * (nx0 + v * (nx1 - nx0))


def _place_rocks(params: TerrainParams, rng: np.random.Generator) -> List[Rock]:
    """Blue-noise dart throwing with a minimum spacing of twice the max rock radius."""
    area = params.extent_m ** 2
    target = params.rock_count if params.rock_count is not None \
        else int(round(params.rock_density_per_m2 * area))
    if target == 0:
        return []

    spacing = 2.0 * params.rock_radius_max_m
    margin = params.rock_radius_max_m
    buckets: Dict[Tuple[int, int], List[Tuple[float, float]]] = {}
    centers: List[Tuple[float, float]] = []

    max_attempts = 30 * target
    attempts = 0
    while len(centers) < target and attempts < max_attempts:
        attempts += 1
        x, y = rng.uniform(margin, params.extent_m - margin, size=2)
        bx, by = int(x // spacing), int(y // spacing)
        clear = True
        for nx in (bx - 1, bx, bx + 1):
            for ny in (by - 1, by, by + 1):
                for (ox, oy) in buckets.get((nx, ny), ()):
                    if (ox - x) ** 2 + (oy - y) ** 2 < spacing ** 2:
                        clear = False
                        break
                if not clear:
                    break
            if not clear:
                break
        if clear:
            buckets.setdefault((bx, by), []).append((float(x), float(y)))
            centers.append((float(x), float(y)))

    if len(centers) < target:
        logger.warning(f"⚠ Placed {len(centers)} of {target} rocks after {max_attempts} attempts")

    count = len(centers)
    radii = rng.uniform(params.rock_radius_min_m, params.rock_radius_max_m, size=count)
    climbable = np.zeros(count, dtype=bool)
    climbable[rng.permutation(count)[:int(round(params.small_rock_fraction * count))]] = True

    threshold = params.climb_height_threshold_m
    u = rng.random(count)
    small_heights = params.rock_height_min_m + u * (threshold - params.rock_height_min_m)
    large_heights = threshold + (1.0 - u) * (params.rock_height_max_m - threshold)
    heights = np.where(climbable, small_heights, large_heights)

    return [Rock(center=c, radius_m=float(r), height_m=float(h), climbable=bool(k))
            for c, r, h, k in zip(centers, radii, heights, climbable)]


def generate_terrain(params: TerrainParams) -> TerrainMap:
    """
    Generate a terrain map as a pure function of its parameters.

    Args:
        params: Terrain parameters (including seed)

    Returns:
        TerrainMap: Heightfield = hill layer + bump layer, plus placed rocks
    """
    rng = np.random.default_rng(params.seed)
    nodes = params.cells_per_side + 1

    hills = gradient_noise(nodes, params.cell_m, params.hill_wavelength_m, rng)
    bumps = gradient_noise(nodes, params.cell_m, params.bump_wavelength_m, rng)
    heights = params.hill_amplitude_m * hills + params.bump_amplitude_m * bumps
    rocks = _place_rocks(params, rng)

    terrain = TerrainMap(params=params, heights=heights, rocks=rocks)
    n_climbable = int(terrain.rock_climbable.sum())
    logger.debug(f"Generated terrain seed={params.seed}: {nodes}x{nodes} nodes, "
                 f"{len(rocks)} rocks ({n_climbable} climbable)")
    return terrain


def heights_at(terrain: TerrainMap, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """
    Vectorized height query: bilinear ground height plus rock heights.

    Args:
        terrain: Terrain map
        xs, ys: Query coordinates (m), same shape

    Returns:
        np.ndarray: Heights with the shape of ``xs``

    Raises:
        OutOfExtentError: If any point lies outside [0, extent_m]^2 or is not finite
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    shape = xs.shape
    xs, ys = xs.ravel(), ys.ravel()
    extent = terrain.extent_m
    inside = np.isfinite(xs) & np.isfinite(ys) & (xs >= 0) & (xs <= extent) & (ys >= 0) & (ys <= extent)
    if not np.all(inside):
        bad = int(np.argmin(inside))
        raise OutOfExtentError(f"Query ({xs[bad]}, {ys[bad]}) lies outside the map extent [0, {extent}]")

    cell = terrain.params.cell_m
    coords = np.vstack([ys / cell, xs / cell])
    result = map_coordinates(terrain.heights, coords, order=1, mode='nearest', prefilter=False)

    if len(terrain.rocks) and xs.size:
        lo_x, hi_x, lo_y, hi_y = xs.min(), xs.max(), ys.min(), ys.max()
        center = (0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y))
        radius = 0.5 * math.hypot(hi_x - lo_x, hi_y - lo_y) + 1e-9
        idx = terrain.index.query(center, radius)
        if idx.size:
            c = terrain.index.centers[idx]
            r = terrain.index.radii[idx]
            d2 = (xs[:, None] - c[None, :, 0]) ** 2 + (ys[:, None] - c[None, :, 1]) ** 2
            rock_h = np.where(d2 <= r[None, :] ** 2, terrain.rock_heights[idx][None, :], 0.0)
            result = result + rock_h.max(axis=1)

    return result.reshape(shape)


def height_at(terrain: TerrainMap, x: float, y: float) -> float:
    """
    Height of the terrain surface at one point.

    Raises:
        OutOfExtentError: If (x, y) lies outside the map extent
    """
    return float(heights_at(terrain, np.array([x]), np.array([y]))[0])


def rocks_near(terrain: TerrainMap, center: Tuple[float, float], radius_m: float) -> List[Rock]:
    """
    Rocks whose discs intersect the query disc, in generation order.

    Args:
        terrain: Terrain map
        center: Query disc center (m)
        radius_m: Query disc radius (m), positive
    """
    if radius_m <= 0:
        raise ValueError(f"radius_m must be positive, got {radius_m}")
    return [terrain.rocks[i] for i in terrain.index.query(center, radius_m)]


def save_terrain(terrain: TerrainMap, directory: Union[str, Path]) -> Path:
    """
    Export a terrain as little-endian float32 heights plus a JSON sidecar.

    Args:
        terrain: Terrain map
        directory: Output directory (created if needed)

    Returns:
        Path of the JSON sidecar
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    terrain.heights.astype('<f4').tofile(directory / HEIGHTS_FILENAME)

    sidecar = {
        'format': 'float32-le-row-major',
        'shape': list(terrain.heights.shape),
        'params': terrain.params.to_dict(),
        'rocks': [{'center': list(r.center), 'radius_m': r.radius_m,
                   'height_m': r.height_m, 'climbable': r.climbable} for r in terrain.rocks],
    }
    path = hlp.write_json(sidecar, directory / SIDECAR_FILENAME)
    logger.info(f"✓ Exported terrain ({len(terrain.rocks)} rocks) to {directory}")
    return path


def load_terrain(directory: Union[str, Path]) -> TerrainMap:
    """
    Import a terrain exported by ``save_terrain``.

    The heights come back as the float32 values that were written.
    """
    directory = Path(directory)
    sidecar = hlp.read_json(directory / SIDECAR_FILENAME)
    params = TerrainParams(**sidecar['params'])
    shape = tuple(sidecar['shape'])

    heights_path = directory / HEIGHTS_FILENAME
    if not heights_path.exists():
        raise FileNotFoundError(f"Heightfield not found: {heights_path}")
    heights = np.fromfile(heights_path, dtype='<f4')
    if heights.size != shape[0] * shape[1]:
        raise ValueError(f"{heights_path}: expected {shape[0] * shape[1]} values, found {heights.size}")

    rocks = [Rock(center=(float(r['center'][0]), float(r['center'][1])), radius_m=float(r['radius_m']),
                  height_m=float(r['height_m']), climbable=bool(r['climbable'])) for r in sidecar['rocks']]
    return TerrainMap(params=params, heights=heights.reshape(shape).astype(np.float64), rocks=rocks)
