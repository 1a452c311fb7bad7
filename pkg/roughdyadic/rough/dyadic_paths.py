"""Brownian sample paths on dyadic grids of [0, 1].

Paths are built by Lévy's midpoint construction. The endpoint w_1 and the
midpoints introduced at each grid level are drawn from their own counter-based
stream, a ``numpy.random.Philox`` generator keyed by ``(level << 64) | seed``;
normals come from ``Generator.standard_normal`` (numpy's ziggurat sampler).
Because level n only reads its own stream, the path at resolution M restricted
to the grid of level M - 1 is bitwise the path at resolution M - 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from roughdyadic.core.errors import RejectedInputError
from roughdyadic.models import MAX_SEED

logger = logging.getLogger(__name__)

MAX_RESOLUTION = 24


def _level_generator(seed: int, level: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(level << 64) | seed))


def _check_grid_values(values: np.ndarray) -> int:
    if values.ndim != 2 or values.shape[1] < 1:
        raise RejectedInputError(f"path values must have shape (2**M + 1, d), got {values.shape}")
    segments = values.shape[0] - 1
    if segments < 1 or segments & (segments - 1):
        raise RejectedInputError(f"path needs 2**M + 1 grid points, got {values.shape[0]}")
    return segments.bit_length() - 1


@dataclass(frozen=True, eq=False)
class DyadicBrownianPath:
    dim: int
    resolution: int
    seed: int | None
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        resolution = _check_grid_values(values)
        if resolution != self.resolution or values.shape[1] != self.dim:
            raise RejectedInputError(
                f"values of shape {values.shape} do not match dim={self.dim}, resolution={self.resolution}"
            )
        if np.any(values[0] != 0.0):
            raise RejectedInputError("paths start at the origin: values[0] must be 0")
        if not np.all(np.isfinite(values)):
            raise RejectedInputError("path values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values: np.ndarray, seed: int | None = None) -> DyadicBrownianPath:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        resolution = _check_grid_values(values)
        return cls(dim=values.shape[1], resolution=resolution, seed=seed, values=values)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, 2**self.resolution + 1)

    def grid_values(self, n: int) -> np.ndarray:
        """Path values at k / 2**n, k = 0..2**n."""
        if n < 0 or n > self.resolution:
            raise RejectedInputError(f"level {n} outside 0..{self.resolution}")
        return self.values[:: 2 ** (self.resolution - n)]


def generate(dim: int, resolution: int, seed: int) -> DyadicBrownianPath:
    if dim < 1:
        raise RejectedInputError(f"dim must be >= 1, got {dim}")
    if resolution < 0 or resolution > MAX_RESOLUTION:
        raise RejectedInputError(f"resolution must lie in 0..{MAX_RESOLUTION}, got {resolution}")
    seed = int(seed)
    if seed < 0 or seed > MAX_SEED:
        raise RejectedInputError(f"seed must be a 64-bit unsigned integer, got {seed}")

    values = np.zeros((2**resolution + 1, dim))
    values[-1] = _level_generator(seed, 0).standard_normal(dim)
    for n in range(resolution):
        step = 2 ** (resolution - n)
        z = _level_generator(seed, n + 1).standard_normal((2**n, dim))
        left = values[0:-1:step]
        right = values[step::step]
        values[step // 2 :: step] = 0.5 * (left + right) + math.sqrt(2.0 ** -(n + 2)) * z
    return DyadicBrownianPath(dim=dim, resolution=resolution, seed=seed, values=values)


@dataclass(frozen=True, eq=False)
class PolygonalPath:
    dim: int
    level: int
    vertices: np.ndarray

    def evaluate(self, t: float | np.ndarray) -> np.ndarray:
        """Linear interpolation between the vertices k / 2**level."""
        t = np.asarray(t, dtype=float)
        if np.any((t < 0.0) | (t > 1.0)):
            raise RejectedInputError("evaluation times must lie in [0, 1]")
        scaled = t * 2**self.level
        k = np.clip(np.floor(scaled).astype(int), 0, 2**self.level - 1)
        frac = (scaled - k)[..., None]
        left = self.vertices[k]
        return left + frac * (self.vertices[k + 1] - left)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.vertices, axis=0)


def polygonal(path: DyadicBrownianPath, m: int) -> PolygonalPath:
    if m < 0 or m > path.resolution:
        raise RejectedInputError(f"polygonal level {m} exceeds path resolution {path.resolution}")
    return PolygonalPath(dim=path.dim, level=m, vertices=path.grid_values(m))


def xi(path: DyadicBrownianPath, n: int, k: int) -> np.ndarray:
    """Increment over [(k-1)/2**n, k/2**n]."""
    if n < 0 or n > path.resolution:
        raise RejectedInputError(f"level {n} outside 0..{path.resolution}")
    if k < 1 or k > 2**n:
        raise RejectedInputError(f"index k={k} outside 1..{2**n}")
    step = 2 ** (path.resolution - n)
    return path.values[k * step] - path.values[(k - 1) * step]


def xi_level(path: DyadicBrownianPath, n: int) -> np.ndarray:
    """All increments of level n as an array of shape (2**n, d); row k-1 is xi_n^k."""
    return np.diff(path.grid_values(n), axis=0)


def parent_index(n: int, k: int, m: int) -> int:
    """k(n, m): index of the level-m interval containing the k-th level-n interval."""
    if n < m:
        raise RejectedInputError(f"parent_index needs n >= m, got n={n}, m={m}")
    if k < 1 or k > 2**n:
        raise RejectedInputError(f"index k={k} outside 1..{2**n}")
    return -(-k // 2 ** (n - m))


def dump_csv(path: DyadicBrownianPath, target: Path) -> Path:
    columns = {"t": path.times}
    for i in range(path.dim):
        columns[f"x{i + 1}"] = path.values[:, i]
    pd.DataFrame(columns).to_csv(target, index=False, float_format="%.17g")
    logger.info("Wrote path (d=%d, M=%d) to %s", path.dim, path.resolution, target)
    return target


def load_csv(source: Path, seed: int | None = None) -> DyadicBrownianPath:
    frame = pd.read_csv(source)
    coords = [c for c in frame.columns if c != "t"]
    if "t" not in frame.columns or not coords:
        raise RejectedInputError(f"{source}: expected header 't,x1..xd', got {list(frame.columns)}")
    expected = [f"x{i + 1}" for i in range(len(coords))]
    if coords != expected:
        raise RejectedInputError(f"{source}: coordinate columns must be {expected}, got {coords}")
    values = frame[coords].to_numpy(dtype=float)
    resolution = _check_grid_values(values)
    if not np.allclose(frame["t"].to_numpy(), np.linspace(0.0, 1.0, 2**resolution + 1), atol=1e-15):
        raise RejectedInputError(f"{source}: times are not the dyadic grid of level {resolution}")
    return DyadicBrownianPath.from_values(values, seed=seed)
