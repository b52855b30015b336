"""Periodic grid substrate: sampled functions, dyadic cubes, discrete measure.

The ambient space is the periodic box [0, L)^n (n = 1 or 2) sampled at N
points per axis, N a power of two so that dyadic cubes are exact sample
blocks.  Integrals are cell sums with volume h^n, h = L/N; essential
infimum/supremum are plain min/max over samples, since on a grid every
nonempty sample set has positive measure.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "GridFunction",
    "Cube",
    "Region",
    "grid_function",
    "from_callable",
    "axis_coords",
    "full_region",
    "region_from_indices",
    "cube_region",
    "ball_region",
    "random_balls",
    "measure",
    "mean_value",
    "ess_inf",
    "ess_sup",
    "dyadic_cubes",
    "dilate_cube",
    "dyadic_address",
    "level_blocks",
    "periodic_displacement",
    "save_grid_function",
    "load_grid_function",
]

# Fraction of the grid spacing used to separate cube-edge samples from
# floating-point noise in membership tests.  Must be far below 1 (so no
# genuine interior sample is misclassified) and far above accumulated
# rounding error relative to h.
_EDGE_TOL = 1e-6


def _is_power_of_two(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


@dataclass(frozen=True)
class GridFunction:
    """A real function sampled on the periodic box [0, L)^n.

    values has shape (N,) for n=1 and (N, N) for n=2; entry [i] (resp.
    [i, j]) is the sample at x = i*h (resp. (i*h, j*h)).
    """

    n: int
    L: float
    N: int
    values: np.ndarray
    periodic: bool = True

    def __post_init__(self) -> None:
        if self.n not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.n}")
        if not self.L > 0:
            raise ValueError("box side L must be positive")
        if not _is_power_of_two(self.N):
            raise ValueError(f"N must be a power of two, got {self.N}")
        if not self.periodic:
            raise ValueError("only periodic grids are supported")
        vals = np.asarray(self.values, dtype=float)
        expected = (self.N,) if self.n == 1 else (self.N, self.N)
        if vals.shape != expected:
            raise ValueError(f"values shape {vals.shape} != {expected}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must all be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def num_samples(self) -> int:
        return self.N**self.n

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.n, self.L, self.N, values, self.periodic)


def grid_function(n: int, L: float, N: int, values: np.ndarray) -> GridFunction:
    return GridFunction(n, L, N, values)


def axis_coords(grid) -> np.ndarray:
    """Per-axis sample coordinates i*h, i = 0..N-1."""
    return np.arange(grid.N) * (grid.L / grid.N)


def from_callable(n: int, L: float, N: int, fn: Callable[..., np.ndarray]) -> GridFunction:
    """Sample fn on the grid; fn takes one coordinate array per axis."""
    x = np.arange(N) * (L / N)
    if n == 1:
        vals = np.asarray(fn(x), dtype=float)
    else:
        xx, yy = np.meshgrid(x, x, indexing="ij")
        vals = np.asarray(fn(xx, yy), dtype=float)
    return GridFunction(n, L, N, vals)


@dataclass(frozen=True)
class Cube:
    """Axis-parallel cube with given center and side length.

    Dyadic cubes (side L/2^k, tiling the box) carry their level k; derived
    cubes (dilates, ad-hoc probes) leave level unset.
    """

    center: tuple[float, ...]
    side: float
    level: int | None = None

    def __post_init__(self) -> None:
        if not self.side > 0:
            raise ValueError("cube side must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class Region:
    """A set of grid samples, stored as sorted flat indices."""

    n: int
    L: float
    N: int
    indices: np.ndarray

    def __post_init__(self) -> None:
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.N**self.n):
            raise ValueError("region indices out of range")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.size)


def full_region(grid) -> Region:
    return Region(grid.n, grid.L, grid.N, np.arange(grid.N**grid.n))


def region_from_indices(grid, indices: Iterable[int]) -> Region:
    return Region(grid.n, grid.L, grid.N, np.fromiter(indices, dtype=np.int64))


def periodic_displacement(x: np.ndarray, c: float, L: float) -> np.ndarray:
    """Signed displacement x - c wrapped into [-L/2, L/2)."""
    return (x - c + L / 2.0) % L - L / 2.0


def _axis_membership(grid, center: float, side: float) -> np.ndarray:
    x = axis_coords(grid)
    d = periodic_displacement(x, center, grid.L)
    eta = _EDGE_TOL * (grid.L / grid.N)
    # Half-open convention [-side/2, side/2): left-edge samples belong to
    # the cube, right-edge samples to its neighbour.
    return (d >= -side / 2.0 - eta) & (d < side / 2.0 - eta)


def cube_region(grid, cube: Cube) -> Region:
    """Samples lying in the cube under the periodic half-open convention."""
    if len(cube.center) != grid.n:
        raise ValueError("cube dimension does not match grid")
    if cube.level is not None:
        # Exact block arithmetic for dyadic cubes.
        k = cube.level
        block = grid.N >> k
        if block << k == grid.N:
            starts = []
            s = grid.L / (1 << k)
            for c in cube.center:
                b = int(round(c / s - 0.5)) % (1 << k)
                starts.append(b * block)
            if grid.n == 1:
                idx = np.arange(starts[0], starts[0] + block)
            else:
                rows = np.arange(starts[0], starts[0] + block)
                cols = np.arange(starts[1], starts[1] + block)
                idx = (rows[:, None] * grid.N + cols[None, :]).ravel()
            return Region(grid.n, grid.L, grid.N, idx)
    masks = [_axis_membership(grid, c, cube.side) for c in cube.center]
    if grid.n == 1:
        idx = np.nonzero(masks[0])[0]
    else:
        m = masks[0][:, None] & masks[1][None, :]
        idx = np.nonzero(m.ravel())[0]
    return Region(grid.n, grid.L, grid.N, idx)


def ball_region(grid, center: Sequence[float], radius: float) -> Region:
    """Samples within periodic Euclidean distance < radius of center."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    x = axis_coords(grid)
    if grid.n == 1:
        d2 = periodic_displacement(x, float(center[0]), grid.L) ** 2
    else:
        dx = periodic_displacement(x, float(center[0]), grid.L)
        dy = periodic_displacement(x, float(center[1]), grid.L)
        d2 = dx[:, None] ** 2 + dy[None, :] ** 2
    idx = np.nonzero((d2 < radius**2).ravel())[0]
    return Region(grid.n, grid.L, grid.N, idx)


def random_balls(grid, count: int, rng: np.random.Generator,
                 r_min: float | None = None, r_max: float | None = None) -> list[tuple[tuple[float, ...], float]]:
    """Deterministically sampled (center, radius) pairs for family extension."""
    h = grid.L / grid.N
    r_lo = 2 * h if r_min is None else r_min
    r_hi = grid.L / 4 if r_max is None else r_max
    balls = []
    for _ in range(count):
        c = tuple(float(v) for v in rng.uniform(0.0, grid.L, size=grid.n))
        r = float(np.exp(rng.uniform(np.log(r_lo), np.log(r_hi))))
        balls.append((c, r))
    return balls


def measure(region: Region) -> float:
    """Lebesgue measure: sample count times the cell volume h^n."""
    h = region.L / region.N
    return region.size * h**region.n


def mean_value(f: GridFunction, region: Region) -> float:
    if region.size == 0:
        raise ValueError("empty region")
    return float(f.values.ravel()[region.indices].mean())


def ess_inf(f: GridFunction, region: Region) -> float:
    if region.size == 0:
        raise ValueError("empty region")
    return float(f.values.ravel()[region.indices].min())


def ess_sup(f: GridFunction, region: Region) -> float:
    if region.size == 0:
        raise ValueError("empty region")
    return float(f.values.ravel()[region.indices].max())


def dyadic_cubes(grid, max_level: int) -> list[Cube]:
    """All dyadic cubes of levels 0..max_level, each level tiling the box.

    Level-k cubes have side L/2^k; enumeration is by level, then row-major
    over block indices, matching the block order of level_blocks.
    """
    if max_level < 0:
        raise ValueError("max_level must be >= 0")
    if (1 << max_level) > grid.N:
        raise ValueError(f"max_level {max_level} too deep for N={grid.N}")
    cubes: list[Cube] = []
    for k in range(max_level + 1):
        s = grid.L / (1 << k)
        if grid.n == 1:
            for i in range(1 << k):
                cubes.append(Cube(((i + 0.5) * s,), s, level=k))
        else:
            for i in range(1 << k):
                for j in range(1 << k):
                    cubes.append(Cube(((i + 0.5) * s, (j + 0.5) * s), s, level=k))
    return cubes


def dilate_cube(q: Cube, t: float) -> Cube:
    """tQ: same center, side t*r, clipped to the box side under wrap."""
    if t <= 0:
        raise ValueError("dilation factor must be positive")
    if t == 1.0:
        return q
    return Cube(q.center, q.side * t, level=None)


def dyadic_address(grid, cube: Cube) -> tuple[int, int] | None:
    """(level, row-major block index) for a dyadic cube, else None."""
    if cube.level is None:
        return None
    k = cube.level
    if (1 << k) > grid.N:
        return None
    s = grid.L / (1 << k)
    if abs(cube.side - s) > 1e-12 * grid.L:
        return None
    bs = []
    for c in cube.center:
        b = c / s - 0.5
        bi = int(round(b))
        if abs(b - bi) > 1e-9:
            return None
        bs.append(bi % (1 << k))
    if grid.n == 1:
        return k, bs[0]
    return k, bs[0] * (1 << k) + bs[1]


def level_blocks(values: np.ndarray, n: int, level: int) -> np.ndarray:
    """Reshape sample values into (num_blocks, block_samples) dyadic blocks.

    Blocks are ordered row-major, matching dyadic_cubes enumeration within
    one level.
    """
    if n == 1:
        N = values.shape[0]
        B = 1 << level
        return values.reshape(B, N // B)
    N = values.shape[0]
    B = 1 << level
    bs = N // B
    return values.reshape(B, bs, B, bs).swapaxes(1, 2).reshape(B * B, bs * bs)


# ---------------------------------------------------------------------------
# serialization

_HEADER_RE = re.compile(r"#\s*n=(\d+)\s+L=([^\s]+)\s+N=(\d+)\s*$")


def save_grid_function(f: GridFunction, path: str | Path) -> None:
    """CSV form: header `# n=<n> L=<L> N=<N>`, one value per line, row-major."""
    lines = [f"# n={f.n} L={f.L!r} N={f.N}"]
    lines.extend(repr(float(v)) for v in f.values.ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def load_grid_function(path: str | Path) -> GridFunction:
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValueError(f"{path}: empty file")
    m = _HEADER_RE.match(text[0])
    if not m:
        raise ValueError(f"{path}: bad header {text[0]!r}")
    n, L, N = int(m.group(1)), float(m.group(2)), int(m.group(3))
    body = [ln for ln in text[1:] if ln and not ln.startswith("#")]
    vals = np.array([float(v) for v in body])
    if vals.size != N**n:
        raise ValueError(f"{path}: expected {N**n} values, found {vals.size}")
    if n == 2:
        vals = vals.reshape(N, N)
    return GridFunction(n, L, N, vals)
