"""Spatial grid, refuge masks and patch layouts.

Fields on a grid are numpy arrays of shape ``(nx, ny)`` indexed ``[i, j]``,
``i`` along x and ``j`` along y. Cell ``(i, j)`` has its center at
``((i + 1/2) dx, (j + 1/2) dy)``.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered discretization of [0, lx] x [0, ly]"""

    nx: int
    ny: int
    lx: float
    ly: float

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ConfigError(f"Cell counts must be integers, got nx={self.nx}, ny={self.ny}")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError(f"Grid needs at least 2 cells per axis, got nx={self.nx}, ny={self.ny}")
        if not (math.isfinite(self.lx) and math.isfinite(self.ly)) or self.lx <= 0 or self.ly <= 0:
            raise ConfigError(f"Side lengths must be positive, got lx={self.lx}, ly={self.ly}")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def is_square(self) -> bool:
        return math.isclose(self.lx, self.ly, rel_tol=1e-12, abs_tol=0.0)

    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    def y_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.dy

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Meshgrid of cell centers, each of shape (nx, ny)"""
        return np.meshgrid(self.x_centers(), self.y_centers(), indexing="ij")

    def integrate(self, values: np.ndarray) -> float:
        """Midpoint quadrature of a cell field over the domain"""
        return float(np.sum(values) * self.cell_area)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))

    def check_field(self, values: np.ndarray, name: str = "field") -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ConfigError(f"{name} has shape {values.shape}, expected {self.shape}")
        return values

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "lx": self.lx, "ly": self.ly,
                "dx": self.dx, "dy": self.dy}


def build_grid(nx: int, ny: int, lx: float, ly: float) -> Grid:
    """
    Build a uniform cell-centered grid

    Args:
        nx, ny: cell counts per axis (at least 2)
        lx, ly: side lengths in meters

    Returns:
        Grid with dx = lx/nx and dy = ly/ny
    """
    return Grid(int(nx), int(ny), float(lx), float(ly))


@dataclass(frozen=True)
class RefugeMask:
    """Per-cell refuge density R(x) in [0, 1]"""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        values = self.grid.check_field(self.values, "refuge mask").copy()
        if not np.all(np.isfinite(values)):
            raise ConfigError("Refuge mask contains non-finite values")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ConfigError(
                f"Refuge mask values must lie in [0, 1], got range [{values.min()}, {values.max()}]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def is_indicator(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))

    def area(self) -> float:
        return mask_area(self)


def refuge_frequency_mask(grid: Grid, n: int, total_area: float) -> RefugeMask:
    """
    Indicator of the uniformly distributed refuge family A_n

    A_n is the union of n^2 squares of side sqrt(total_area)/n whose low
    corners sit on the lattice (m L/n, m' L/n). A cell belongs to the refuge
    when its center does.

    Args:
        grid: square grid, lx = ly = L
        n: frequency, n >= 1
        total_area: refuge area in m^2, 0 < total_area <= L^2

    Returns:
        Indicator RefugeMask of A_n
    """
    if not grid.is_square:
        raise ConfigError(f"Frequency refuges need a square domain, got lx={grid.lx}, ly={grid.ly}")
    if int(n) != n or n < 1:
        raise ConfigError(f"Refuge frequency must be a positive integer, got {n}")
    n = int(n)
    side_length = grid.lx
    if not (0.0 < total_area <= side_length ** 2):
        raise ConfigError(
            f"Refuge area must lie in (0, {side_length ** 2}], got {total_area}")
    side = math.sqrt(total_area) / n
    cell = max(grid.dx, grid.dy)
    # small relative slack so that exactly one-cell squares stay legal
    if side < cell * (1.0 - 1e-12):
        raise ConfigError(
            f"Frequency n={n} is unresolvable: sub-square side {side:.6g} m is smaller "
            f"than one cell ({cell:.6g} m)")

    period = side_length / n

    def _inside(centers: np.ndarray) -> np.ndarray:
        m = np.minimum(np.floor(centers / period), n - 1)
        offset = centers - m * period
        return (offset >= 0.0) & (offset <= side)

    values = np.outer(_inside(grid.x_centers()), _inside(grid.y_centers())).astype(float)
    return RefugeMask(values, grid)


def refuge_uniform_mask(grid: Grid, r: float) -> RefugeMask:
    """Constant refuge density r everywhere"""
    if not (0.0 <= r <= 1.0):
        raise ConfigError(f"Uniform refuge density must lie in [0, 1], got {r}")
    return RefugeMask(grid.full(r), grid)


def empty_mask(grid: Grid) -> RefugeMask:
    return refuge_uniform_mask(grid, 0.0)


def mask_area(mask: RefugeMask) -> float:
    """Refuge area: sum of densities times cell area"""
    return mask.grid.integrate(mask.values)


def load_mask(path: Union[str, Path], grid: Grid) -> RefugeMask:
    """
    Read an explicit refuge mask from a comma-separated grid file

    Row i of the file holds the densities of cells (i, 0..ny-1).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Mask file not found: {path}")
    try:
        values = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as e:
        raise ConfigError(f"Could not parse mask file {path}: {e}") from e
    return RefugeMask(values, grid)


@dataclass(frozen=True)
class PatchSpec:
    """Rectangular patches (x0, y0, width, height) in meters with one density each"""

    rectangles: List[Tuple[float, float, float, float]] = field(default_factory=list)
    densities: List[float] = field(default_factory=list)

    def __post_init__(self):
        rectangles = [tuple(float(v) for v in rect) for rect in self.rectangles]
        densities = [float(d) for d in self.densities]
        if len(rectangles) != len(densities):
            raise ConfigError(
                f"PatchSpec has {len(rectangles)} rectangles but {len(densities)} densities")
        for rect, density in zip(rectangles, densities):
            if len(rect) != 4:
                raise ConfigError(f"Rectangle must be (x0, y0, width, height), got {rect}")
            if not all(math.isfinite(v) for v in rect):
                raise ConfigError(f"Rectangle has non-finite coordinates: {rect}")
            if rect[2] <= 0 or rect[3] <= 0:
                raise ConfigError(f"Rectangle must have positive width and height: {rect}")
            if not math.isfinite(density) or density < 0:
                raise ConfigError(f"Patch density must be finite and nonnegative, got {density}")
        object.__setattr__(self, "rectangles", rectangles)
        object.__setattr__(self, "densities", densities)

    def __len__(self) -> int:
        return len(self.rectangles)

    def check_inside(self, grid: Grid) -> None:
        tol = 1e-9 * max(grid.lx, grid.ly)
        for x0, y0, width, height in self.rectangles:
            if x0 < -tol or y0 < -tol or x0 + width > grid.lx + tol or y0 + height > grid.ly + tol:
                raise ConfigError(
                    f"Rectangle ({x0}, {y0}, {width}, {height}) escapes the domain "
                    f"[0, {grid.lx}] x [0, {grid.ly}]")


def patches_field(grid: Grid, spec: PatchSpec) -> np.ndarray:
    """
    Rasterize a patch layout onto the grid

    A cell takes the density of a rectangle containing its center; on
    overlaps the last listed rectangle wins. Cells outside every rectangle
    are zero.
    """
    spec.check_inside(grid)
    x, y = grid.cell_centers()
    values = grid.zeros()
    for (x0, y0, width, height), density in zip(spec.rectangles, spec.densities):
        inside = (x >= x0) & (x <= x0 + width) & (y >= y0) & (y <= y0 + height)
        values[inside] = density
    return values


def frequency_square_patch(total_area: float, density: float = 1.0) -> PatchSpec:
    """The frequency-1 refuge square as a patch: [0, sqrt(A)]^2"""
    side = math.sqrt(total_area)
    return PatchSpec([(0.0, 0.0, side, side)], [density])


def parse_patch_spec(text: str) -> PatchSpec:
    """
    Parse the patch block format

    One rectangle per line: ``x0 y0 width height density`` in meters.
    Blank lines and lines starting with ``#`` are ignored.
    """
    rectangles = []
    densities = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ConfigError(
                f"Patch line {lineno} must have 5 columns (x0 y0 width height density): {raw!r}")
        try:
            x0, y0, width, height, density = (float(p) for p in parts)
        except ValueError as e:
            raise ConfigError(f"Patch line {lineno} is not numeric: {raw!r}") from e
        rectangles.append((x0, y0, width, height))
        densities.append(density)
    return PatchSpec(rectangles, densities)


def format_patch_spec(spec: PatchSpec) -> str:
    lines = ["# x0 y0 width height density (meters)"]
    for (x0, y0, width, height), density in zip(spec.rectangles, spec.densities):
        lines.append(f"{x0:.17g} {y0:.17g} {width:.17g} {height:.17g} {density:.17g}")
    return "\n".join(lines) + "\n"


def load_patch_spec(path: Union[str, Path]) -> PatchSpec:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Layout file not found: {path}")
    return parse_patch_spec(path.read_text())


def save_patch_spec(spec: PatchSpec, path: Union[str, Path]) -> None:
    Path(path).write_text(format_patch_spec(spec))
