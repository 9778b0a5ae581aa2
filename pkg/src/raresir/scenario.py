"""Simulation window: tile geometry, path-loss grid, building mask, intensity.

Grids are stored as ``[row, col]`` arrays with row 0 at the *top* of the
window, the same order as the rows of an ESRI ASCII file.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pathloss import analytic_pathloss, linear_to_db

DEFAULT_NODATA = -9999.0

_HEADER_KEYS = (
    "ncols",
    "nrows",
    "xllcorner",
    "yllcorner",
    "xllcenter",
    "yllcenter",
    "cellsize",
    "dx",
    "dy",
    "nodata_value",
)


class GridFormatError(ValueError):
    """Malformed grid file. ``line``/``column`` are 1-based when known."""

    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GridGeometry:
    n_cols: int
    n_rows: int
    cell_width: float = 1.0
    cell_height: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.n_cols) < 1 or int(self.n_rows) < 1:
            raise ValueError("grid needs at least one row and one column")
        if not (self.cell_width > 0 and self.cell_height > 0):
            raise ValueError("cell width and height must be > 0")
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def width(self):
        return self.n_cols * self.cell_width

    @property
    def height(self):
        return self.n_rows * self.cell_height

    @property
    def area(self):
        return self.width * self.height

    @property
    def tile_area(self):
        return self.cell_width * self.cell_height

    @property
    def center(self):
        x0, y0 = self.origin
        return (x0 + self.width / 2, y0 + self.height / 2)

    def tile_centers(self):
        """(x, y) arrays of tile-center coordinates, each of shape ``(n_rows, n_cols)``."""
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.n_cols) + 0.5) * self.cell_width
        ys = y0 + (self.n_rows - np.arange(self.n_rows) - 0.5) * self.cell_height
        return np.meshgrid(xs, ys)

    def tile_bounds(self, row, col):
        """``(xmin, ymin, xmax, ymax)`` of tile ``(row, col)``."""
        x0, y0 = self.origin
        xmin = x0 + col * self.cell_width
        ymin = y0 + (self.n_rows - row - 1) * self.cell_height
        return (xmin, ymin, xmin + self.cell_width, ymin + self.cell_height)


@dataclass(frozen=True)
class PathLossGrid:
    """Per-tile path loss in dB; ``nodata`` marks building tiles."""

    geometry: GridGeometry
    values_db: np.ndarray
    nodata: np.ndarray
    nodata_value: float = DEFAULT_NODATA

    def __post_init__(self):
        values = np.asarray(self.values_db, dtype=float)
        nodata = np.asarray(self.nodata, dtype=bool)
        if values.shape != self.geometry.shape or nodata.shape != self.geometry.shape:
            raise ValueError(
                f"grid shape {values.shape} does not match geometry {self.geometry.shape}"
            )
        values = np.where(nodata, np.nan, values)
        free = values[~nodata]
        if not np.all(np.isfinite(free)):
            raise ValueError("path-loss values must be finite outside NODATA tiles")
        lin = np.power(10.0, free / 10.0)
        if np.any(~(lin > 0)) or not np.all(np.isfinite(lin)):
            raise ValueError("path loss out of range: linear value must be positive and finite")
        if np.any(free > 0):
            warnings.warn(
                "path-loss grid has positive dB values; treating them as relative gains",
                stacklevel=3,
            )
        object.__setattr__(self, "values_db", _frozen(values))
        object.__setattr__(self, "nodata", _frozen(nodata))

    @property
    def linear(self):
        """Linear-scale path loss with 0 on NODATA tiles."""
        out = np.zeros(self.geometry.shape)
        out[~self.nodata] = np.power(10.0, self.values_db[~self.nodata] / 10.0)
        return out


@dataclass(frozen=True)
class BuildingMask:
    geometry: GridGeometry
    blocked: np.ndarray

    def __post_init__(self):
        blocked = np.asarray(self.blocked, dtype=bool)
        if blocked.shape != self.geometry.shape:
            raise ValueError("mask shape does not match geometry")
        object.__setattr__(self, "blocked", _frozen(blocked))


@dataclass(frozen=True)
class IntensityMeasure:
    geometry: GridGeometry
    mass_per_tile: np.ndarray
    total_mass: float

    def __post_init__(self):
        object.__setattr__(self, "mass_per_tile", _frozen(self.mass_per_tile, float))


def build_intensity(mask: BuildingMask) -> IntensityMeasure:
    """Tile area on free tiles, zero on building tiles."""
    g = mask.geometry
    mass = np.where(mask.blocked, 0.0, g.tile_area)
    total = float(np.count_nonzero(~mask.blocked)) * g.tile_area
    if total <= 0:
        raise ValueError("every tile is blocked: intensity measure has zero mass")
    return IntensityMeasure(g, mass, total)


def calibrated_tau(intensity: IntensityMeasure) -> float:
    """Threshold ``1 / mu_d(W)`` on linear scale (inverse free area)."""
    if not intensity.total_mass > 0:
        raise ValueError("intensity has zero total mass")
    return 1.0 / intensity.total_mass


@dataclass(frozen=True)
class Scenario:
    pathloss: PathLossGrid
    mask: BuildingMask
    intensity: IntensityMeasure
    name: str = "scenario"
    # flat row-major indices of free tiles and their linear path loss; what the
    # Monte Carlo core iterates over
    free_index: np.ndarray = field(init=False, repr=False, compare=False)
    free_pathloss: np.ndarray = field(init=False, repr=False, compare=False)
    free_mass: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.pathloss.geometry == self.mask.geometry == self.intensity.geometry):
            raise ValueError("path-loss grid, mask and intensity geometries differ")
        if not np.array_equal(self.pathloss.nodata, self.mask.blocked):
            raise ValueError("building mask disagrees with NODATA tiles of the path-loss grid")
        idx = np.flatnonzero(~self.mask.blocked.ravel())
        object.__setattr__(self, "free_index", _frozen(idx))
        object.__setattr__(self, "free_pathloss", _frozen(self.pathloss.linear.ravel()[idx]))
        object.__setattr__(self, "free_mass", _frozen(self.intensity.mass_per_tile.ravel()[idx]))

    @property
    def geometry(self):
        return self.pathloss.geometry

    @classmethod
    def from_grids(cls, pathloss: PathLossGrid, mask: BuildingMask | None = None, name="scenario"):
        if mask is None:
            mask = BuildingMask(pathloss.geometry, pathloss.nodata)
        elif mask.geometry != pathloss.geometry:
            raise ValueError("mask geometry differs from path-loss geometry")
        return cls(pathloss, mask, build_intensity(mask), name)

    def expand(self, free_values, fill=0.0):
        """Scatter a per-free-tile vector back onto the full grid."""
        out = np.full(self.geometry.n_rows * self.geometry.n_cols, fill, dtype=float)
        out[self.free_index] = free_values
        return out.reshape(self.geometry.shape)


# ---------------------------------------------------------------- grid files


def _parse_number(token, line, column):
    try:
        return float(token)
    except ValueError:
        raise GridFormatError(f"non-numeric token {token!r}", line, column) from None


def read_ascii_grid(stream):
    """Parse an ESRI ASCII grid.

    Returns ``(geometry, values, nodata_value)`` where ``values`` holds the raw
    file entries (NODATA entries included) in file row order.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = stream.read().splitlines()
    header = {}
    lineno = 0
    while lineno < len(lines):
        parts = lines[lineno].split()
        if not parts:
            lineno += 1
            continue
        key = parts[0].lower()
        if key not in _HEADER_KEYS:
            try:
                float(key)
                break  # first data row
            except ValueError:
                pass
        if key not in _HEADER_KEYS:
            raise GridFormatError(f"unknown header key {parts[0]!r}", lineno + 1, 1)
        if len(parts) != 2:
            raise GridFormatError(f"header key {parts[0]!r} needs exactly one value", lineno + 1)
        if key in header:
            raise GridFormatError(f"duplicate header key {parts[0]!r}", lineno + 1, 1)
        header[key] = (_parse_number(parts[1], lineno + 1, 2), lineno + 1)
        lineno += 1

    for key in ("ncols", "nrows"):
        if key not in header:
            raise GridFormatError(f"missing header key {key!r}")
        value, at = header[key]
        if value != int(value) or value < 1:
            raise GridFormatError(f"{key} must be a positive integer", at, 2)
    n_cols, n_rows = int(header["ncols"][0]), int(header["nrows"][0])

    if "cellsize" in header:
        dx = dy = header["cellsize"][0]
    elif "dx" in header and "dy" in header:
        dx, dy = header["dx"][0], header["dy"][0]
    else:
        raise GridFormatError("missing header key 'cellsize' (or 'dx'/'dy')")
    if not (dx > 0 and dy > 0):
        raise GridFormatError("cell size must be > 0")

    if "xllcorner" in header and "yllcorner" in header:
        x0, y0 = header["xllcorner"][0], header["yllcorner"][0]
    elif "xllcenter" in header and "yllcenter" in header:
        x0, y0 = header["xllcenter"][0] - dx / 2, header["yllcenter"][0] - dy / 2
    else:
        raise GridFormatError("missing header keys 'xllcorner'/'yllcorner'")
    nodata_value = header.get("nodata_value", (DEFAULT_NODATA, None))[0]

    values = np.empty((n_rows, n_cols))
    row = 0
    for lineno in range(lineno, len(lines)):
        parts = lines[lineno].split()
        if not parts:
            continue
        if row >= n_rows:
            raise GridFormatError(f"more than nrows={n_rows} data rows", lineno + 1)
        if len(parts) != n_cols:
            raise GridFormatError(
                f"expected ncols={n_cols} values, found {len(parts)}", lineno + 1
            )
        for col, token in enumerate(parts):
            v = _parse_number(token, lineno + 1, col + 1)
            if not math.isfinite(v):
                raise GridFormatError(f"non-finite value {token!r}", lineno + 1, col + 1)
            values[row, col] = v
        row += 1
    if row != n_rows:
        raise GridFormatError(f"expected nrows={n_rows} data rows, found {row}")

    return GridGeometry(n_cols, n_rows, dx, dy, (x0, y0)), values, nodata_value


def _fmt(v):
    # repr round-trips float64 exactly; integral values print without ".0"
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


def write_ascii_grid(stream, geometry: GridGeometry, values, nodata=None, nodata_value=DEFAULT_NODATA):
    """Write an ESRI ASCII grid; ``nodata`` is an optional boolean mask."""
    values = np.asarray(values, dtype=float)
    if values.shape != geometry.shape:
        raise ValueError("values do not match geometry")
    if nodata is not None:
        values = np.where(nodata, nodata_value, values)
    out = [f"ncols {geometry.n_cols}", f"nrows {geometry.n_rows}"]
    out.append(f"xllcorner {_fmt(geometry.origin[0])}")
    out.append(f"yllcorner {_fmt(geometry.origin[1])}")
    if geometry.cell_width == geometry.cell_height:
        out.append(f"cellsize {_fmt(geometry.cell_width)}")
    else:
        out.append(f"dx {_fmt(geometry.cell_width)}")
        out.append(f"dy {_fmt(geometry.cell_height)}")
    out.append(f"nodata_value {_fmt(nodata_value)}")
    for row in values:
        out.append(" ".join(_fmt(v) for v in row))
    stream.write("\n".join(out) + "\n")


def load_pathloss_grid(stream) -> PathLossGrid:
    geometry, values, nodata_value = read_ascii_grid(stream)
    nodata = values == nodata_value
    return PathLossGrid(geometry, values, nodata, nodata_value)


def write_pathloss_grid(stream, grid: PathLossGrid):
    write_ascii_grid(stream, grid.geometry, grid.values_db, grid.nodata, grid.nodata_value)


def load_mask(stream) -> BuildingMask:
    """0/1 grid, 1 = building. NODATA entries count as blocked."""
    geometry, values, nodata_value = read_ascii_grid(stream)
    nodata = values == nodata_value
    bad = ~nodata & ~np.isin(values, (0.0, 1.0))
    if np.any(bad):
        r, c = np.argwhere(bad)[0]
        raise GridFormatError(f"mask entries must be 0 or 1, found {values[r, c]} at row {r}, col {c}")
    return BuildingMask(geometry, nodata | (values == 1.0))


def write_mask(stream, mask: BuildingMask):
    write_ascii_grid(stream, mask.geometry, mask.blocked.astype(float))


def load_scenario(path, mask_path=None, name=None) -> Scenario:
    """Load a scenario from a ``.asc`` path-loss file or a directory.

    A directory must contain ``pathloss.asc`` and may contain ``mask.asc``.
    """
    path = Path(path)
    if path.is_dir():
        if mask_path is None and (path / "mask.asc").exists():
            mask_path = path / "mask.asc"
        name = name or path.name
        path = path / "pathloss.asc"
    with open(path) as fh:
        grid = load_pathloss_grid(fh)
    mask = None
    if mask_path is not None:
        with open(mask_path) as fh:
            mask = load_mask(fh)
    return Scenario.from_grids(grid, mask, name or path.stem)


def save_scenario(scenario: Scenario, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "pathloss.asc", "w", newline="\n") as fh:
        write_pathloss_grid(fh, scenario.pathloss)
    with open(directory / "mask.asc", "w", newline="\n") as fh:
        write_mask(fh, scenario.mask)
    return directory / "pathloss.asc", directory / "mask.asc"


# ---------------------------------------------------------------- synthetic


def generate_synthetic(
    n_cols,
    n_rows,
    cell_width=1.0,
    cell_height=None,
    alpha=3.0,
    obstacles=(),
    name="synthetic",
) -> Scenario:
    """Analytic ``min(1, s**-alpha)`` window with the base station at its center.

    ``obstacles`` are ``(x0, y0, x1, y1)`` rectangles in window coordinates
    (origin at the lower-left corner); tiles whose center lies inside one are
    blocked.
    """
    if not alpha > 0:
        raise ValueError(f"path-loss exponent must be > 0, got {alpha}")
    cell_height = cell_width if cell_height is None else cell_height
    g = GridGeometry(n_cols, n_rows, cell_width, cell_height)
    xs, ys = g.tile_centers()
    cx, cy = g.center
    ell = analytic_pathloss(np.hypot(xs - cx, ys - cy), alpha)
    blocked = np.zeros(g.shape, dtype=bool)
    for rect in obstacles:
        x0, y0, x1, y1 = map(float, rect)
        if x0 > x1:
            x0, x1 = x1, x0
        if y0 > y1:
            y0, y1 = y1, y0
        if x0 < 0 or y0 < 0 or x1 > g.width or y1 > g.height:
            raise ValueError(f"obstacle {rect} lies outside the {g.width} x {g.height} window")
        blocked |= (xs >= x0) & (xs <= x1) & (ys >= y0) & (ys <= y1)
    grid = PathLossGrid(g, linear_to_db(ell), blocked)
    return Scenario.from_grids(grid, None, name)


CITY_BLOCK_SIZE = (311, 274)


def city_block_obstacles():
    """Eight 65 x 55 m blocks around an open central plaza (about a third built up)."""
    rects = []
    for x0, x1 in ((20, 85), (123, 188), (226, 291)):
        for y0, y1 in ((18, 73), (110, 165), (201, 256)):
            if (x0, y0) != (123, 110):
                rects.append((x0, y0, x1, y1))
    return rects


def city_block_window(alpha=3.0, name="city-blocks") -> Scenario:
    """Synthetic 311 x 274 m stand-in for a downtown plaza window.

    Same extent and built-up share as the plaza window used in the original
    ray-launching study, but with analytic path loss; it is not that data.
    """
    n_cols, n_rows = CITY_BLOCK_SIZE
    return generate_synthetic(n_cols, n_rows, 1.0, 1.0, alpha, city_block_obstacles(), name)


def scenario_from_linear(pathloss_linear, blocked=None, cell_width=1.0, cell_height=None, name="custom"):
    """Build a scenario straight from a linear path-loss matrix (handy for small test windows)."""
    ell = np.asarray(pathloss_linear, dtype=float)
    if ell.ndim != 2:
        raise ValueError("path-loss matrix must be 2-D")
    blocked = np.zeros(ell.shape, bool) if blocked is None else np.asarray(blocked, bool)
    cell_height = cell_width if cell_height is None else cell_height
    g = GridGeometry(ell.shape[1], ell.shape[0], cell_width, cell_height)
    values = np.zeros(ell.shape)
    values[~blocked] = 10.0 * np.log10(ell[~blocked])
    return Scenario.from_grids(PathLossGrid(g, values, blocked), None, name)


__all__ = [
    "DEFAULT_NODATA",
    "BuildingMask",
    "GridFormatError",
    "GridGeometry",
    "IntensityMeasure",
    "PathLossGrid",
    "Scenario",
    "build_intensity",
    "city_block_obstacles",
    "city_block_window",
    "calibrated_tau",
    "generate_synthetic",
    "load_mask",
    "load_pathloss_grid",
    "load_scenario",
    "read_ascii_grid",
    "save_scenario",
    "scenario_from_linear",
    "write_ascii_grid",
    "write_mask",
    "write_pathloss_grid",
]
