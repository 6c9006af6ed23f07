"""Scenario input parsing.

Reads datapoint sites, per-timepoint sample series, DEM and mask rasters,
and building footprints into a :class:`~surgedeck.core.FloodScenario`.

File formats:

* datapoints: CSV ``id,x,y`` (or ``id,lon,lat`` when the manifest says
  ``crs: lonlat``)
* per-timestep samples: CSV ``id,eta,vx,vy`` where an empty ``eta`` field
  marks the sample dry for that timepoint
* DEM and masks: ESRI ASCII grid
* buildings: JSON array of ``{id, footprint: [[x, y], ...], height,
  name?, address?, ...}``

``#``-prefixed lines and blank lines are ignored in CSV files.  Numbers
are decimal with optional exponent.

Geographic input (``lonlat``) applies to datapoints and building
footprints, which are projected onto a local plane with an
equirectangular projection about the datapoint centroid.  Rasters are
expected to be provided in local meters already.
"""

from __future__ import annotations

import glob as globmod
import json
import math
import os
import re
from dataclasses import dataclass

import numpy as np

from .core import Building, FloodScenario, Rect, SurgedeckError, TerrainDEM

METERS_PER_DEG_LAT = 110540.0
METERS_PER_DEG_LON_EQUATOR = 111320.0


class IngestError(SurgedeckError):
    """Base class for scenario input failures."""


class MissingTimestep(IngestError):
    """The timestep series has a gap or is empty."""


class IdMismatch(IngestError):
    """A timestep file does not cover exactly the known datapoint ids."""


class MalformedRecord(IngestError):
    """A row failed to parse; carries file path and 1-based line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class OutOfExtent(SurgedeckError):
    """Query point lies outside the DEM extent."""


@dataclass
class ScenarioManifest:
    """Locates and describes one scenario's input files.

    Paths are absolute or relative to the manifest file's directory.
    ``vertical_offset`` is added to every wet elevation at load time to
    reconcile the sample datum with the DEM datum.
    """

    name: str
    crs: str                      # "local-meters" | "lonlat"
    datapoints_path: str
    timesteps_glob: str
    dem_path: str
    timestep_seconds: float
    buildings_path: str | None = None
    offshore_mask_path: str | None = None
    vertical_offset: float = 0.0

    def __post_init__(self):
        if self.crs not in ("local-meters", "lonlat"):
            raise IngestError(f"unknown crs {self.crs!r}")
        if self.timestep_seconds <= 0.0:
            raise IngestError("timestep_seconds must be positive")

    @staticmethod
    def from_json(path) -> "ScenarioManifest":
        with open(path) as f:
            raw = json.load(f)
        base = os.path.dirname(os.path.abspath(path))

        def resolve(p):
            if p is None:
                return None
            return p if os.path.isabs(p) else os.path.join(base, p)

        try:
            return ScenarioManifest(
                name=raw["name"],
                crs=raw.get("crs", "local-meters"),
                datapoints_path=resolve(raw["datapoints_path"]),
                timesteps_glob=resolve(raw["timesteps_glob"]),
                dem_path=resolve(raw["dem_path"]),
                timestep_seconds=float(raw["timestep_seconds"]),
                buildings_path=resolve(raw.get("buildings_path")),
                offshore_mask_path=resolve(raw.get("offshore_mask_path")),
                vertical_offset=float(raw.get("vertical_offset", 0.0)),
            )
        except KeyError as e:
            raise IngestError(f"manifest missing required key {e}") from None


def _iter_csv_rows(path):
    """Yield (line_no, fields) for data rows; skips blanks and # comments."""
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            yield line_no, [c.strip() for c in s.split(",")]


def _parse_float(path, line_no, text, what):
    try:
        return float(text)
    except ValueError:
        raise MalformedRecord(path, line_no, f"bad {what} {text!r}") from None


def load_datapoints(path):
    """Parse the datapoint site table. Returns (ids (N,) int64, coords (N,2))."""
    ids = []
    coords = []
    seen = set()
    for line_no, cols in _iter_csv_rows(path):
        if len(cols) != 3:
            raise MalformedRecord(path, line_no, f"expected 3 fields, got {len(cols)}")
        try:
            did = int(cols[0])
        except ValueError:
            raise MalformedRecord(path, line_no, f"bad id {cols[0]!r}") from None
        if did in seen:
            raise MalformedRecord(path, line_no, f"duplicate datapoint id {did}")
        seen.add(did)
        ids.append(did)
        coords.append((_parse_float(path, line_no, cols[1], "x"),
                       _parse_float(path, line_no, cols[2], "y")))
    if not ids:
        raise MalformedRecord(path, 1, "no datapoints")
    return np.asarray(ids, dtype=np.int64), np.asarray(coords, dtype=np.float64)


def load_timestep(path, id_index):
    """Parse one timestep sample file against known datapoint ids.

    Returns (eta (N,), velocity (N,2)); NaN eta marks dry, and dry samples
    carry zero velocity.
    """
    n = len(id_index)
    eta = np.full(n, np.nan)
    vel = np.zeros((n, 2))
    seen = np.zeros(n, dtype=bool)
    for line_no, cols in _iter_csv_rows(path):
        if len(cols) != 4:
            raise MalformedRecord(path, line_no, f"expected 4 fields, got {len(cols)}")
        try:
            did = int(cols[0])
        except ValueError:
            raise MalformedRecord(path, line_no, f"bad id {cols[0]!r}") from None
        row = id_index.get(did)
        if row is None:
            raise IdMismatch(f"{path}:{line_no}: unknown datapoint id {did}")
        if seen[row]:
            raise MalformedRecord(path, line_no, f"duplicate sample for id {did}")
        seen[row] = True
        if cols[1] == "":
            continue  # dry: eta stays NaN, velocity stays zero
        eta[row] = _parse_float(path, line_no, cols[1], "eta")
        vel[row, 0] = _parse_float(path, line_no, cols[2], "vx")
        vel[row, 1] = _parse_float(path, line_no, cols[3], "vy")
    if not seen.all():
        missing = [did for did, row in id_index.items() if not seen[row]]
        raise IdMismatch(f"{path}: missing samples for ids {sorted(missing)[:10]}")
    return eta, vel


_ESRI_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


def read_esri_ascii(path):
    """Read an ESRI ASCII grid.

    Returns (origin (2,), cell_size, values (rows, cols)) with row 0 the
    southernmost row (file order is north-first and gets flipped) and
    NODATA cells as NaN.
    """
    header = {}
    data_rows = []
    nodata = None
    with open(path) as f:
        lines = f.readlines()
    i = 0
    for i, line in enumerate(lines):
        parts = line.split()
        if not parts:
            continue
        key = parts[0].lower()
        if key in _ESRI_KEYS or key == "nodata_value":
            if len(parts) != 2:
                raise MalformedRecord(path, i + 1, f"bad header line {line.strip()!r}")
            header[key] = parts[1]
        else:
            break
    for k in _ESRI_KEYS:
        if k not in header:
            raise MalformedRecord(path, 1, f"missing header field {k}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    origin = np.array([float(header["xllcorner"]), float(header["yllcorner"])])
    cell = float(header["cellsize"])
    if "nodata_value" in header:
        nodata = float(header["nodata_value"])
    for line_no in range(i, len(lines)):
        parts = lines[line_no].split()
        if not parts:
            continue
        try:
            data_rows.extend(float(p) for p in parts)
        except ValueError:
            raise MalformedRecord(path, line_no + 1, "bad raster value") from None
    if len(data_rows) != nrows * ncols:
        raise MalformedRecord(path, len(lines),
                              f"expected {nrows * ncols} values, got {len(data_rows)}")
    grid = np.asarray(data_rows).reshape(nrows, ncols)[::-1].copy()
    if nodata is not None:
        grid[grid == nodata] = np.nan
    return origin, cell, grid


def load_dem(path) -> TerrainDEM:
    origin, cell, grid = read_esri_ascii(path)
    return TerrainDEM(origin=origin, cell_size=cell, elevations=grid)


def load_mask(path):
    """Boolean raster from an ESRI grid: nonzero and non-NODATA means true."""
    origin, cell, grid = read_esri_ascii(path)
    mask = np.nan_to_num(grid, nan=0.0) != 0.0
    return origin, cell, mask


def load_buildings(path, project=None) -> list[Building]:
    with open(path) as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise IngestError(f"{path}: buildings file must be a JSON array")
    out = []
    known = {"id", "footprint", "height", "name", "address"}
    for i, entry in enumerate(raw):
        try:
            fp = np.asarray(entry["footprint"], dtype=np.float64)
            if project is not None:
                fp = project(fp)
            out.append(Building(
                id=entry["id"],
                footprint=fp,
                height=float(entry["height"]),
                name=entry.get("name"),
                address=entry.get("address"),
                meta={k: v for k, v in entry.items() if k not in known},
            ))
        except (KeyError, TypeError, ValueError) as e:
            raise IngestError(f"{path}: building #{i}: {e}") from None
    return out


def equirect_projector(lon0: float, lat0: float):
    """Returns f((k,2) lon/lat degrees) -> (k,2) meters east/north of the anchor."""
    mx = METERS_PER_DEG_LON_EQUATOR * math.cos(math.radians(lat0))
    my = METERS_PER_DEG_LAT

    def project(ll):
        ll = np.asarray(ll, dtype=np.float64)
        out = np.empty_like(ll)
        out[..., 0] = (ll[..., 0] - lon0) * mx
        out[..., 1] = (ll[..., 1] - lat0) * my
        return out

    return project


def derive_offshore_mask(dem: TerrainDEM) -> np.ndarray:
    """Offshore = terrain at or below the z = 0 datum. NODATA counts onshore."""
    with np.errstate(invalid="ignore"):
        return np.where(np.isnan(dem.elevations), False, dem.elevations <= 0.0)


def dem_height_batch(dem: TerrainDEM, pts) -> np.ndarray:
    """Bilinear terrain height at (k,2) points, clamped at raster borders."""
    pts = np.asarray(pts, dtype=np.float64)
    gx = (pts[..., 0] - dem.origin[0]) / dem.cell_size - 0.5
    gy = (pts[..., 1] - dem.origin[1]) / dem.cell_size - 0.5
    x0 = np.clip(np.floor(gx).astype(np.int64), 0, dem.cols - 1)
    y0 = np.clip(np.floor(gy).astype(np.int64), 0, dem.rows - 1)
    x1 = np.minimum(x0 + 1, dem.cols - 1)
    y1 = np.minimum(y0 + 1, dem.rows - 1)
    fx = np.clip(gx - x0, 0.0, 1.0)
    fy = np.clip(gy - y0, 0.0, 1.0)
    e = dem.elevations
    v00 = e[y0, x0]
    v10 = e[y0, x1]
    v01 = e[y1, x0]
    v11 = e[y1, x1]
    # lerp form: exact for constant fields
    south = v00 + fx * (v10 - v00)
    north = v01 + fx * (v11 - v01)
    return south + fy * (north - south)


def dem_height_at(dem: TerrainDEM, p) -> float:
    """Bilinear terrain height at one point; raises OutOfExtent outside the raster."""
    ext = dem.extent
    if not ext.contains(p):
        raise OutOfExtent(f"point {tuple(p)} outside DEM extent "
                          f"[{ext.min_x},{ext.max_x}]x[{ext.min_y},{ext.max_y}]")
    return float(dem_height_batch(dem, np.asarray(p, dtype=np.float64)))


_TRAILING_INT = re.compile(r"(\d+)(?=\D*$)")


def _ordered_timestep_files(pattern):
    files = sorted(globmod.glob(pattern))
    if not files:
        raise MissingTimestep(f"no files match {pattern!r}")
    nums = []
    for f in files:
        m = _TRAILING_INT.search(os.path.basename(f))
        if m is None:
            nums = None
            break
        nums.append(int(m.group(1)))
    if nums is not None:
        order = np.argsort(nums, kind="stable")
        files = [files[i] for i in order]
        nums = sorted(nums)
        if len(set(nums)) != len(nums):
            raise MissingTimestep(f"duplicate timestep index in {pattern!r}")
        expect = list(range(nums[0], nums[0] + len(nums)))
        if nums != expect:
            gaps = sorted(set(expect) - set(nums))
            raise MissingTimestep(f"gap in timestep series: missing {gaps[:10]}")
    return files


def load_scenario(manifest: ScenarioManifest) -> FloodScenario:
    """Assemble a scenario from the files named by the manifest.

    Bounds are the tight AABB of the datapoints unioned with the DEM
    extent.  Wet elevations get ``manifest.vertical_offset`` added.
    """
    for p, what in ((manifest.datapoints_path, "datapoints"),
                    (manifest.dem_path, "dem")):
        if not os.path.exists(p):
            raise IngestError(f"{what} file not found: {p}")

    ids, coords = load_datapoints(manifest.datapoints_path)
    project = None
    if manifest.crs == "lonlat":
        lon0, lat0 = coords.mean(axis=0)
        project = equirect_projector(float(lon0), float(lat0))
        coords = project(coords)

    id_index = {int(d): i for i, d in enumerate(ids)}
    files = _ordered_timestep_files(manifest.timesteps_glob)
    eta = np.empty((len(files), len(ids)))
    vel = np.empty((len(files), len(ids), 2))
    for t, f in enumerate(files):
        eta[t], vel[t] = load_timestep(f, id_index)
    if manifest.vertical_offset != 0.0:
        eta = eta + manifest.vertical_offset  # NaN stays NaN

    dem = load_dem(manifest.dem_path)
    if manifest.offshore_mask_path is not None:
        m_origin, m_cell, mask = load_mask(manifest.offshore_mask_path)
        if mask.shape != dem.elevations.shape:
            raise IngestError("offshore mask grid does not match the DEM grid")
    else:
        mask = derive_offshore_mask(dem)

    buildings = []
    if manifest.buildings_path is not None:
        buildings = load_buildings(manifest.buildings_path, project=project)

    pts_rect = Rect(float(coords[:, 0].min()), float(coords[:, 1].min()),
                    float(coords[:, 0].max()), float(coords[:, 1].max()))
    bounds = pts_rect.union(dem.extent)

    return FloodScenario(
        name=manifest.name,
        ids=ids,
        positions=coords,
        eta=eta,
        velocity=vel,
        timestep_seconds=manifest.timestep_seconds,
        dem=dem,
        buildings=buildings,
        offshore_mask=mask,
        bounds=bounds,
    )
