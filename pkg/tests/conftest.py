"""Shared fixtures: synthetic scenarios, both in-memory and on-disk."""

import json

import numpy as np
import pytest

from surgedeck.core import Building, FloodScenario, Rect, TerrainDEM
from surgedeck.ingest import derive_offshore_mask


def build_scenario(ids, positions, eta, velocity, dem=None, buildings=(),
                   timestep_seconds=600.0, name="synthetic", offshore_mask=None):
    """Assemble a FloodScenario from arrays, filling GIS context with defaults."""
    positions = np.asarray(positions, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    if dem is None:
        lo = positions.min(axis=0) - 50.0
        hi = positions.max(axis=0) + 50.0
        span = np.maximum(hi - lo, 1.0)
        cell = float(max(span) / 16.0)
        rows = int(np.ceil(span[1] / cell)) + 1
        cols = int(np.ceil(span[0] / cell)) + 1
        dem = TerrainDEM(origin=lo, cell_size=cell, elevations=np.zeros((rows, cols)))
    if offshore_mask is None:
        offshore_mask = derive_offshore_mask(dem)
    pts = Rect(float(positions[:, 0].min()), float(positions[:, 1].min()),
               float(positions[:, 0].max()), float(positions[:, 1].max()))
    return FloodScenario(
        name=name, ids=np.asarray(ids, dtype=np.int64), positions=positions,
        eta=eta, velocity=velocity, timestep_seconds=timestep_seconds,
        dem=dem, buildings=list(buildings), offshore_mask=offshore_mask,
        bounds=pts.union(dem.extent),
    )


def random_scenario(rng, n_points=64, n_times=2, extent=1000.0, wet_fraction=0.8):
    """Random scatter over [0, extent]^2 with mixed wet/dry samples."""
    positions = rng.uniform(0.0, extent, size=(n_points, 2))
    eta = rng.uniform(0.5, 3.0, size=(n_times, n_points))
    dry = rng.random((n_times, n_points)) > wet_fraction
    eta[dry] = np.nan
    velocity = rng.uniform(-1.0, 1.0, size=(n_times, n_points, 2))
    velocity[dry] = 0.0
    rows = cols = 20
    cell = extent / 16.0
    dem = TerrainDEM(origin=np.array([-2 * cell, -2 * cell]), cell_size=cell,
                     elevations=rng.uniform(-2.0, 4.0, size=(rows, cols)))
    return build_scenario(np.arange(1, n_points + 1), positions, eta, velocity, dem=dem)


def write_esri_grid(path, origin, cell, values, nodata=None):
    """values has row 0 southernmost; files store the north row first."""
    values = np.asarray(values, dtype=float)
    rows, cols = values.shape
    with open(path, "w") as f:
        f.write(f"ncols {cols}\n")
        f.write(f"nrows {rows}\n")
        f.write(f"xllcorner {origin[0]}\n")
        f.write(f"yllcorner {origin[1]}\n")
        f.write(f"cellsize {cell}\n")
        if nodata is not None:
            f.write(f"NODATA_value {nodata}\n")
        for r in range(rows - 1, -1, -1):
            row = values[r]
            if nodata is not None:
                row = np.where(np.isnan(row), nodata, row)
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def write_scenario_dir(tmp_path, ids, positions, etas, velocities, dem_values,
                       dem_origin=(0.0, 0.0), dem_cell=100.0, buildings=None,
                       crs="local-meters", timestep_seconds=600.0,
                       mask_values=None, vertical_offset=0.0):
    """Write a complete on-disk scenario; returns the manifest path.

    etas: sequence of (N,) arrays with NaN = dry; velocities matching (N,2).
    """
    dp = tmp_path / "datapoints.csv"
    with open(dp, "w") as f:
        f.write("# id,x,y\n")
        for did, (x, y) in zip(ids, positions):
            f.write(f"{did},{float(x)!r},{float(y)!r}\n")
    for t, (eta, vel) in enumerate(zip(etas, velocities)):
        with open(tmp_path / f"ts_{t:04d}.csv", "w") as f:
            f.write("# id,eta,vx,vy\n")
            for i, did in enumerate(ids):
                if np.isnan(eta[i]):
                    f.write(f"{did},,,\n")
                else:
                    f.write(f"{did},{float(eta[i])!r},{float(vel[i][0])!r},{float(vel[i][1])!r}\n")
    write_esri_grid(tmp_path / "dem.asc", dem_origin, dem_cell, dem_values)
    manifest = {
        "name": "fixture",
        "crs": crs,
        "datapoints_path": "datapoints.csv",
        "timesteps_glob": "ts_*.csv",
        "dem_path": "dem.asc",
        "timestep_seconds": timestep_seconds,
        "vertical_offset": vertical_offset,
    }
    if buildings is not None:
        with open(tmp_path / "buildings.json", "w") as f:
            json.dump(buildings, f)
        manifest["buildings_path"] = "buildings.json"
    if mask_values is not None:
        write_esri_grid(tmp_path / "mask.asc", dem_origin, dem_cell, mask_values)
        manifest["offshore_mask_path"] = "mask.asc"
    mpath = tmp_path / "manifest.json"
    with open(mpath, "w") as f:
        json.dump(manifest, f)
    return mpath


@pytest.fixture
def rng():
    return np.random.default_rng(20260824)


@pytest.fixture
def small_scenario():
    """4 datapoints in 4 quadrants of [0,100]^2, 2 timepoints, flat DEM at -1."""
    ids = [1, 2, 3, 4]
    positions = [(25.0, 25.0), (75.0, 25.0), (25.0, 75.0), (75.0, 75.0)]
    eta = [[1.0, 2.0, 3.0, 4.0], [1.5, np.nan, 3.5, 4.5]]
    vel = np.zeros((2, 4, 2))
    vel[:, :, 0] = 1.0
    vel[1, 1] = 0.0
    dem = TerrainDEM(origin=np.array([-50.0, -50.0]), cell_size=25.0,
                     elevations=np.full((8, 8), -1.0))
    return build_scenario(ids, positions, eta, vel, dem=dem)
