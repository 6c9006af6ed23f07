"""Tests for scenario parsing, projection, DEM sampling, and the pack format."""

import math

import numpy as np
import pytest

from surgedeck.core import TerrainDEM
from surgedeck.ingest import (
    IdMismatch,
    IngestError,
    MalformedRecord,
    MissingTimestep,
    OutOfExtent,
    ScenarioManifest,
    dem_height_at,
    dem_height_batch,
    derive_offshore_mask,
    load_scenario,
    read_esri_ascii,
)
from surgedeck.pack import PackError, read_pack, write_pack

from conftest import write_esri_grid, write_scenario_dir


def _basic_dir(tmp_path, **kw):
    ids = [1, 2, 3, 4]
    positions = [(10.0, 10.0), (90.0, 10.0), (10.0, 90.0), (90.0, 90.0)]
    etas = [np.array([1.0, 2.0, np.nan, 4.0]), np.array([1.5, 2.5, 3.5, np.nan])]
    vels = [np.array([(0.1, 0.0), (0.2, 0.0), (0.0, 0.0), (0.4, 0.1)]),
            np.array([(0.1, 0.1), (0.2, 0.2), (0.3, 0.3), (0.0, 0.0)])]
    dem = np.linspace(-2.0, 2.0, 16).reshape(4, 4)
    return write_scenario_dir(tmp_path, ids, positions, etas, vels, dem,
                              dem_origin=(0.0, 0.0), dem_cell=25.0, **kw)


def test_load_scenario_basic(tmp_path):
    manifest = ScenarioManifest.from_json(_basic_dir(tmp_path))
    sc = load_scenario(manifest)
    assert sc.num_datapoints == 4
    assert sc.num_timepoints == 2
    # dry samples stay dry, never elevation 0
    assert np.isnan(sc.eta[0, 2]) and np.isnan(sc.eta[1, 3])
    np.testing.assert_array_equal(sc.velocity[0, 2], [0.0, 0.0])
    assert sc.eta[0, 0] == 1.0
    # bounds = datapoint AABB union DEM extent
    assert sc.bounds.min_x == 0.0 and sc.bounds.max_x == 100.0
    assert sc.bounds.max_y == 100.0


def test_vertical_offset_applies_to_wet_only(tmp_path):
    manifest = ScenarioManifest.from_json(_basic_dir(tmp_path, vertical_offset=0.25))
    sc = load_scenario(manifest)
    assert sc.eta[0, 0] == 1.25
    assert np.isnan(sc.eta[0, 2])


def test_missing_id_raises(tmp_path):
    mpath = _basic_dir(tmp_path)
    ts = tmp_path / "ts_0001.csv"
    lines = [l for l in ts.read_text().splitlines() if not l.startswith("3,")]
    ts.write_text("\n".join(lines) + "\n")
    with pytest.raises(IdMismatch):
        load_scenario(ScenarioManifest.from_json(mpath))


def test_unknown_id_raises(tmp_path):
    mpath = _basic_dir(tmp_path)
    with open(tmp_path / "ts_0000.csv", "a") as f:
        f.write("99,1.0,0.0,0.0\n")
    with pytest.raises(IdMismatch):
        load_scenario(ScenarioManifest.from_json(mpath))


def test_timestep_gap_raises(tmp_path):
    mpath = _basic_dir(tmp_path)
    (tmp_path / "ts_0001.csv").rename(tmp_path / "ts_0003.csv")
    with pytest.raises(MissingTimestep):
        load_scenario(ScenarioManifest.from_json(mpath))


def test_malformed_row_reports_line(tmp_path):
    mpath = _basic_dir(tmp_path)
    with open(tmp_path / "ts_0000.csv", "a") as f:
        f.write("2,oops,0.0,0.0\n")
    with pytest.raises(MalformedRecord) as e:
        load_scenario(ScenarioManifest.from_json(mpath))
    assert e.value.line_no == 6


def test_wrong_field_count(tmp_path):
    mpath = _basic_dir(tmp_path)
    with open(tmp_path / "datapoints.csv", "a") as f:
        f.write("5,1.0\n")
    with pytest.raises(MalformedRecord):
        load_scenario(ScenarioManifest.from_json(mpath))


def test_lonlat_projection_spacing(tmp_path):
    lat0 = 40.7
    ids = [1, 2, 3]
    dlon = 0.01
    positions = [(-74.0, lat0), (-74.0 + dlon, lat0), (-74.0, lat0 + 0.01)]
    etas = [np.array([1.0, 1.0, 1.0])]
    vels = [np.zeros((3, 2))]
    dem = np.zeros((3, 3))
    mpath = write_scenario_dir(tmp_path, ids, positions, etas, vels, dem,
                               dem_origin=(-100.0, -100.0), dem_cell=100.0,
                               crs="lonlat")
    sc = load_scenario(ScenarioManifest.from_json(mpath))
    # east spacing follows the equirectangular scale factor at the centroid
    lat_c = lat0 + 0.01 / 3.0
    expect = dlon * 111320.0 * math.cos(math.radians(lat_c))
    got = sc.positions[1, 0] - sc.positions[0, 0]
    assert abs(got - expect) / expect < 1e-3
    expect_n = 0.01 * 110540.0
    got_n = sc.positions[2, 1] - sc.positions[0, 1]
    assert abs(got_n - expect_n) / expect_n < 1e-3


def test_buildings_and_mask(tmp_path):
    buildings = [
        {"id": 7, "footprint": [[10, 10], [20, 10], [20, 20], [10, 20]],
         "height": 30.0, "name": "tower", "floors": 10},
    ]
    mask = np.zeros((4, 4))
    mask[0, :] = 1
    mpath = _basic_dir(tmp_path, buildings=buildings, mask_values=mask)
    sc = load_scenario(ScenarioManifest.from_json(mpath))
    assert len(sc.buildings) == 1
    b = sc.buildings[0]
    assert b.id == 7 and b.height == 30.0 and b.name == "tower"
    assert b.meta == {"floors": 10}
    assert sc.offshore_mask[0].all() and not sc.offshore_mask[1:].any()


def test_esri_ascii_roundtrip_and_nodata(tmp_path):
    vals = np.array([[1.0, 2.0], [np.nan, 4.0], [5.0, 6.0]])
    path = tmp_path / "g.asc"
    write_esri_grid(path, (100.0, 200.0), 10.0, vals, nodata=-9999)
    origin, cell, grid = read_esri_ascii(path)
    np.testing.assert_array_equal(origin, [100.0, 200.0])
    assert cell == 10.0
    assert grid.shape == (3, 2)
    assert np.isnan(grid[1, 0])
    np.testing.assert_array_equal(grid[0], [1.0, 2.0])  # row 0 = south
    np.testing.assert_array_equal(grid[2], [5.0, 6.0])


def test_derive_offshore_mask():
    dem = TerrainDEM(origin=np.zeros(2), cell_size=1.0,
                     elevations=np.full((3, 3), 2.0))
    assert not derive_offshore_mask(dem).any()
    dem2 = TerrainDEM(origin=np.zeros(2), cell_size=1.0,
                      elevations=np.full((3, 3), -1.0))
    assert derive_offshore_mask(dem2).all()
    ramp = TerrainDEM(origin=np.zeros(2), cell_size=1.0,
                      elevations=np.tile(np.linspace(-2, 2, 9), (2, 1)))
    m = derive_offshore_mask(ramp)
    expect = ramp.elevations <= 0.0
    np.testing.assert_array_equal(m, expect)


def _naive_bilinear(dem, x, y):
    gx = (x - dem.origin[0]) / dem.cell_size - 0.5
    gy = (y - dem.origin[1]) / dem.cell_size - 0.5
    x0 = min(max(int(math.floor(gx)), 0), dem.cols - 1)
    y0 = min(max(int(math.floor(gy)), 0), dem.rows - 1)
    x1 = min(x0 + 1, dem.cols - 1)
    y1 = min(y0 + 1, dem.rows - 1)
    fx = min(max(gx - x0, 0.0), 1.0)
    fy = min(max(gy - y0, 0.0), 1.0)
    e = dem.elevations
    return (e[y0, x0] * (1 - fx) * (1 - fy) + e[y0, x1] * fx * (1 - fy)
            + e[y1, x0] * (1 - fx) * fy + e[y1, x1] * fx * fy)


def test_dem_height_constant_and_planar(rng):
    dem = TerrainDEM(origin=np.array([0.0, 0.0]), cell_size=2.0,
                     elevations=np.full((10, 10), 5.0))
    for _ in range(20):
        p = rng.uniform(0, 20, size=2)
        assert dem_height_at(dem, p) == 5.0
    xs = (np.arange(10) + 0.5) * 2.0
    planar = TerrainDEM(origin=np.array([0.0, 0.0]), cell_size=2.0,
                        elevations=np.tile(xs, (10, 1)))
    for _ in range(50):
        p = rng.uniform(1.0, 19.0, size=2)  # interior: clamping never engages
        assert abs(dem_height_at(planar, p) - p[0]) < 1e-12


def test_dem_height_matches_oracle(rng):
    dem = TerrainDEM(origin=np.array([-30.0, 40.0]), cell_size=3.0,
                     elevations=rng.normal(size=(12, 9)))
    pts = np.column_stack([rng.uniform(-30, -30 + 9 * 3, 100),
                           rng.uniform(40, 40 + 12 * 3, 100)])
    got = dem_height_batch(dem, pts)
    for i in range(100):
        assert abs(got[i] - _naive_bilinear(dem, pts[i, 0], pts[i, 1])) < 1e-12


def test_dem_out_of_extent():
    dem = TerrainDEM(origin=np.zeros(2), cell_size=1.0, elevations=np.zeros((4, 4)))
    with pytest.raises(OutOfExtent):
        dem_height_at(dem, (4.5, 1.0))
    assert dem_height_at(dem, (4.0, 4.0)) == 0.0  # boundary included


def test_manifest_validation(tmp_path):
    with pytest.raises(IngestError):
        ScenarioManifest(name="x", crs="utm", datapoints_path="a",
                         timesteps_glob="b", dem_path="c", timestep_seconds=1.0)
    with pytest.raises(IngestError):
        ScenarioManifest(name="x", crs="local-meters", datapoints_path="a",
                         timesteps_glob="b", dem_path="c", timestep_seconds=0.0)


def test_pack_roundtrip(tmp_path):
    mpath = _basic_dir(tmp_path, buildings=[
        {"id": 1, "footprint": [[1, 1], [5, 1], [5, 5], [1, 5]], "height": 12.0},
    ])
    sc = load_scenario(ScenarioManifest.from_json(mpath))
    pk = tmp_path / "scenario.pack"
    write_pack(sc, pk)
    sc2 = read_pack(pk)
    np.testing.assert_array_equal(sc.ids, sc2.ids)
    np.testing.assert_array_equal(sc.positions, sc2.positions)
    np.testing.assert_array_equal(sc.eta, sc2.eta)  # NaN-safe: arrays equal elementwise
    np.testing.assert_array_equal(sc.velocity, sc2.velocity)
    np.testing.assert_array_equal(sc.dem.elevations, sc2.dem.elevations)
    np.testing.assert_array_equal(sc.offshore_mask, sc2.offshore_mask)
    assert sc2.name == sc.name and sc2.timestep_seconds == sc.timestep_seconds
    assert len(sc2.buildings) == 1 and sc2.buildings[0].height == 12.0
    assert sc2.bounds == sc.bounds


def test_pack_detects_corruption(tmp_path):
    sc = load_scenario(ScenarioManifest.from_json(_basic_dir(tmp_path)))
    pk = tmp_path / "scenario.pack"
    write_pack(sc, pk)
    blob = bytearray(pk.read_bytes())
    blob[-3] ^= 0xFF
    pk.write_bytes(bytes(blob))
    with pytest.raises(PackError):
        read_pack(pk)
