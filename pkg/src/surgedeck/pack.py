"""Single-file binary scenario container for fast reload.

Layout (all little-endian):

* 4-byte magic ``SRGD``, u16 version, u16 section count
* section table: per section a fixed 28-byte record of 8-byte ASCII
  name (space padded), u64 offset, u64 length, u32 CRC32
* section payloads

Sections: ``META`` (JSON), ``DPTS`` (ids + positions), ``TSRS`` (eta +
velocity series), ``DEM`` (raster), ``BLDG`` (JSON), ``MASK`` (raster
bits).  Floats are IEEE f64, so a pack round-trip reproduces the
scenario bit-for-bit.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .core import Building, FloodScenario, Rect, SurgedeckError, TerrainDEM

MAGIC = b"SRGD"
VERSION = 1


class PackError(SurgedeckError):
    """Corrupt or unreadable pack file."""


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _i64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<i8").tobytes()


def _building_json(b: Building) -> dict:
    d = {"id": b.id, "footprint": b.footprint.tolist(), "height": b.height}
    if b.name is not None:
        d["name"] = b.name
    if b.address is not None:
        d["address"] = b.address
    d.update(b.meta)
    return d


def write_pack(scenario: FloodScenario, path) -> None:
    n = scenario.num_datapoints
    t = scenario.num_timepoints
    dem = scenario.dem
    meta = {
        "name": scenario.name,
        "timestep_seconds": scenario.timestep_seconds,
        "num_datapoints": n,
        "num_timepoints": t,
        "bounds": [scenario.bounds.min_x, scenario.bounds.min_y,
                   scenario.bounds.max_x, scenario.bounds.max_y],
    }
    sections = [
        (b"META    ", json.dumps(meta, sort_keys=True).encode()),
        (b"DPTS    ", _i64(scenario.ids) + _f64(scenario.positions)),
        (b"TSRS    ", _f64(scenario.eta) + _f64(scenario.velocity)),
        (b"DEM     ", struct.pack("<ddd II", float(dem.origin[0]), float(dem.origin[1]),
                                  dem.cell_size, dem.rows, dem.cols) + _f64(dem.elevations)),
        (b"BLDG    ", json.dumps([_building_json(b) for b in scenario.buildings],
                                 sort_keys=True).encode()),
        (b"MASK    ", np.packbits(scenario.offshore_mask.astype(np.uint8)).tobytes()),
    ]
    header = struct.pack("<4sHH", MAGIC, VERSION, len(sections))
    table_size = len(sections) * struct.calcsize("<8sQQI")
    offset = len(header) + table_size
    table = b""
    for name, payload in sections:
        table += struct.pack("<8sQQI", name, offset, len(payload),
                             zlib.crc32(payload) & 0xFFFFFFFF)
        offset += len(payload)
    with open(path, "wb") as f:
        f.write(header)
        f.write(table)
        for _, payload in sections:
            f.write(payload)


def _read_sections(path) -> dict[str, bytes]:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise PackError(f"{path}: not a scenario pack")
    _, version, count = struct.unpack_from("<4sHH", blob, 0)
    if version != VERSION:
        raise PackError(f"{path}: unsupported pack version {version}")
    rec = struct.calcsize("<8sQQI")
    out = {}
    for i in range(count):
        name, off, length, crc = struct.unpack_from("<8sQQI", blob, 8 + i * rec)
        payload = blob[off:off + length]
        if len(payload) != length:
            raise PackError(f"{path}: truncated section {name!r}")
        if zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise PackError(f"{path}: CRC mismatch in section {name!r}")
        out[name.decode().strip()] = payload
    return out


def read_pack(path) -> FloodScenario:
    s = _read_sections(path)
    try:
        meta = json.loads(s["META"])
        n = int(meta["num_datapoints"])
        t = int(meta["num_timepoints"])
        ids = np.frombuffer(s["DPTS"][:8 * n], dtype="<i8").astype(np.int64)
        positions = np.frombuffer(s["DPTS"][8 * n:], dtype="<f8").reshape(n, 2).copy()
        eta = np.frombuffer(s["TSRS"][:8 * t * n], dtype="<f8").reshape(t, n).copy()
        velocity = np.frombuffer(s["TSRS"][8 * t * n:], dtype="<f8").reshape(t, n, 2).copy()
        ox, oy, cell, rows, cols = struct.unpack_from("<ddd II", s["DEM"], 0)
        dem_head = struct.calcsize("<ddd II")
        elev = np.frombuffer(s["DEM"][dem_head:], dtype="<f8").reshape(rows, cols).copy()
        dem = TerrainDEM(origin=np.array([ox, oy]), cell_size=cell, elevations=elev)
        known = {"id", "footprint", "height", "name", "address"}
        buildings = [
            Building(id=e["id"], footprint=np.asarray(e["footprint"], dtype=np.float64),
                     height=float(e["height"]), name=e.get("name"), address=e.get("address"),
                     meta={k: v for k, v in e.items() if k not in known})
            for e in json.loads(s["BLDG"])
        ]
        bits = np.unpackbits(np.frombuffer(s["MASK"], dtype=np.uint8),
                             count=rows * cols)
        mask = bits.reshape(rows, cols).astype(bool)
        b = meta["bounds"]
        bounds = Rect(b[0], b[1], b[2], b[3])
        return FloodScenario(
            name=meta["name"], ids=ids, positions=positions, eta=eta,
            velocity=velocity, timestep_seconds=float(meta["timestep_seconds"]),
            dem=dem, buildings=buildings, offshore_mask=mask, bounds=bounds,
        )
    except (KeyError, ValueError, struct.error) as e:
        raise PackError(f"{path}: malformed pack ({e})") from None
