import struct

import numpy as np
import pytest

from pilotwave.core import ComplexField, ConfigError, Grid3
from pilotwave.io import (
    config_hash,
    read_snapshot,
    read_trajectory_csv,
    write_snapshot,
    write_trajectory_csv,
)
from pilotwave.schrodinger import TrajectoryRecord


def _record():
    times = np.array([0.0, 0.125, 0.25])
    pos = np.array([[0.1, 0.2, 0.3], [0.11, 0.22, 0.31], [0.12, 0.21, 0.33]])
    vel = pos * 0.5
    return TrajectoryRecord(times=times, positions=pos, velocities=vel,
                            abs_psi=np.array([1.0, 0.9, 0.8000000000000231]))


def test_trajectory_roundtrip(tmp_path):
    rec = _record()
    path = tmp_path / "t.csv"
    write_trajectory_csv(path, rec)
    back = read_trajectory_csv(path)
    np.testing.assert_array_equal(back.times, rec.times)
    np.testing.assert_array_equal(back.positions, rec.positions)
    np.testing.assert_array_equal(back.velocities, rec.velocities)
    np.testing.assert_array_equal(back.abs_psi, rec.abs_psi)


def test_trajectory_record_invariants():
    with pytest.raises(ConfigError):
        TrajectoryRecord(
            times=np.array([0.0, 0.0]),
            positions=np.zeros((2, 3)),
            velocities=np.zeros((2, 3)),
            abs_psi=np.ones(2),
        )
    with pytest.raises(ConfigError):
        TrajectoryRecord(
            times=np.array([0.0, 1.0]),
            positions=np.zeros((3, 3)),
            velocities=np.zeros((2, 3)),
            abs_psi=np.ones(2),
        )


def test_snapshot_roundtrip(tmp_path, rng):
    g = Grid3(points=(9, 10, 11), extents=(1.0, 1.0, 1.0), boundary="periodic")
    vals = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    f = ComplexField(grid=g, values=vals)
    path = tmp_path / "snap.fld"
    write_snapshot(path, f, time=0.375)
    back, t = read_snapshot(path)
    assert t == 0.375
    np.testing.assert_array_equal(back, vals)


def test_snapshot_header_layout(tmp_path):
    g = Grid3(points=(8, 9, 10), extents=(1.0, 1.0, 1.0), boundary="periodic")
    f = ComplexField(grid=g, values=np.zeros(g.shape, dtype=complex))
    path = tmp_path / "snap.fld"
    write_snapshot(path, f, time=2.5)
    raw = path.read_bytes()
    assert raw[:6] == b"PWFLD1"
    nx, ny, nz = struct.unpack_from("<3I", raw, 6)
    assert (nx, ny, nz) == (8, 9, 10)
    (t,) = struct.unpack_from("<d", raw, 18)
    assert t == 2.5
    assert raw[26:32] == b"\x00" * 6
    assert len(raw) == 32 + 8 * 9 * 10 * 16


def test_snapshot_x_fastest_ordering(tmp_path):
    g = Grid3(points=(8, 8, 8), extents=(1.0, 1.0, 1.0), boundary="periodic")
    vals = np.zeros(g.shape, dtype=complex)
    vals[3, 0, 0] = 1.0 + 2.0j  # third node along x: early in the stream
    vals[0, 0, 3] = 5.0  # third node along z: a whole plane later
    f = ComplexField(grid=g, values=vals)
    path = tmp_path / "snap.fld"
    write_snapshot(path, f, time=0.0)
    body = np.frombuffer(path.read_bytes()[32:], dtype="<f8")
    assert body[2 * 3] == 1.0 and body[2 * 3 + 1] == 2.0
    assert body[2 * (3 * 8 * 8)] == 5.0


def test_snapshot_bad_magic(tmp_path):
    path = tmp_path / "junk.fld"
    path.write_bytes(b"NOTFLD" + b"\x00" * 60)
    with pytest.raises(ConfigError):
        read_snapshot(path)


def test_config_hash_order_independent():
    a = [("grid.points", "16 16 16"), ("physics.mass", "1.0")]
    b = list(reversed(a))
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash([("grid.points", "16 16 17"), a[1]])
