"""On-disk formats: trajectory/report/collapse CSVs, field snapshots, manifests.

Snapshot binary layout (".fld", little-endian, 32-byte header):

    offset  size  content
    0       6     magic b"PWFLD1"
    6       12    grid points nx, ny, nz as three uint32
    18      8     sample time as float64
    26      6     zero padding
    32      --    node values as float64 pairs (re, im), x-fastest order
                  (ix varies fastest, then iy, then iz)

Grid spacing and boundary live in the run manifest, not the header.
All floats in CSVs are written with ``repr`` (shortest round-trip form), so
re-running a deterministic command reproduces files byte-for-byte.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .core import ComplexField, ConfigError, Grid3
from .schrodinger import TrajectoryRecord

SNAPSHOT_MAGIC = b"PWFLD1"
_HEADER = struct.Struct("<6s3Id6x")

TRAJECTORY_COLUMNS = ["t", "qx", "qy", "qz", "ux", "uy", "uz", "abs_psi_at_p"]


def _fmt(x) -> str:
    return repr(float(x))


def write_trajectory_csv(path, record: TrajectoryRecord) -> None:
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for i in range(len(record.times)):
        row = [
            record.times[i],
            *record.positions[i],
            *record.velocities[i],
            record.abs_psi[i],
        ]
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path) -> TrajectoryRecord:
    text = Path(path).read_text().strip().splitlines()
    if not text or text[0].split(",") != TRAJECTORY_COLUMNS:
        raise ConfigError(f"{path}: not a trajectory CSV")
    data = np.array([[float(x) for x in line.split(",")] for line in text[1:]])
    return TrajectoryRecord(
        times=data[:, 0],
        positions=data[:, 1:4],
        velocities=data[:, 4:7],
        abs_psi=data[:, 7],
    )


def write_snapshot(path, field: ComplexField, time: float) -> None:
    nx, ny, nz = field.grid.points
    header = _HEADER.pack(SNAPSHOT_MAGIC, nx, ny, nz, float(time))
    # x-fastest: transpose (ix,iy,iz) -> (iz,iy,ix) and C-ravel
    vals = np.ascontiguousarray(field.values.transpose(2, 1, 0))
    body = np.empty(vals.size * 2, dtype="<f8")
    body[0::2] = vals.real.ravel()
    body[1::2] = vals.imag.ravel()
    with open(path, "wb") as fh:
        fh.write(header)
        body.tofile(fh)


def read_snapshot(path) -> tuple[np.ndarray, float]:
    """Returns (values array with shape (nx, ny, nz), sample time)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ConfigError(f"{path}: truncated snapshot header")
    magic, nx, ny, nz, time = _HEADER.unpack_from(raw, 0)
    if magic != SNAPSHOT_MAGIC:
        raise ConfigError(f"{path}: bad snapshot magic {magic!r}")
    expect = nx * ny * nz * 16
    body = raw[_HEADER.size :]
    if len(body) != expect:
        raise ConfigError(f"{path}: snapshot body has {len(body)} bytes, need {expect}")
    flat = np.frombuffer(body, dtype="<f8")
    vals = (flat[0::2] + 1j * flat[1::2]).reshape(nz, ny, nx).transpose(2, 1, 0)
    return vals.copy(), float(time)


def snapshot_name(step: int) -> str:
    return f"{step:06d}.fld"


def write_report_csv(path, report) -> None:
    """Convergence sweep CSV: one row per c, fitted order repeated on each."""
    lines = ["c,U,sup_dev,l2_dev,field_dev,fitted_order"]
    for i in range(len(report.c_values)):
        lines.append(
            ",".join(
                _fmt(x)
                for x in (
                    report.c_values[i],
                    report.velocity_scales[i],
                    report.sup_devs[i],
                    report.l2_devs[i],
                    report.field_devs[i],
                    report.fitted_order,
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_collapse_csv(path, outcome) -> None:
    """Per-step collapse record: time, each cell's L2 norm, each cell's energy."""
    n_cells = outcome.norm_history.shape[1]
    header = (
        ["t"]
        + [f"norm_cell_{i}" for i in range(n_cells)]
        + [f"energy_cell_{i}" for i in range(n_cells)]
    )
    lines = [",".join(header)]
    for k in range(len(outcome.times)):
        row = [outcome.times[k], *outcome.norm_history[k], *outcome.energy_history[k]]
        lines.append(",".join(_fmt(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_kernel_csv(path, samples) -> None:
    lines = ["r_prime,re_K,im_K,abs_K,truncation,err_estimate"]
    for s in samples:
        lines.append(
            ",".join(
                _fmt(x)
                for x in (
                    s.r_prime,
                    s.value.real,
                    s.value.imag,
                    abs(s.value),
                    s.truncation,
                    s.abs_error_estimate,
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def config_hash(pairs: list[tuple[str, str]]) -> str:
    """Stable hash of (key, value) pairs: sorted, so key order never matters."""
    blob = "\n".join(f"{k}={v}" for k, v in sorted(pairs))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_manifest(path, entries: dict, wall_time: float | None = None) -> None:
    """Run manifest: key = value lines; wall time goes last so that all other
    content is byte-reproducible for identical configs."""
    lines = [f"{k} = {v}" for k, v in entries.items()]
    if wall_time is not None:
        lines.append(f"wall_time_s = {wall_time:.3f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out
