"""Kernel dispatch: compiled stencil extension with pure-numpy fallback.

The compiled module is preferred when it imported cleanly; setting the
environment variable ``PILOTWAVE_NO_EXT=1`` before import forces the numpy
path (used by the parity tests and the benchmark).
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - availability depends on the build
    if os.environ.get("PILOTWAVE_NO_EXT", "0") == "1":
        _ext = None
    else:
        from . import _stencil as _ext
except ImportError:  # pragma: no cover
    _ext = None

HAVE_EXT = _ext is not None


def _laplacian_dirichlet_np(f, out, ax, ay, az):
    out[...] = 0.0
    c = f[1:-1, 1:-1, 1:-1]
    out[1:-1, 1:-1, 1:-1] = (
        ax * (f[2:, 1:-1, 1:-1] + f[:-2, 1:-1, 1:-1])
        + ay * (f[1:-1, 2:, 1:-1] + f[1:-1, :-2, 1:-1])
        + az * (f[1:-1, 1:-1, 2:] + f[1:-1, 1:-1, :-2])
        - 2.0 * (ax + ay + az) * c
    )
    return out


def _laplacian_periodic_np(f, out, ax, ay, az):
    out[...] = (
        ax * (np.roll(f, -1, 0) + np.roll(f, 1, 0))
        + ay * (np.roll(f, -1, 1) + np.roll(f, 1, 1))
        + az * (np.roll(f, -1, 2) + np.roll(f, 1, 2))
        - 2.0 * (ax + ay + az) * f
    )
    return out


def laplacian(f: np.ndarray, spacing, boundary: str, out: np.ndarray | None = None):
    """7-point Laplacian of a complex field; zero on Dirichlet boundary nodes."""
    if out is None:
        out = np.empty_like(f)
    ax, ay, az = (1.0 / h**2 for h in spacing)
    if boundary == "dirichlet":
        if _ext is not None:
            _ext.laplacian_dirichlet(f, out, ax, ay, az)
        else:
            _laplacian_dirichlet_np(f, out, ax, ay, az)
    else:
        if _ext is not None:
            _ext.laplacian_periodic(f, out, ax, ay, az)
        else:
            _laplacian_periodic_np(f, out, ax, ay, az)
    return out


def _trilinear_np(f, pts, spacing, periodic):
    nx, ny, nz = f.shape
    q = np.asarray(pts, dtype=float) / np.asarray(spacing)
    if periodic:
        q = np.mod(q, [nx, ny, nz])
        base = np.floor(q).astype(np.intp)
        base[:, 0] %= nx
        base[:, 1] %= ny
        base[:, 2] %= nz
        nxt = (base + 1) % [nx, ny, nz]
    else:
        q = np.clip(q, 0.0, [nx - 1, ny - 1, nz - 1])
        base = np.minimum(np.floor(q).astype(np.intp), [nx - 2, ny - 2, nz - 2])
        nxt = base + 1
    frac = q - base
    gx, gy, gz = (1 - frac[:, 0]), (1 - frac[:, 1]), (1 - frac[:, 2])
    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    i0, j0, k0 = base[:, 0], base[:, 1], base[:, 2]
    i1, j1, k1 = nxt[:, 0], nxt[:, 1], nxt[:, 2]
    return (
        gx * gy * gz * f[i0, j0, k0]
        + fx * gy * gz * f[i1, j0, k0]
        + gx * fy * gz * f[i0, j1, k0]
        + gx * gy * fz * f[i0, j0, k1]
        + fx * fy * gz * f[i1, j1, k0]
        + fx * gy * fz * f[i1, j0, k1]
        + gx * fy * fz * f[i0, j1, k1]
        + fx * fy * fz * f[i1, j1, k1]
    )


def trilinear(f: np.ndarray, pts: np.ndarray, spacing, boundary: str) -> np.ndarray:
    """Trilinear interpolation of a complex field at (n, 3) positions."""
    pts = np.ascontiguousarray(np.atleast_2d(pts), dtype=float)
    periodic = boundary == "periodic"
    if _ext is not None:
        out = np.empty(pts.shape[0], dtype=np.complex128)
        fc = np.ascontiguousarray(f, dtype=np.complex128)
        _ext.trilinear_gather(fc, pts, spacing[0], spacing[1], spacing[2], periodic, out)
        return out
    return np.asarray(_trilinear_np(np.asarray(f, dtype=np.complex128), pts, spacing, periodic))


def force_numpy_reference():
    """Expose the numpy implementations directly (for parity tests/benchmarks)."""
    return {
        "laplacian_dirichlet": _laplacian_dirichlet_np,
        "laplacian_periodic": _laplacian_periodic_np,
        "trilinear": _trilinear_np,
    }
