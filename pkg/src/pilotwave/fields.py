"""Grid field operations: gradients, spectral transforms, discrete inverses.

Gradient conventions
  * centered differences on interior nodes;
  * Dirichlet boundaries use the odd extension (consistent with sine modes);
  * periodic boundaries wrap.

Spectral transforms diagonalise both the exact (mode wavenumber squared) and
the 7-point stencil Laplacian: DST-I on the interior nodes of Dirichlet
grids, FFT on periodic grids.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .core import ComplexField, ConfigError, Grid3, NearNodeError
from .kernels import laplacian, trilinear


def gradient_arrays(values: np.ndarray, grid: Grid3) -> list[np.ndarray]:
    """Centered-difference gradient along each axis, full-grid arrays."""
    out = []
    for axis in range(3):
        h = grid.spacing[axis]
        g = np.empty_like(values)
        fwd = [slice(None)] * 3
        bwd = [slice(None)] * 3
        mid = [slice(None)] * 3
        fwd[axis] = slice(2, None)
        bwd[axis] = slice(None, -2)
        mid[axis] = slice(1, -1)
        g[tuple(mid)] = (values[tuple(fwd)] - values[tuple(bwd)]) / (2.0 * h)
        first = [slice(None)] * 3
        second = [slice(None)] * 3
        last = [slice(None)] * 3
        penult = [slice(None)] * 3
        first[axis] = 0
        second[axis] = 1
        last[axis] = -1
        penult[axis] = -2
        if grid.boundary == "dirichlet":
            # odd extension: f(-h) = -f(h) about a zero boundary node
            g[tuple(first)] = values[tuple(second)] / h
            g[tuple(last)] = -values[tuple(penult)] / h
        else:
            g[tuple(first)] = (values[tuple(second)] - values[tuple(last)]) / (2.0 * h)
            g[tuple(last)] = (values[tuple(first)] - values[tuple(penult)]) / (2.0 * h)
        out.append(g)
    return out


def interpolate(values: np.ndarray, grid: Grid3, pts) -> np.ndarray:
    """Trilinear interpolation at (n, 3) positions (or a single 3-vector)."""
    pts_arr = np.atleast_2d(np.asarray(pts, dtype=float))
    res = trilinear(values, pts_arr, grid.spacing, grid.boundary)
    return res[0] if np.asarray(pts).ndim == 1 else res


def stencil_laplacian(values: np.ndarray, grid: Grid3, out=None) -> np.ndarray:
    return laplacian(values, grid.spacing, grid.boundary, out=out)


def value_and_gradient_at(
    values: np.ndarray,
    grads: list[np.ndarray],
    grid: Grid3,
    pts,
) -> tuple[np.ndarray, np.ndarray]:
    """Interpolated field value and gradient vector at positions."""
    pts_arr = np.atleast_2d(np.asarray(pts, dtype=float))
    val = trilinear(values, pts_arr, grid.spacing, grid.boundary)
    grad = np.stack(
        [trilinear(g, pts_arr, grid.spacing, grid.boundary) for g in grads], axis=-1
    )
    return val, grad


def _window_indices(n: int, i0: np.ndarray, boundary: str):
    """4-wide index window [i0-1, i0+2] with BC handling.

    Returns (indices, signs): Dirichlet ghosts use the odd extension about the
    zero boundary node (value at -1 is -value at 1), periodic wraps.
    """
    offsets = np.arange(-1, 3)
    idx = i0[:, None] + offsets[None, :]
    if boundary == "periodic":
        return np.mod(idx, n), np.ones_like(idx, dtype=float)
    sign = np.ones(idx.shape, dtype=float)
    under = idx < 0
    over = idx > n - 1
    idx = np.where(under, -idx, idx)
    idx = np.where(over, 2 * (n - 1) - idx, idx)
    sign[under | over] = -1.0
    return idx, sign


def local_value_and_gradient(
    values: np.ndarray, grid: Grid3, pts
) -> tuple[np.ndarray, np.ndarray]:
    """Value and centered-difference gradient at positions via a 4^3 window.

    Bitwise-equivalent to building full gradient arrays and interpolating,
    but touches only 64 nodes per point; meant for one or a few particles.
    """
    pts_arr = np.atleast_2d(np.asarray(pts, dtype=float))
    n_pts = pts_arr.shape[0]
    shape = grid.shape
    spacing = grid.spacing
    q = pts_arr / np.asarray(spacing)
    if grid.boundary == "periodic":
        q = np.mod(q, shape)
        base = np.minimum(np.floor(q).astype(np.intp), np.asarray(shape) - 1)
    else:
        q = np.clip(q, 0.0, np.asarray(shape) - 1.0)
        base = np.minimum(np.floor(q).astype(np.intp), np.asarray(shape) - 2)
    frac = q - base

    windows = np.empty((n_pts, 4, 4, 4), dtype=values.dtype)
    signs_total = np.empty((n_pts, 4, 4, 4))
    for m in range(n_pts):
        ix, sx = _window_indices(shape[0], base[m : m + 1, 0], grid.boundary)
        iy, sy = _window_indices(shape[1], base[m : m + 1, 1], grid.boundary)
        iz, sz = _window_indices(shape[2], base[m : m + 1, 2], grid.boundary)
        w = values[np.ix_(ix[0], iy[0], iz[0])]
        s = sx[0][:, None, None] * sy[0][None, :, None] * sz[0][None, None, :]
        windows[m] = w
        signs_total[m] = s
    windows = windows * signs_total

    # corner gradients inside the window (window slots 1:3 hold the cell corners)
    core = windows[:, 1:3, 1:3, 1:3]
    gx = (windows[:, 2:4, 1:3, 1:3] - windows[:, 0:2, 1:3, 1:3]) / (2 * spacing[0])
    gy = (windows[:, 1:3, 2:4, 1:3] - windows[:, 1:3, 0:2, 1:3]) / (2 * spacing[1])
    gz = (windows[:, 1:3, 1:3, 2:4] - windows[:, 1:3, 1:3, 0:2]) / (2 * spacing[2])

    fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
    wx = np.stack([1 - fx, fx], axis=1)
    wy = np.stack([1 - fy, fy], axis=1)
    wz = np.stack([1 - fz, fz], axis=1)
    weights = wx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]
    val = np.sum(weights * core, axis=(1, 2, 3))
    grad = np.stack(
        [
            np.sum(weights * gx, axis=(1, 2, 3)),
            np.sum(weights * gy, axis=(1, 2, 3)),
            np.sum(weights * gz, axis=(1, 2, 3)),
        ],
        axis=-1,
    )
    return val, grad


def log_gradient_at(
    values: np.ndarray,
    grads: list[np.ndarray],
    grid: Grid3,
    pts,
    tol_fraction: float = 1e-8,
    max_abs: float | None = None,
    time: float | None = None,
) -> np.ndarray:
    """Im-ready ratio grad(psi)/psi at positions, guarding against nodes."""
    val, grad = value_and_gradient_at(values, grads, grid, pts)
    ceiling = max_abs if max_abs is not None else float(np.max(np.abs(values)))
    bad = np.abs(val) < tol_fraction * ceiling
    if np.any(bad):
        raise NearNodeError(
            f"|psi| below {tol_fraction:.1e} of max at {int(np.sum(bad))} sample(s)",
            time=time,
        )
    return grad / val[:, None]


class SpectralOps:
    """Diagonalising transforms for a grid plus Laplacian eigenvalues.

    ``eigs_exact`` holds -k^2 per mode (spectral differentiation);
    ``eigs_stencil`` holds the 7-point stencil symbol, used when an exact
    discrete inverse of the stencil operator is required.
    """

    def __init__(self, grid: Grid3):
        self.grid = grid
        self.boundary = grid.boundary
        kline_exact = []
        kline_stencil = []
        for axis in range(3):
            n = grid.points[axis]
            h = grid.spacing[axis]
            if grid.boundary == "dirichlet":
                L = grid.extents[axis]
                modes = np.arange(1, n - 1)
                k = np.pi * modes / L
                kline_exact.append(k**2)
                kline_stencil.append(2.0 * (1.0 - np.cos(k * h)) / h**2)
            else:
                k = 2.0 * np.pi * sfft.fftfreq(n, d=h)
                kline_exact.append(k**2)
                kline_stencil.append(2.0 * (1.0 - np.cos(k * h)) / h**2)
        self.eigs_exact = -(
            kline_exact[0][:, None, None]
            + kline_exact[1][None, :, None]
            + kline_exact[2][None, None, :]
        )
        self.eigs_stencil = -(
            kline_stencil[0][:, None, None]
            + kline_stencil[1][None, :, None]
            + kline_stencil[2][None, None, :]
        )

    def forward(self, values: np.ndarray) -> np.ndarray:
        if self.boundary == "dirichlet":
            interior = values[1:-1, 1:-1, 1:-1]
            return sfft.dstn(interior, type=1, norm="ortho", workers=-1)
        return sfft.fftn(values, norm="ortho", workers=-1)

    def backward(self, coeffs: np.ndarray) -> np.ndarray:
        if self.boundary == "dirichlet":
            out = np.zeros(self.grid.shape, dtype=np.complex128)
            out[1:-1, 1:-1, 1:-1] = sfft.idstn(coeffs, type=1, norm="ortho", workers=-1)
            return out
        return sfft.ifftn(coeffs, norm="ortho", workers=-1)

    def apply_laplacian(self, values: np.ndarray, exact: bool = True) -> np.ndarray:
        eigs = self.eigs_exact if exact else self.eigs_stencil
        return self.backward(eigs * self.forward(values))

    def solve_poisson(self, rhs: np.ndarray, stencil: bool = True) -> np.ndarray:
        """Solve -lap(u) = rhs with the chosen discrete operator.

        Only Dirichlet grids admit a solution for sources with nonzero mean.
        """
        if self.boundary != "dirichlet":
            raise ConfigError("discrete Poisson inverse requires Dirichlet boundaries")
        eigs = self.eigs_stencil if stencil else self.eigs_exact
        return self.backward(self.forward(rhs) / (-eigs))


def mollifier_block(
    grid: Grid3, center: np.ndarray, width: float
) -> tuple[np.ndarray, tuple[slice, slice, slice]]:
    """Compact unit-integral bump as (local block, slices into the grid)."""
    full = mollifier_kernel(grid, center, width)
    nz = np.nonzero(full)
    if len(nz[0]) == 0:
        raise ConfigError("mollifier support contains no grid nodes")
    sl = tuple(slice(int(ax.min()), int(ax.max()) + 1) for ax in nz)
    return full[sl].copy(), sl


def mollifier_kernel(grid: Grid3, center: np.ndarray, width: float) -> np.ndarray:
    """Compact polynomial bump of the given radius, unit grid-sum integral.

    eta(r) ~ (1 - (r/w)^2)^3 inside r < w, renormalised so that
    sum(eta) * dV = 1 exactly on this grid.
    """
    dx = min(grid.spacing)
    if width < dx:
        raise ConfigError("mollifier width must cover at least one grid spacing")
    lo = np.maximum(np.floor((np.asarray(center) - width) / grid.spacing).astype(int), 0)
    hi = np.minimum(
        np.ceil((np.asarray(center) + width) / grid.spacing).astype(int) + 1,
        np.asarray(grid.points),
    )
    out = np.zeros(grid.shape, dtype=float)
    ax = [grid.axis_coords(a)[lo[a] : hi[a]] for a in range(3)]
    X, Y, Z = np.meshgrid(*ax, indexing="ij")
    r2 = (X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2
    bump = np.clip(1.0 - r2 / width**2, 0.0, None) ** 3
    total = bump.sum() * grid.cell_volume
    if total <= 0:
        raise ConfigError("mollifier support contains no grid nodes")
    out[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = bump / total
    if grid.boundary == "dirichlet":
        out[0, :, :] = out[-1, :, :] = 0.0
        out[:, 0, :] = out[:, -1, :] = 0.0
        out[:, :, 0] = out[:, :, -1] = 0.0
        total = out.sum() * grid.cell_volume
        if total <= 0:
            raise ConfigError("mollifier truncated to nothing at the boundary")
        out /= total
    return out


def as_field(grid: Grid3, values: np.ndarray) -> ComplexField:
    return ComplexField(grid=grid, values=values)
