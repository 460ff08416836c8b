"""Initial-condition builders shared by the solvers, tests, and the CLI.

All builders return fields with exactly zero Dirichlet boundaries and, where
a normalisation is stated, unit L2 norm on the grid.
"""

from __future__ import annotations

import numpy as np

from .core import ComplexField, ConfigError, Grid3, zero_dirichlet_boundary


def _finalize(grid: Grid3, values: np.ndarray, normalize: bool) -> ComplexField:
    vals = np.asarray(values, dtype=np.complex128).copy()
    if grid.boundary == "dirichlet":
        zero_dirichlet_boundary(vals)
    if normalize:
        norm = np.sqrt(np.sum(np.abs(vals) ** 2) * grid.cell_volume)
        if norm == 0:
            raise ConfigError("cannot normalise an identically zero field")
        vals /= norm
    return ComplexField(grid=grid, values=vals)


def box_mode(grid: Grid3, mode=(1, 1, 1), normalize: bool = True) -> ComplexField:
    """Dirichlet box eigenmode prod_i sin(n_i pi x_i / L_i)."""
    if grid.boundary != "dirichlet":
        raise ConfigError("box modes need Dirichlet boundaries")
    X, Y, Z = grid.meshgrid()
    Lx, Ly, Lz = grid.extents
    nx, ny, nz = mode
    vals = (
        np.sin(nx * np.pi * X / Lx)
        * np.sin(ny * np.pi * Y / Ly)
        * np.sin(nz * np.pi * Z / Lz)
    )
    return _finalize(grid, vals, normalize)


def two_mode(
    grid: Grid3,
    mode1=(1, 1, 1),
    mode2=(2, 1, 1),
    epsilon: float = 0.5,
    phase2: float = 0.0,
    normalize: bool = True,
) -> ComplexField:
    """Superposition mode1 + epsilon e^{i phase2} mode2 in a Dirichlet box."""
    f1 = box_mode(grid, mode1, normalize=False)
    f2 = box_mode(grid, mode2, normalize=False)
    vals = f1.values + epsilon * np.exp(1j * phase2) * f2.values
    return _finalize(grid, vals, normalize)


def plane_wave(grid: Grid3, mode=(1, 0, 0), amplitude: float = 1.0) -> ComplexField:
    """Periodic plane wave exp(i k.x) with k_i = 2 pi n_i / L_i."""
    if grid.boundary != "periodic":
        raise ConfigError("plane waves need periodic boundaries")
    X, Y, Z = grid.meshgrid()
    k = [2.0 * np.pi * n / L for n, L in zip(mode, grid.extents)]
    vals = amplitude * np.exp(1j * (k[0] * X + k[1] * Y + k[2] * Z))
    return _finalize(grid, vals, normalize=False)


def gaussian(
    grid: Grid3,
    center=None,
    width: float = 0.1,
    momentum=(0.0, 0.0, 0.0),
    normalize: bool = True,
) -> ComplexField:
    """Gaussian packet exp(-|q-q0|^2 / 4 s^2) exp(i k0.q); position spread s."""
    X, Y, Z = grid.meshgrid()
    if center is None:
        center = [0.5 * e for e in grid.extents]
    cx, cy, cz = center
    r2 = (X - cx) ** 2 + (Y - cy) ** 2 + (Z - cz) ** 2
    k0 = np.asarray(momentum, dtype=float)
    vals = np.exp(-r2 / (4.0 * width**2)) * np.exp(
        1j * (k0[0] * X + k0[1] * Y + k0[2] * Z)
    )
    return _finalize(grid, vals, normalize)


def uniform(grid: Grid3, amplitude: complex = 1.0) -> ComplexField:
    """Constant field (periodic grids only; a Dirichlet constant is not a field state)."""
    if grid.boundary != "periodic":
        raise ConfigError("uniform fields need periodic boundaries")
    vals = np.full(grid.shape, amplitude, dtype=np.complex128)
    return ComplexField(grid=grid, values=vals)


def cellwise_constant(
    grid: Grid3, cuts: tuple[int, int, int], amplitudes
) -> ComplexField:
    """Piecewise-constant interior field over a rectangular cell partition.

    Amplitudes are listed in C order over the cell lattice.  Useful for
    measurement experiments where each cell should evolve as a pure scalar
    mode of the decoupled flow.
    """
    from .measurement import make_partition  # local import to avoid a cycle

    part = make_partition(grid, cuts)
    amplitudes = list(amplitudes)
    if len(amplitudes) != len(part.cells):
        raise ConfigError(
            f"{len(part.cells)} cells but {len(amplitudes)} amplitudes supplied"
        )
    vals = np.zeros(grid.shape, dtype=np.complex128)
    for amp, cell in zip(amplitudes, part.cells):
        vals[cell.index] = amp
    return ComplexField(grid=grid, values=vals)


def build(grid: Grid3, name: str, **kwargs) -> ComplexField:
    """Build a preset by name; unknown names raise ConfigError."""
    builders = {
        "box_mode": box_mode,
        "two_mode": two_mode,
        "plane_wave": plane_wave,
        "gaussian": gaussian,
        "uniform": uniform,
        "cellwise_constant": cellwise_constant,
    }
    if name not in builders:
        raise ConfigError(f"unknown initial-state preset {name!r}")
    return builders[name](grid, **kwargs)
