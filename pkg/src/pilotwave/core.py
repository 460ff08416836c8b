"""Physical parameters, derived scales, grids, and field/particle containers.

Everything here is immutable after construction and safe to share between
workers.  Units are free: the default nondimensionalisation used throughout
the test and config presets is hbar = m = 1, with the light speed c left as
the single knob that controls the non-relativistic limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

TWO_PI = 2.0 * math.pi

Potential = Callable[[np.ndarray], np.ndarray]


class PilotwaveError(Exception):
    """Base class for all package errors."""


class ConfigError(PilotwaveError):
    """Invalid parameters, grids, or run configuration."""


class CflError(ConfigError):
    """Requested time step violates the explicit stability bound."""


class SuperluminalError(PilotwaveError):
    """Particle speed reached or exceeded the light speed."""


class NearNodeError(PilotwaveError):
    """|psi| at the particle fell below the node-avoidance tolerance.

    Bohmian trajectories never reach the zero locus of the guiding wave, so
    a breach indicates numerical failure rather than physics; callers should
    halt and report rather than regularise.
    """

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} (t={time:.6g})")
        self.time = time


class DegenerateDensityError(PilotwaveError):
    """Sampling density is identically zero."""


class CouplingSingularityError(PilotwaveError):
    """Extracted wave amplitude at the particle too small for the coupling."""


class ResolutionError(PilotwaveError):
    """Requested radii/stencils are not resolved by the grid."""


class FlowFailureError(PilotwaveError):
    """Energy-minimising flow left its stability envelope."""


@dataclass(frozen=True)
class PhysicalParams:
    """Constants of the coupled particle-wave system.

    ``coupling_a`` and ``coupling_b`` define the sawtooth phase coupling
    sigma = a + b*theta on theta in (0, 2pi].  Opposite signs with
    |a| > 2pi |b| guarantee sigma/b < 0 for every theta, which is what makes
    velocity transients decay instead of grow.  ``coupling_b = 0`` is allowed
    and switches the particle-wave coupling off entirely.

    ``singular_density`` (energy/volume) sets the renormalised energy carried
    by the particle-centred wavepacket; it only matters during measurement.
    ``potential`` maps an (n, 3) array of positions to potential energies.
    """

    mass: float = 1.0
    light_speed: float = 1.0
    action_const: float = 1.0
    coupling_a: float = -4.0 * math.pi
    coupling_b: float = 1.0
    kappa: float = 1.0
    singular_density: float | None = None
    potential: Potential | None = None

    def __post_init__(self):
        if not (self.mass > 0 and self.light_speed > 0 and self.action_const > 0):
            raise ConfigError("mass, light_speed, and action_const must be positive")
        if self.kappa < 0:
            raise ConfigError("kappa must be nonnegative")
        if self.coupling_b == 0.0:
            if self.coupling_a == 0.0:
                raise ConfigError("coupling_a must be nonzero when coupling_b = 0")
        else:
            if self.coupling_a * self.coupling_b >= 0:
                raise ConfigError("coupling_a and coupling_b must have opposite signs")
            if abs(self.coupling_a) <= TWO_PI * abs(self.coupling_b):
                raise ConfigError("|coupling_a| must exceed 2*pi*|coupling_b|")
        if self.singular_density is None:
            # Renormalisation preset: singular rate omega_s equal to the
            # Compton frequency omega_c, i.e. rho_s = 4 m^2 c^2 k_c omega_c / hbar.
            object.__setattr__(self, "singular_density", self.rho_s_for_omega_ratio(1.0))
        if self.singular_density <= 0:
            raise ConfigError("singular_density must be positive")

    def rho_s_for_omega_ratio(self, ratio: float) -> float:
        """Singular density giving omega_s = ratio * omega_c."""
        m, c, hbar = self.mass, self.light_speed, self.action_const
        k_c = m * c / hbar
        omega_c = m * c**2 / hbar
        return ratio * 4.0 * m**2 * c**2 * k_c * omega_c / hbar


@dataclass(frozen=True)
class DerivedScales:
    """Compton scales and the singular-energy rate implied by the parameters."""

    omega_c: float
    k_c: float
    omega_s: float


def derive_scales(params: PhysicalParams) -> DerivedScales:
    """omega_c = m c^2/hbar, k_c = m c/hbar, omega_s = rho_s hbar/(4 m^2 c^2 k_c)."""
    m, c, hbar = params.mass, params.light_speed, params.action_const
    k_c = m * c / hbar
    omega_c = m * c**2 / hbar
    omega_s = params.singular_density * hbar / (4.0 * m**2 * c**2 * k_c)
    return DerivedScales(omega_c=omega_c, k_c=k_c, omega_s=omega_s)


def lorentz_gamma(velocity: np.ndarray, light_speed: float) -> float:
    """Lorentz factor (1 - |u|^2/c^2)^(-1/2); raises for |u| >= c."""
    u2 = float(np.dot(velocity, velocity))
    c2 = light_speed * light_speed
    if u2 >= c2:
        raise SuperluminalError(f"|u| = {math.sqrt(u2):.6g} >= c = {light_speed:.6g}")
    return 1.0 / math.sqrt(1.0 - u2 / c2)


def wrap_phase(theta: float) -> float:
    """Wrap any real phase into the half-open interval (0, 2pi]."""
    return theta - TWO_PI * math.ceil(theta / TWO_PI - 1.0)


def sigma(theta: float, params: PhysicalParams) -> float:
    """Sawtooth coupling a + b*theta with theta wrapped into (0, 2pi]."""
    return params.coupling_a + params.coupling_b * wrap_phase(theta)


def sigma_piecewise(theta: float) -> float:
    """Alternative piecewise sawtooth that flips the sign of sigma/b.

    Exploratory only: it periodically destabilises velocity transients and is
    excluded from every verification experiment.
    """
    t = wrap_phase(theta)
    return t - TWO_PI if t <= math.pi else t + TWO_PI


@dataclass(frozen=True)
class Grid3:
    """Uniform rectilinear 3-D grid over a box anchored at the origin.

    Dirichlet grids place nodes on the boundary (spacing = extent/(points-1));
    periodic grids cover [0, extent) (spacing = extent/points).
    """

    points: tuple[int, int, int]
    extents: tuple[float, float, float]
    boundary: str = "dirichlet"

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(int(n) for n in self.points))
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        if self.boundary not in ("dirichlet", "periodic"):
            raise ConfigError(f"unknown boundary condition {self.boundary!r}")
        if any(n < 8 for n in self.points):
            raise ConfigError("grids need at least 8 points per axis")
        if any(e <= 0 for e in self.extents):
            raise ConfigError("grid extents must be positive")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.points

    @property
    def spacing(self) -> tuple[float, float, float]:
        if self.boundary == "dirichlet":
            return tuple(e / (n - 1) for e, n in zip(self.extents, self.points))
        return tuple(e / n for e, n in zip(self.extents, self.points))

    @property
    def cell_volume(self) -> float:
        dx, dy, dz = self.spacing
        return dx * dy * dz

    @property
    def node_count(self) -> int:
        nx, ny, nz = self.points
        return nx * ny * nz

    def axis_coords(self, axis: int) -> np.ndarray:
        return np.arange(self.points[axis]) * self.spacing[axis]

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(
            self.axis_coords(0), self.axis_coords(1), self.axis_coords(2), indexing="ij"
        )

    def is_interior(self, position: np.ndarray, margin: float = 0.0) -> bool:
        """Strict interiority test; periodic grids accept any position."""
        if self.boundary == "periodic":
            return True
        pos = np.asarray(position, dtype=float)
        return bool(
            np.all(pos > margin) and np.all(pos < np.asarray(self.extents) - margin)
        )

    def interior_slices(self) -> tuple[slice, slice, slice]:
        if self.boundary == "dirichlet":
            return (slice(1, -1), slice(1, -1), slice(1, -1))
        return (slice(None), slice(None), slice(None))

    def interior_node_count(self) -> int:
        if self.boundary == "dirichlet":
            return int(np.prod([n - 2 for n in self.points]))
        return self.node_count


def boundary_mask(grid: Grid3) -> np.ndarray:
    """Boolean mask of boundary nodes (all False on periodic grids)."""
    mask = np.zeros(grid.shape, dtype=bool)
    if grid.boundary == "dirichlet":
        mask[0, :, :] = mask[-1, :, :] = True
        mask[:, 0, :] = mask[:, -1, :] = True
        mask[:, :, 0] = mask[:, :, -1] = True
    return mask


@dataclass(frozen=True)
class ComplexField:
    """Complex scalar sampled on every node of a grid.

    Dirichlet fields must vanish exactly on boundary nodes.  The value array
    is copied and frozen so instances can be shared without defensive copies.
    """

    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128, copy=True)
        if vals.shape != self.grid.shape:
            raise ConfigError(
                f"field shape {vals.shape} does not match grid {self.grid.shape}"
            )
        if self.grid.boundary == "dirichlet":
            edge = vals[boundary_mask(self.grid)]
            if edge.size and np.max(np.abs(edge)) != 0.0:
                raise ConfigError("Dirichlet field has nonzero boundary values")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def norm_l2(self) -> float:
        """Grid-sum L2 norm sqrt(sum |psi|^2 dV)."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def zero_dirichlet_boundary(values: np.ndarray) -> np.ndarray:
    """Force exact zeros on the boundary of an array (in place, returned)."""
    values[0, :, :] = values[-1, :, :] = 0.0
    values[:, 0, :] = values[:, -1, :] = 0.0
    values[:, :, 0] = values[:, :, -1] = 0.0
    return values


@dataclass(frozen=True)
class ParticleState:
    """Point-particle position, velocity, and Lorentz factor."""

    position: np.ndarray
    velocity: np.ndarray
    gamma: float

    def __post_init__(self):
        pos = np.array(self.position, dtype=float, copy=True)
        vel = np.array(self.velocity, dtype=float, copy=True)
        if pos.shape != (3,) or vel.shape != (3,):
            raise ConfigError("particle position and velocity must be 3-vectors")
        pos.flags.writeable = False
        vel.flags.writeable = False
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)

    @classmethod
    def make(
        cls,
        position,
        velocity,
        light_speed: float,
        grid: Grid3 | None = None,
    ) -> "ParticleState":
        """Construct with a consistent Lorentz factor; validates |u| < c."""
        vel = np.asarray(velocity, dtype=float)
        gamma = lorentz_gamma(vel, light_speed)
        state = cls(position=np.asarray(position, dtype=float), velocity=vel, gamma=gamma)
        if grid is not None and not grid.is_interior(state.position):
            raise ConfigError(f"particle position {state.position} not interior to grid")
        return state

    def check_consistent(self, light_speed: float, rtol: float = 1e-12) -> None:
        gamma = lorentz_gamma(self.velocity, light_speed)
        if abs(gamma - self.gamma) > rtol * gamma:
            raise ConfigError("stored Lorentz factor inconsistent with velocity")
