"""Numerical laboratory for a phase-coupled Klein-Gordon pilot-wave system.

Subsystems:
  core         parameters, derived scales, grids, fields, particle states
  schrodinger  reference Bohmian process (spectral Cayley stepping)
  kleingordon  forced Klein-Gordon solver with sawtooth phase coupling
  greens       retarded-kernel diagnostics and error-kernel quadrature
  measurement  cell partitions and the energy-minimising collapse flow
  analysis     cross-solver metrics and convergence studies
  cli          batch front end (``pilotwave`` entry point)
"""

__version__ = "0.1.0"

from .core import (
    ComplexField,
    ConfigError,
    DerivedScales,
    Grid3,
    ParticleState,
    PhysicalParams,
    PilotwaveError,
    derive_scales,
    lorentz_gamma,
    sigma,
)

__all__ = [
    "ComplexField",
    "ConfigError",
    "DerivedScales",
    "Grid3",
    "ParticleState",
    "PhysicalParams",
    "PilotwaveError",
    "derive_scales",
    "lorentz_gamma",
    "sigma",
    "__version__",
]
