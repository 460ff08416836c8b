"""Forced Klein-Gordon field coupled to a relativistic particle by wave phase.

The raw solver evolves the full field phi (continuous part plus the
particle-centred wavepacket) with an explicit symplectic leapfrog.  The
distributional source at the particle is represented by a compact mollifier
of radius ~2 grid spacings, and the continuous component at the particle is
recovered each step, either by

  * ``subtract``  - removing the exact static response of the discrete
    Laplacian to the current mollified source (a spectral Poisson solve),
    then reading the remainder at the particle; or
  * ``spherical`` - the quadrature/extrapolation extraction implemented by
    :func:`continuous_component`.

``subtract`` is the default: its error is set by the slow time dependence of
the source, so it shrinks with U/c, while the spherical route carries a
radius-squared bias tied to the wavelength of the continuous field that does
not shrink as the light speed grows.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ComplexField,
    ConfigError,
    CouplingSingularityError,
    CflError,
    Grid3,
    NearNodeError,
    ParticleState,
    PhysicalParams,
    ResolutionError,
    derive_scales,
    lorentz_gamma,
    sigma,
    wrap_phase,
)
from .fields import (
    SpectralOps,
    gradient_arrays,
    interpolate,
    local_value_and_gradient,
    mollifier_kernel,
    stencil_laplacian,
)
from .schrodinger import NODE_TOLERANCE, TrajectoryRecord

# 12 unit vectors at icosahedron vertices: antipodal and icosahedrally
# symmetric, so spherical averages annihilate odd terms and the l = 2, 4
# harmonics; quadrature error enters at l = 6.
_PHI = (1.0 + math.sqrt(5.0)) / 2.0
_ICO = []
for a, b in ((0, 1), (1, 2), (2, 0)):
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            v = [0.0, 0.0, 0.0]
            v[a] = s1
            v[b] = s2 * _PHI
            _ICO.append(v)
ICOSAHEDRON_DIRECTIONS = np.asarray(_ICO) / math.sqrt(1.0 + _PHI**2)


@dataclass(frozen=True)
class WavepacketDescriptor:
    """Analytic particle-centred wavepacket: amplitude reference and center.

    The wavepacket is -b e^{-i omega_c t} / (8 pi i k_c psi*(q_p) |q - q_p|)
    with ``amplitude_ref`` holding the psi*(q_p) snapshot.
    """

    amplitude_ref: complex
    center: np.ndarray

    def __post_init__(self):
        if self.amplitude_ref == 0:
            raise ConfigError("wavepacket amplitude reference must be nonzero")
        center = np.array(self.center, dtype=float, copy=True)
        center.flags.writeable = False
        object.__setattr__(self, "center", center)


@dataclass(frozen=True)
class PilotWaveState:
    """Continuous field, wavepacket descriptor, particle, and clock."""

    psi: ComplexField
    wavepacket: WavepacketDescriptor
    particle: ParticleState
    time: float


@dataclass(frozen=True)
class RawFieldState:
    """Unsplit field state (phi, d_t phi) for the leapfrog solver."""

    phi: ComplexField
    phi_dot: ComplexField
    particle: ParticleState
    time: float = 0.0

    def __post_init__(self):
        if self.phi.grid is not self.phi_dot.grid and self.phi.grid != self.phi_dot.grid:
            raise ConfigError("phi and phi_dot must share one grid")


def cfl_bound(grid: Grid3, light_speed: float) -> float:
    """Largest stable leapfrog step dt = dx_min / (c sqrt(3))."""
    return min(grid.spacing) / (light_speed * math.sqrt(3.0))


def mass_term(grid: Grid3, params: PhysicalParams) -> np.ndarray | float:
    """(k_c + V/(hbar c))^2, scalar when the potential is absent."""
    scales = derive_scales(params)
    if params.potential is None:
        return scales.k_c**2
    X, Y, Z = grid.meshgrid()
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=-1)
    v = np.asarray(params.potential(pts), dtype=float).reshape(grid.shape)
    return (scales.k_c + v / (params.action_const * params.light_speed)) ** 2


def step_klein_gordon(
    state: RawFieldState,
    source: ComplexField | np.ndarray | None,
    dt: float,
    params: PhysicalParams,
    source_next: ComplexField | np.ndarray | None = None,
    laplacian: str = "stencil",
) -> RawFieldState:
    """One kick-drift-kick leapfrog step of (box + (k_c + V/hbar c)^2) phi = S.

    ``source`` is used for the opening kick and ``source_next`` (defaulting to
    ``source``) for the closing kick.  dt must respect the CFL bound.
    """
    grid = state.phi.grid
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if dt > cfl_bound(grid, params.light_speed) * (1 + 1e-12):
        raise CflError(
            f"dt = {dt:.3e} exceeds the CFL bound {cfl_bound(grid, params.light_speed):.3e}"
        )
    solver = KleinGordonSolver(grid, params, laplacian=laplacian)
    s0 = source.values if isinstance(source, ComplexField) else source
    s1 = source_next.values if isinstance(source_next, ComplexField) else source_next
    phi, phi_dot = solver.leapfrog(
        np.array(state.phi.values), np.array(state.phi_dot.values), s0, dt, s1
    )
    return RawFieldState(
        phi=ComplexField(grid=grid, values=phi),
        phi_dot=ComplexField(grid=grid, values=phi_dot),
        particle=state.particle,
        time=state.time + dt,
    )


class KleinGordonSolver:
    """Leapfrog stepping and energy bookkeeping for the forced wave equation."""

    def __init__(self, grid: Grid3, params: PhysicalParams, laplacian: str = "stencil"):
        if laplacian not in ("stencil", "spectral"):
            raise ConfigError(f"unknown laplacian mode {laplacian!r}")
        self.grid = grid
        self.params = params
        self.scales = derive_scales(params)
        self.laplacian_mode = laplacian
        self.mass2 = mass_term(grid, params)
        self._ops = SpectralOps(grid) if laplacian == "spectral" else None

    def apply_laplacian(self, values: np.ndarray) -> np.ndarray:
        if self.laplacian_mode == "spectral":
            return self._ops.apply_laplacian(values, exact=True)
        return stencil_laplacian(values, self.grid)

    def acceleration(self, values: np.ndarray, source: np.ndarray | None) -> np.ndarray:
        c2 = self.params.light_speed**2
        acc = self.apply_laplacian(values)
        acc -= self.mass2 * values
        if source is not None:
            acc = acc + source
        acc *= c2
        if self.grid.boundary == "dirichlet":
            acc[0, :, :] = acc[-1, :, :] = 0.0
            acc[:, 0, :] = acc[:, -1, :] = 0.0
            acc[:, :, 0] = acc[:, :, -1] = 0.0
        return acc

    def leapfrog(self, phi, phi_dot, source, dt, source_next=None):
        """Kick-drift-kick update; arrays are modified and returned."""
        if source_next is None:
            source_next = source
        phi_dot += 0.5 * dt * self.acceleration(phi, source)
        phi += dt * phi_dot
        phi_dot += 0.5 * dt * self.acceleration(phi, source_next)
        return phi, phi_dot

    def energy(self, phi: np.ndarray, phi_dot: np.ndarray) -> float:
        """Discrete field energy m k_c |d_t phi|^2 + m c^2 k_c (|grad phi|^2 + m2 |phi|^2).

        The gradient term uses forward-difference links (the quadratic form of
        the 7-point stencil) or the spectral quadratic form, matching the
        operator that actually advances the field, which is what the leapfrog
        conserves up to its bounded O(dt^2) wobble.
        """
        m, c = self.params.mass, self.params.light_speed
        k_c = self.scales.k_c
        dV = self.grid.cell_volume
        kinetic = m * k_c * np.sum(np.abs(phi_dot) ** 2) * dV
        massish = m * c**2 * k_c * np.sum(self.mass2 * np.abs(phi) ** 2) * dV
        if self.laplacian_mode == "spectral":
            coeffs = self._ops.forward(phi)
            grad = m * c**2 * k_c * np.sum(-self._ops.eigs_exact * np.abs(coeffs) ** 2) * dV
        else:
            grad = 0.0
            for axis in range(3):
                h = self.grid.spacing[axis]
                diff = np.diff(phi, axis=axis) / h
                grad += np.sum(np.abs(diff) ** 2)
                if self.grid.boundary == "periodic":
                    lead = [slice(None)] * 3
                    tail = [slice(None)] * 3
                    lead[axis] = slice(0, 1)
                    tail[axis] = slice(-1, None)
                    wrap = (phi[tuple(lead)] - phi[tuple(tail)]) / h
                    grad += np.sum(np.abs(wrap) ** 2)
            grad *= m * c**2 * k_c * dV
        return float(kinetic + massish + grad)


def continuous_component(
    phi: ComplexField | np.ndarray,
    position,
    radii,
    grid: Grid3 | None = None,
) -> complex:
    """Continuous part of a field with a 1/r singularity at ``position``.

    Evaluates the spherical average of d_r(r phi) over an icosahedral design
    at each radius (the radial derivative by a centred difference at
    +-0.3 r), then extrapolates linearly in r to r -> 0.  For
    phi = phi1 + a/r the 1/r part drops out exactly in the continuum and the
    result is phi1(position) + O(r_max^2).
    """
    if isinstance(phi, ComplexField):
        grid = phi.grid
        values = phi.values
    else:
        if grid is None:
            raise ConfigError("grid required when passing a bare array")
        values = phi
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if radii.size == 0 or np.any(radii <= 0):
        raise ConfigError("radii must be positive")
    hmax = max(grid.spacing)
    if np.min(radii) < 2.0 * hmax:
        raise ResolutionError(
            f"smallest radius {np.min(radii):.3g} under-resolved (< 2 spacings)"
        )
    pos = np.asarray(position, dtype=float)
    reach = float(np.max(radii)) * 1.3
    if grid.boundary == "dirichlet" and not grid.is_interior(pos, margin=reach):
        raise ResolutionError("sampling spheres leave the domain")

    derivs = np.empty(radii.size, dtype=complex)
    for i, r in enumerate(radii):
        h = 0.3 * r
        means = []
        for rho in (r - h, r + h):
            pts = pos[None, :] + rho * ICOSAHEDRON_DIRECTIONS
            means.append(np.mean(interpolate(values, grid, pts)))
        g_lo = (r - h) * means[0]
        g_hi = (r + h) * means[1]
        derivs[i] = (g_hi - g_lo) / (2.0 * h)
    if radii.size == 1:
        return complex(derivs[0])
    # linear extrapolation to r = 0: intercept of the least-squares line
    coeffs = np.polyfit(radii, derivs, 1)
    return complex(coeffs[-1])


def delta_source(
    phi_bar: complex,
    position,
    params: PhysicalParams,
    gamma: float,
    grid: Grid3,
    width: float | None = None,
) -> ComplexField:
    """Mollified point source -delta^3(q - q_p) b / (gamma 2 i k_c phi_bar*).

    The kernel is a compact polynomial bump of the given radius (default two
    grid spacings) whose grid sum integrates to exactly one.
    """
    scales = derive_scales(params)
    if abs(phi_bar) < 1e-300:
        raise CouplingSingularityError("phi_bar vanished; coupling prefactor undefined")
    if width is None:
        width = 2.0 * min(grid.spacing)
    kernel = mollifier_kernel(grid, np.asarray(position, dtype=float), width)
    prefactor = -params.coupling_b / (gamma * 2.0j * scales.k_c * np.conj(phi_bar))
    return ComplexField(grid=grid, values=prefactor * kernel)


def particle_force(
    psi: ComplexField,
    position,
    grads: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Phase gradient Im(grad psi / psi) at the particle.

    Operates on the continuous field, so the symmetric singular part never
    contributes; shares its discretisation (centered differences plus
    trilinear interpolation) with the Bohmian guidance law.
    """
    grid = psi.grid
    if grads is None:
        grads = gradient_arrays(psi.values, grid)
    from .fields import log_gradient_at

    ratio = log_gradient_at(psi.values, grads, grid, position, NODE_TOLERANCE)
    return np.imag(ratio[0])


def step_particle(
    particle: ParticleState,
    grad_theta: np.ndarray,
    theta: float,
    params: PhysicalParams,
    dt: float,
) -> ParticleState:
    """Advance the particle under u - (sigma/(b omega_c)) du/dt = (hbar/m) grad theta.

    Exponential (integrating-factor) update, exact for frozen coefficients:
    with lambda = -b omega_c / sigma(theta) > 0 the velocity relaxes toward
    the guidance value at rate lambda; the sawtooth slope is taken as b
    everywhere, with no impulse at the wrap.  Position advances with the
    mid-step velocity.  With b = 0 the coupling is off and the velocity is
    constant.
    """
    scales = derive_scales(params)
    if dt > 0.1 / scales.omega_c * (1 + 1e-9):
        raise ConfigError("dt must resolve the Compton-rate damping (dt <= 0.1/omega_c)")
    v_target = (params.action_const / params.mass) * np.asarray(grad_theta, dtype=float)
    u = particle.velocity
    if params.coupling_b == 0.0:
        u_new = u
        u_mid = u
    else:
        s = sigma(theta, params)
        rate = -params.coupling_b * scales.omega_c / s
        if rate <= 0:
            raise ConfigError("sigma/b >= 0: coupling does not damp transients")
        decay_full = math.exp(-rate * dt)
        decay_half = math.exp(-0.5 * rate * dt)
        u_new = v_target + (u - v_target) * decay_full
        u_mid = v_target + (u - v_target) * decay_half
    position = particle.position + dt * u_mid
    return ParticleState.make(position, u_new, params.light_speed)


@dataclass
class PilotWaveConfig:
    """Run configuration for the coupled solver."""

    grid: Grid3
    params: PhysicalParams
    psi0: ComplexField
    position: np.ndarray
    velocity: np.ndarray | str = "auto"  # "auto" = guidance velocity of psi0
    velocity_scale: float = 1.0
    duration: float = 1.0
    dt: float | None = None
    cfl_safety: float = 0.5
    compton_fraction: float = 0.1
    laplacian: str = "stencil"
    extraction: str = "subtract"  # or "spherical"
    radii_dx: tuple[float, ...] = (3.0, 4.0, 5.0)
    mollifier_width_dx: float = 2.0
    avg_window: int = 3
    record_every: int = 1
    snapshot_every: int = 0  # steps; 0 disables periodic snapshots
    snapshot_times: tuple[float, ...] = ()
    alternate_sigma: bool = False  # exploratory piecewise sawtooth


@dataclass
class PilotWaveResult:
    trajectory: TrajectoryRecord
    snapshots: list[tuple[float, ComplexField]]
    final_raw: RawFieldState
    final_state: PilotWaveState
    diagnostics: dict


class PilotWaveSolver:
    """Co-evolves the forced field and the phase-coupled particle."""

    def __init__(self, config: PilotWaveConfig):
        self.cfg = config
        self.grid = config.grid
        self.params = config.params
        self.scales = derive_scales(config.params)
        if self.grid.boundary != "dirichlet" and config.params.coupling_b != 0.0:
            raise ConfigError(
                "sourced runs need Dirichlet boundaries: the monopole source is "
                "resonant with the k = 0 mode of a periodic box"
            )
        self.field_solver = KleinGordonSolver(self.grid, self.params, config.laplacian)
        self.ops = SpectralOps(self.grid) if self.grid.boundary == "dirichlet" else None
        if config.extraction not in ("subtract", "spherical"):
            raise ConfigError(f"unknown extraction mode {config.extraction!r}")

        bound = cfl_bound(self.grid, self.params.light_speed)
        compton_dt = config.compton_fraction / self.scales.omega_c
        if config.dt is None:
            dt = min(config.cfl_safety * bound, compton_dt)
        else:
            dt = config.dt
            if dt > bound:
                raise CflError(f"dt = {dt:.3e} exceeds the CFL bound {bound:.3e}")
        n_steps = max(1, math.ceil(config.duration / dt))
        if config.snapshot_times:
            # enlarge the step count until every requested time is a multiple
            fractions = [t / config.duration for t in config.snapshot_times]
            for k in range(n_steps, 4 * n_steps + 64):
                if all(
                    abs(f * k - round(f * k)) < 1e-9 and 0 < round(f * k) <= k
                    for f in fractions
                ):
                    n_steps = k
                    break
            else:
                raise ConfigError(
                    "snapshot_times cannot be aligned with the step grid"
                )
        self.dt = config.duration / n_steps
        self.n_steps = n_steps
        # leapfrog carrier: the frequency at which a spatially flat mode of
        # the discrete system actually rotates; used to demodulate psi
        z = 0.5 * self.scales.omega_c * self.dt
        self.carrier_omega = 2.0 / self.dt * math.asin(min(z, 1.0))
        self.width = config.mollifier_width_dx * min(self.grid.spacing)
        self.radii = np.asarray(config.radii_dx, dtype=float) * min(self.grid.spacing)

    # -- extraction machinery ------------------------------------------------

    def _rebuild_wavepacket_basis(self, position: np.ndarray) -> None:
        """Kernel and exact static response of the discrete Laplacian at q_p.

        Rebuilt only when the particle has moved a meaningful fraction of a
        spacing since the last build; the stale-center error is O(delta/w)
        relative to the (already small) wavepacket amplitude.
        """
        if (
            getattr(self, "_basis_center", None) is not None
            and float(np.max(np.abs(position - self._basis_center)))
            <= 0.02 * min(self.grid.spacing)
        ):
            return
        from .fields import mollifier_block

        self.kernel_block, self.kernel_slices = mollifier_block(
            self.grid, position, self.width
        )
        self._basis_center = position.copy()
        if self.params.coupling_b == 0.0:
            self.u_static = np.zeros(self.grid.shape)
            return
        kernel_full = np.zeros(self.grid.shape)
        kernel_full[self.kernel_slices] = self.kernel_block
        stencil = self.field_solver.laplacian_mode == "stencil"
        self.u_static = self.ops.solve_poisson(kernel_full, stencil=stencil).real

    def _beta(self, phi_bar: complex, gamma: float) -> complex:
        """Wavepacket amplitude: phi_wav = beta * u_static with
        beta = -b / (gamma 2 i k_c conj(phi_bar)); the carrier oscillation is
        carried by phi_bar itself."""
        b = self.params.coupling_b
        if b == 0.0:
            return 0.0
        if abs(phi_bar) < NODE_TOLERANCE:
            raise CouplingSingularityError("extracted phi_bar vanished")
        return -b / (gamma * 2.0j * self.scales.k_c * np.conj(phi_bar))

    def _extract(self, phi: np.ndarray, position: np.ndarray, gamma: float,
                 phi_bar_guess: complex) -> complex:
        """Extract phi_bar at the current time (scalar fixed point)."""
        if self.cfg.extraction == "spherical" and self.params.coupling_b != 0.0:
            return continuous_component(phi, position, self.radii, grid=self.grid)
        tri_phi = complex(interpolate(phi, self.grid, position))
        if self.params.coupling_b == 0.0:
            return tri_phi
        tri_u = complex(interpolate(self.u_static, self.grid, position))
        phi_bar = phi_bar_guess
        for _ in range(4):
            phi_bar = tri_phi - self._beta(phi_bar, gamma) * tri_u
        return phi_bar

    # -- main loop -----------------------------------------------------------

    def run(self) -> PilotWaveResult:
        cfg = self.cfg
        grid, params, scales = self.grid, self.params, self.scales
        hbar, m = params.action_const, params.mass

        psi0 = cfg.psi0.values
        position = np.asarray(cfg.position, dtype=float)
        phi_bar0 = complex(interpolate(psi0, grid, position))
        if abs(phi_bar0) <= NODE_TOLERANCE * float(np.max(np.abs(psi0))):
            raise NearNodeError("initial particle placed on a node of psi", 0.0)

        val0, grad0 = local_value_and_gradient(psi0, grid, position)
        guidance0 = (hbar / m) * np.imag(grad0[0] / val0[0])
        if isinstance(cfg.velocity, str):
            if cfg.velocity != "auto":
                raise ConfigError(f"unknown velocity spec {cfg.velocity!r}")
            velocity = cfg.velocity_scale * guidance0
        else:
            velocity = cfg.velocity_scale * np.asarray(cfg.velocity, dtype=float)
        particle = ParticleState.make(position, velocity, params.light_speed, grid)

        self._rebuild_wavepacket_basis(position)
        beta0 = self._beta(phi_bar0, particle.gamma)
        phi = psi0 + beta0 * self.u_static
        # envelope-consistent start: d_t psi from its own equation of motion,
        # the wavepacket rotating rigidly at the Compton frequency
        psi_dot0 = (1j * hbar / (2.0 * m)) * self.field_solver.apply_laplacian(psi0)
        if params.potential is not None:
            v_arr = mass_term(grid, params)  # (k_c + V/hbar c)^2
            pot = (np.sqrt(v_arr) - scales.k_c) * hbar * params.light_speed
            psi_dot0 = psi_dot0 - (1j / hbar) * pot * psi0
        phi_dot = -1j * scales.omega_c * phi + psi_dot0

        dt = self.dt
        carrier = 1.0 + 0.0j  # e^{+i omega_tilde t}, advanced multiplicatively
        carrier_step = complex(np.exp(1j * self.carrier_omega * dt))
        envelopes = deque(maxlen=max(1, cfg.avg_window))
        envelopes.append(phi_bar0)  # t = 0: envelope equals phi_bar
        phi_bar_use = phi_bar0

        times = [0.0]
        positions = [particle.position.copy()]
        velocities = [particle.velocity.copy()]
        abs_psi = [abs(phi_bar0)]
        flags: list[str] = []

        snapshot_steps = {}
        if cfg.snapshot_every > 0:
            for s in range(cfg.snapshot_every, self.n_steps + 1, cfg.snapshot_every):
                snapshot_steps[s] = s * dt
        for t_req in cfg.snapshot_times:
            s = round(t_req / dt)
            if not (0 < s <= self.n_steps and abs(s * dt - t_req) < 1e-9 * max(1.0, t_req)):
                raise ConfigError(
                    f"snapshot time {t_req} is not a step multiple (dt = {dt:.6g})"
                )
            snapshot_steps[s] = t_req
        snapshots: list[tuple[float, ComplexField]] = []

        def take_snapshot(t, phi_arr, beta):
            # psi = (phi - wavepacket) e^{+i omega t}: multiply by the carrier
            recon = (phi_arr - beta * self.u_static) * carrier
            if grid.boundary == "dirichlet":
                recon = recon.copy()
                from .core import zero_dirichlet_boundary

                zero_dirichlet_boundary(recon)
            snapshots.append((t, ComplexField(grid=grid, values=recon)))

        max_abs0 = float(np.max(np.abs(phi)))
        c2 = params.light_speed**2
        beta_open = beta0
        # the linear part of the acceleration is shared by the closing kick of
        # one step and the opening kick of the next: one Laplacian per step
        lin = self.field_solver.acceleration(phi, None)

        def source_kick(weight: complex):
            if self.params.coupling_b != 0.0 and weight != 0.0:
                phi_dot[self.kernel_slices] += weight * self.kernel_block

        for step in range(1, self.n_steps + 1):
            t_new = step * dt
            phi_dot += 0.5 * dt * lin
            source_kick(0.5 * dt * c2 * beta_open)
            phi += dt * phi_dot
            carrier *= carrier_step
            if step % 512 == 0:
                carrier /= abs(carrier)

            phi_bar_raw = self._extract(phi, particle.position, particle.gamma, phi_bar_use)
            if abs(phi_bar_raw) <= NODE_TOLERANCE * max_abs0:
                raise NearNodeError("phi_bar fell to the node tolerance", t_new)
            envelopes.append(phi_bar_raw * carrier)
            phi_bar_use = complex(np.mean(np.asarray(envelopes)) * np.conj(carrier))

            beta_use = self._beta(phi_bar_use, particle.gamma)
            lin = self.field_solver.acceleration(phi, None)
            phi_dot += 0.5 * dt * lin
            source_kick(0.5 * dt * c2 * beta_use)

            # particle update from the continuous part, via a local window
            val_phi, grad_phi = local_value_and_gradient(phi, grid, particle.position)
            if self.params.coupling_b != 0.0:
                _, grad_u = local_value_and_gradient(self.u_static, grid, particle.position)
                gvec = grad_phi[0] - beta_use * grad_u[0]
            else:
                gvec = grad_phi[0]
            grad_theta = np.imag(gvec / phi_bar_use)
            theta = wrap_phase(float(np.angle(phi_bar_use)))
            if cfg.alternate_sigma:
                from .core import sigma_piecewise

                # exploratory coupling: sigma/b flips sign each half-period, so
                # the exponential factor alternately damps and amplifies
                s_val = sigma_piecewise(theta)
                rate = -params.coupling_b * scales.omega_c / s_val
                v_target = (hbar / m) * grad_theta
                u_new = v_target + (particle.velocity - v_target) * math.exp(-rate * dt)
                u_mid = v_target + (particle.velocity - v_target) * math.exp(-0.5 * rate * dt)
                particle = ParticleState.make(
                    particle.position + dt * u_mid, u_new, params.light_speed
                )
            else:
                particle = step_particle(particle, grad_theta, theta, params, dt)
            if grid.boundary == "dirichlet" and not grid.is_interior(particle.position):
                raise NearNodeError("particle left the domain", t_new)

            self._rebuild_wavepacket_basis(particle.position)
            beta_open = beta_use  # next opening kick: fresh beta, recentred kernel

            if step % cfg.record_every == 0 or step == self.n_steps:
                times.append(t_new)
                positions.append(particle.position.copy())
                velocities.append(particle.velocity.copy())
                abs_psi.append(abs(phi_bar_use))
            if step in snapshot_steps:
                take_snapshot(t_new, phi, beta_use)

        trajectory = TrajectoryRecord(
            times=np.asarray(times),
            positions=np.asarray(positions),
            velocities=np.asarray(velocities),
            abs_psi=np.asarray(abs_psi),
            flags=flags,
        )
        final_raw = RawFieldState(
            phi=ComplexField(grid=grid, values=phi),
            phi_dot=ComplexField(grid=grid, values=phi_dot),
            particle=particle,
            time=self.n_steps * dt,
        )
        recon = (phi - self._beta(phi_bar_use, particle.gamma) * self.u_static) * carrier
        if grid.boundary == "dirichlet":
            from .core import zero_dirichlet_boundary

            recon = zero_dirichlet_boundary(recon.copy())
        final_state = PilotWaveState(
            psi=ComplexField(grid=grid, values=recon),
            wavepacket=WavepacketDescriptor(
                amplitude_ref=np.conj(phi_bar_use * carrier), center=particle.position
            ),
            particle=particle,
            time=self.n_steps * dt,
        )
        diagnostics = {
            "dt": dt,
            "n_steps": self.n_steps,
            "cfl_bound": cfl_bound(grid, params.light_speed),
            "compton_bound": 0.1 / scales.omega_c,
            "carrier_omega": self.carrier_omega,
            "mollifier_width": self.width,
            "extraction": cfg.extraction,
            "laplacian": cfg.laplacian,
        }
        return PilotWaveResult(trajectory, snapshots, final_raw, final_state, diagnostics)


def run_pilotwave(config: PilotWaveConfig) -> tuple[TrajectoryRecord, list]:
    """Run the coupled solver; returns (trajectory, snapshot series)."""
    result = PilotWaveSolver(config).run()
    return result.trajectory, result.snapshots
