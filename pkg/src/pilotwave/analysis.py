"""Cross-solver metrics: trajectory deviation, convergence studies, statistics."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import chi2 as chi2_dist

from .core import ComplexField, ConfigError, Grid3, ParticleState, PhysicalParams
from .kleingordon import PilotWaveConfig, PilotWaveSolver
from .schrodinger import (
    BohmianState,
    SchrodingerSolver,
    TrajectoryRecord,
    advect_ensemble,
    sample_born,
)
from . import presets


def trajectory_deviation(
    a: TrajectoryRecord, b: TrajectoryRecord
) -> tuple[float, float]:
    """Sup and time-averaged L2 position deviation between two records.

    b is resampled onto a's sample times by cubic interpolation over the
    overlapping window; disjoint time ranges are an error.
    """
    t_lo = max(a.times[0], b.times[0])
    t_hi = min(a.times[-1], b.times[-1])
    if t_hi <= t_lo:
        raise ConfigError("trajectory records cover disjoint time ranges")
    mask = (a.times >= t_lo - 1e-12) & (a.times <= t_hi + 1e-12)
    times = a.times[mask]
    spline = CubicSpline(b.times, b.positions, axis=0)
    delta = a.positions[mask] - spline(times)
    dist = np.linalg.norm(delta, axis=1)
    sup = float(np.max(dist))
    l2 = float(np.sqrt(np.trapezoid(dist**2, times) / (times[-1] - times[0])))
    return sup, l2


@dataclass
class ConvergenceMember:
    c: float
    U: float
    sup_dev: float
    l2_dev: float
    field_dev: float
    trajectory: TrajectoryRecord
    reference: TrajectoryRecord
    diagnostics: dict


@dataclass
class ConvergenceReport:
    """Deviation-vs-light-speed summary of a convergence sweep."""

    c_values: np.ndarray
    velocity_scales: np.ndarray
    sup_devs: np.ndarray
    l2_devs: np.ndarray
    field_devs: np.ndarray
    fitted_order: float
    fit_residual: float
    flags: list[str] = field(default_factory=list)
    members: list[ConvergenceMember] = field(default_factory=list)

    def __post_init__(self):
        if len(self.c_values) < 3:
            raise ConfigError("a convergence study needs at least three c values")
        if np.any(self.sup_devs < 0) or np.any(self.l2_devs < 0):
            raise ConfigError("deviations must be nonnegative")


@dataclass(frozen=True)
class SweepSpec:
    """Everything one sweep member needs, in picklable form."""

    c: float
    grid_points: tuple[int, int, int]
    grid_extents: tuple[float, float, float]
    preset: str
    preset_kwargs: tuple
    position: tuple[float, float, float]
    duration: float
    params_kwargs: tuple
    solver_kwargs: tuple
    reference_steps: int
    probe_points: tuple
    snapshot_times: tuple


def _bohmian_with_snapshots(
    psi0: ComplexField,
    position: np.ndarray,
    duration: float,
    n_steps: int,
    params: PhysicalParams,
    snapshot_times: tuple,
    record_every: int = 1,
    laplacian: str = "exact",
):
    """Reference run that also captures the wavefunction at chosen times."""
    from .schrodinger import _GuidedEnsemble

    solver = SchrodingerSolver(psi0.grid, params, laplacian=laplacian)
    ens = _GuidedEnsemble(solver, psi0.values, position, params)
    dt = duration / n_steps
    snap_steps = {}
    for t_req in snapshot_times:
        s = round(t_req / dt)
        if not 0 < s <= n_steps or abs(s * dt - t_req) > 1e-9 * max(1.0, t_req):
            raise ConfigError(f"snapshot time {t_req} is not a multiple of dt={dt}")
        snap_steps[s] = t_req
    times = [0.0]
    positions = [ens.positions[0].copy()]
    v0, _, a0 = ens._velocity_masked(ens.values, ens.positions)
    velocities = [v0[0].copy()]
    abs_psi = [float(a0[0])]
    snapshots = []
    for step in range(1, n_steps + 1):
        ens.advance(dt, strict=True)
        if step % record_every == 0 or step == n_steps:
            v, _, a = ens._velocity_masked(ens.values, ens.positions)
            times.append(ens.time)
            positions.append(ens.positions[0].copy())
            velocities.append(v[0].copy())
            abs_psi.append(float(a[0]))
        if step in snap_steps:
            snapshots.append(
                (snap_steps[step], ComplexField(grid=psi0.grid, values=ens.values))
            )
    record = TrajectoryRecord(
        times=np.asarray(times),
        positions=np.asarray(positions),
        velocities=np.asarray(velocities),
        abs_psi=np.asarray(abs_psi),
    )
    return record, snapshots


def _run_member(spec: SweepSpec) -> ConvergenceMember:
    grid = Grid3(points=spec.grid_points, extents=spec.grid_extents, boundary="dirichlet")
    psi0 = presets.build(grid, spec.preset, **dict(spec.preset_kwargs))
    params = PhysicalParams(light_speed=spec.c, **dict(spec.params_kwargs))
    cfg = PilotWaveConfig(
        grid=grid,
        params=params,
        psi0=psi0,
        position=np.asarray(spec.position),
        snapshot_times=spec.snapshot_times,
        duration=spec.duration,
        **dict(spec.solver_kwargs),
    )
    result = PilotWaveSolver(cfg).run()

    ref_params = PhysicalParams(light_speed=spec.c, **dict(spec.params_kwargs))
    # the reference shares the field solver's spatial symbol so that the
    # c-independent discretisation floor cancels out of the comparison
    ref_laplacian = "stencil" if dict(spec.solver_kwargs).get("laplacian", "stencil") == "stencil" else "exact"
    reference, ref_snaps = _bohmian_with_snapshots(
        psi0,
        np.asarray(spec.position),
        spec.duration,
        spec.reference_steps,
        ref_params,
        spec.snapshot_times,
        record_every=max(1, spec.reference_steps // 512),
        laplacian=ref_laplacian,
    )
    sup, l2 = trajectory_deviation(result.trajectory, reference)

    field_dev = 0.0
    probe = np.asarray(spec.probe_points, dtype=float)
    for (t_kg, f_kg), (t_b, f_b) in zip(result.snapshots, ref_snaps):
        if abs(t_kg - t_b) > 1e-9:
            raise ConfigError("snapshot schedules diverged between solvers")
        from .fields import interpolate

        v_kg = interpolate(f_kg.values, grid, probe)
        v_b = interpolate(f_b.values, grid, probe)
        field_dev = max(field_dev, float(np.max(np.abs(v_kg - v_b))))

    return ConvergenceMember(
        c=spec.c,
        U=reference.velocity_scale(),
        sup_dev=sup,
        l2_dev=l2,
        field_dev=field_dev,
        trajectory=result.trajectory,
        reference=reference,
        diagnostics=result.diagnostics,
    )


DEFAULT_PROBE_FRACTIONS = ((0.25, 0.3, 0.72), (0.68, 0.25, 0.31), (0.5, 0.72, 0.55))


def convergence_study(
    grid: Grid3,
    preset: str,
    preset_kwargs: dict,
    position,
    c_values,
    duration: float,
    params_kwargs: dict | None = None,
    solver_kwargs: dict | None = None,
    threads: int = 1,
    reference_steps: int = 4096,
    probe_points=None,
) -> ConvergenceReport:
    """Run the coupled and reference solvers over a light-speed sweep.

    Fits log(sup deviation) against log(U/c) by least squares, where U is the
    velocity scale of the (c-independent) reference run.  Members with the
    coupling switched off are flagged and the fit marked meaningless.
    """
    c_values = [float(c) for c in c_values]
    if len(c_values) < 3:
        raise ConfigError("need at least three c values")
    params_kwargs = dict(params_kwargs or {})
    solver_kwargs = dict(solver_kwargs or {})
    if probe_points is None:
        probe_points = tuple(
            tuple(f * e for f, e in zip(frac, grid.extents))
            for frac in DEFAULT_PROBE_FRACTIONS
        )
    snapshot_times = (duration / 2.0, duration)
    # reference step count: multiple of 4 so the snapshot times land exactly
    reference_steps = int(math.ceil(reference_steps / 4.0) * 4)

    specs = [
        SweepSpec(
            c=c,
            grid_points=grid.points,
            grid_extents=grid.extents,
            preset=preset,
            preset_kwargs=tuple(sorted(preset_kwargs.items())),
            position=tuple(np.asarray(position, dtype=float)),
            duration=duration,
            params_kwargs=tuple(sorted(params_kwargs.items())),
            solver_kwargs=tuple(sorted(solver_kwargs.items())),
            reference_steps=reference_steps,
            probe_points=tuple(map(tuple, probe_points)),
            snapshot_times=snapshot_times,
        )
        for c in c_values
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            members = list(pool.map(_run_member, specs))
    else:
        members = [_run_member(s) for s in specs]

    flags = []
    coupling_off = params_kwargs.get("coupling_b", 1.0) == 0.0
    sup = np.array([m.sup_dev for m in members])
    l2 = np.array([m.l2_dev for m in members])
    fdev = np.array([m.field_dev for m in members])
    U = np.array([m.U for m in members])
    cs = np.array(c_values)
    if coupling_off:
        flags.append("coupling_off: deviations at discretisation floor, order meaningless")
        order, resid = float("nan"), float("nan")
    else:
        x = np.log(U / cs)
        y = np.log(sup)
        coeffs, residuals, *_ = np.polyfit(x, y, 1, full=True)
        order = float(coeffs[0])
        resid = float(residuals[0]) if len(residuals) else 0.0
    return ConvergenceReport(
        c_values=cs,
        velocity_scales=U,
        sup_devs=sup,
        l2_devs=l2,
        field_devs=fdev,
        fitted_order=order,
        fit_residual=resid,
        flags=flags,
        members=members,
    )


@dataclass
class EquivarianceReport:
    chi2: float
    dof: int
    p_value: float
    n_samples: int
    n_excluded: int
    bins: tuple[int, int, int]


def _bin_expected(psi: ComplexField, bins, refine: int = 3) -> np.ndarray:
    """Born weights over histogram bins by sub-cell midpoint quadrature.

    Uses the same trilinear interpolant the sampler draws from, evaluated at
    ``refine``^3 midpoints per grid cell, so the expected counts are
    consistent with the sampling density to O((dx/refine)^2).
    """
    from .fields import interpolate

    grid = psi.grid
    upper = [
        grid.extents[a] if grid.boundary == "periodic" else grid.axis_coords(a)[-1]
        for a in range(3)
    ]
    n_sub = [(grid.points[a] if grid.boundary == "periodic" else grid.points[a] - 1)
             * refine for a in range(3)]
    axes = [
        (np.arange(n_sub[a]) + 0.5) * (upper[a] / n_sub[a]) for a in range(3)
    ]
    out = np.zeros(bins)
    edges = [np.linspace(0, grid.extents[a], bins[a] + 1) for a in range(3)]
    idx = [
        np.clip(np.searchsorted(edges[a], axes[a], side="right") - 1, 0, bins[a] - 1)
        for a in range(3)
    ]
    # evaluate plane by plane to bound memory
    Y, Z = np.meshgrid(axes[1], axes[2], indexing="ij")
    for i, x in enumerate(axes[0]):
        pts = np.stack([np.full(Y.size, x), Y.ravel(), Z.ravel()], axis=1)
        dens = np.abs(interpolate(psi.values, grid, pts)) ** 2
        plane = np.zeros((bins[1], bins[2]))
        np.add.at(
            plane,
            (idx[1][:, None].repeat(len(axes[2]), 1).ravel(),
             idx[2][None, :].repeat(len(axes[1]), 0).ravel()),
            dens,
        )
        out[idx[0][i]] += plane
    return out / out.sum()


def _histogram(points: np.ndarray, grid: Grid3, bins) -> np.ndarray:
    edges = [np.linspace(0, grid.extents[a], bins[a] + 1) for a in range(3)]
    hist, _ = np.histogramdd(points, bins=edges)
    return hist


def chi_square_vs_density(
    points: np.ndarray, psi: ComplexField, bins=(6, 6, 6), min_expected: float = 5.0
) -> tuple[float, int, float]:
    """Pearson chi^2 of sampled positions against the |psi|^2 density.

    Bins with expected counts below ``min_expected`` are pooled into their
    largest neighbour (standard practice for sparse cells).
    """
    expected = _bin_expected(psi, bins).ravel() * len(points)
    observed = _histogram(points, psi.grid, bins).ravel()
    order = np.argsort(expected)[::-1]
    expected, observed = expected[order], observed[order]
    # pool the sparse tail into one class
    keep = expected >= min_expected
    if not np.all(keep):
        tail_e, tail_o = expected[~keep].sum(), observed[~keep].sum()
        expected, observed = expected[keep], observed[keep]
        if tail_e > 0:
            expected = np.append(expected, tail_e)
            observed = np.append(observed, tail_o)
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    dof = len(expected) - 1
    return chi2, dof, float(chi2_dist.sf(chi2, dof))


def born_equivariance(
    psi0: ComplexField,
    n: int,
    duration: float,
    params: PhysicalParams | None = None,
    dt: float | None = None,
    seed: int = 0,
    bins=(6, 6, 6),
    initial_points: np.ndarray | None = None,
) -> EquivarianceReport:
    """Sample positions from |psi0|^2, advect them, test against |psi(T)|^2.

    ``initial_points`` overrides the Born sample (negative controls).  Guided
    particles that met the node tolerance are excluded and counted.
    """
    if n < 1000:
        raise ConfigError("equivariance statistics need n >= 1000")
    params = params or PhysicalParams()
    if dt is None:
        dt = duration / 512
    pts = initial_points if initial_points is not None else sample_born(psi0, n, seed)
    final, alive, psi_T = advect_ensemble(psi0, pts, duration, dt, params)
    kept = final[alive]
    chi2, dof, p = chi_square_vs_density(kept, psi_T, bins=bins)
    return EquivarianceReport(
        chi2=chi2,
        dof=dof,
        p_value=p,
        n_samples=len(kept),
        n_excluded=int(np.sum(~alive)),
        bins=tuple(bins),
    )
