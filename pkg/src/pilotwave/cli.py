"""Batch front end: parse a config, dispatch one experiment, write outputs.

Exit codes: 0 success, 2 invalid configuration, 3 CFL precheck failure,
4 sweep member failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import CflError, ConfigError, ParticleState, PhysicalParams, PilotwaveError, derive_scales
from .config import RunSetup, load_config
from .greens import epsilon1_kernel
from .io import (
    snapshot_name,
    write_collapse_csv,
    write_kernel_csv,
    write_manifest,
    write_report_csv,
    write_snapshot,
    write_trajectory_csv,
)
from .kleingordon import PilotWaveConfig, PilotWaveSolver, cfl_bound
from .measurement import make_partition, measure_position
from .schrodinger import BohmianState, integrate_bohmian

EXIT_CONFIG = 2
EXIT_CFL = 3
EXIT_MEMBER = 4


def _base_manifest(command: str, setup: RunSetup, extra: dict | None = None) -> dict:
    scales = derive_scales(setup.params)
    entries = {
        "command": command,
        "version": f"pilotwave-{__version__}",
        "config_hash": setup.hash,
        "mass": setup.params.mass,
        "light_speed": setup.params.light_speed,
        "action_const": setup.params.action_const,
        "coupling_a": setup.params.coupling_a,
        "coupling_b": setup.params.coupling_b,
        "kappa": setup.params.kappa,
        "singular_density": setup.params.singular_density,
        "omega_c": scales.omega_c,
        "k_c": scales.k_c,
        "omega_s": scales.omega_s,
        "grid_points": " ".join(str(n) for n in setup.grid.points),
        "grid_extents": " ".join(repr(e) for e in setup.grid.extents),
        "grid_spacing": " ".join(repr(s) for s in setup.grid.spacing),
        "boundary": setup.grid.boundary,
        "seed": setup.seed,
    }
    if extra:
        entries.update(extra)
    return entries


def _require_position(setup: RunSetup) -> np.ndarray:
    if setup.position is None:
        raise ConfigError("missing required key [particle] position")
    return setup.position


def cmd_run_bohmian(setup: RunSetup, out: Path) -> int:
    t0 = time.time()
    psi0 = setup.build_psi0()
    position = _require_position(setup)
    particle = ParticleState(position=position, velocity=np.zeros(3), gamma=1.0)
    state = BohmianState(psi=psi0, particle=particle)
    dt = setup.dt if setup.dt is not None else setup.duration / setup.reference_steps
    record = integrate_bohmian(
        state,
        setup.duration,
        dt,
        params=setup.params,
        record_every=setup.record_every,
    )
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", record)
    snapdir = out / "snapshots"
    snapdir.mkdir(exist_ok=True)
    write_snapshot(snapdir / snapshot_name(0), psi0, 0.0)
    entries = _base_manifest(
        "run-bohmian",
        setup,
        {
            "dt": repr(dt),
            "duration": repr(setup.duration),
            "velocity_scale_U": repr(record.velocity_scale()),
            "min_abs_psi": repr(record.min_abs_psi()),
        },
    )
    write_manifest(out / "manifest.txt", entries, wall_time=time.time() - t0)
    return 0


def cmd_run_pilotwave(setup: RunSetup, out: Path) -> int:
    t0 = time.time()
    psi0 = setup.build_psi0()
    position = _require_position(setup)
    bound = cfl_bound(setup.grid, setup.params.light_speed)
    if setup.dt is not None and setup.dt > bound:
        raise CflError(
            f"dt = {setup.dt:.6g} violates the CFL bound {bound:.6g}; refusing to start"
        )
    cfg = PilotWaveConfig(
        grid=setup.grid,
        params=setup.params,
        psi0=psi0,
        position=position,
        velocity=setup.velocity,
        velocity_scale=setup.velocity_scale,
        duration=setup.duration,
        dt=setup.dt,
        cfl_safety=setup.cfl_safety,
        compton_fraction=setup.compton_fraction,
        record_every=setup.record_every,
        snapshot_every=setup.snapshot_every,
        snapshot_times=setup.snapshot_times,
        **setup.kg_options,
    )
    result = PilotWaveSolver(cfg).run()
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", result.trajectory)
    snapdir = out / "snapshots"
    snapdir.mkdir(exist_ok=True)
    write_snapshot(snapdir / snapshot_name(0), psi0, 0.0)
    dt = result.diagnostics["dt"]
    for t_snap, field in result.snapshots:
        write_snapshot(snapdir / snapshot_name(round(t_snap / dt)), field, t_snap)
    extra = {
        "dt": repr(result.diagnostics["dt"]),
        "n_steps": result.diagnostics["n_steps"],
        "duration": repr(setup.duration),
        "cfl_bound": repr(result.diagnostics["cfl_bound"]),
        "compton_bound": repr(result.diagnostics["compton_bound"]),
        "mollifier_width": repr(result.diagnostics["mollifier_width"]),
        "extraction": result.diagnostics["extraction"],
        "laplacian": result.diagnostics["laplacian"],
        "carrier_omega": repr(result.diagnostics["carrier_omega"]),
    }
    if setup.reference:
        particle = ParticleState(position=position, velocity=np.zeros(3), gamma=1.0)
        ref = integrate_bohmian(
            BohmianState(psi=psi0, particle=particle),
            setup.duration,
            setup.duration / setup.reference_steps,
            params=setup.params,
            record_every=max(1, setup.reference_steps // 1024),
        )
        write_trajectory_csv(out / "reference.csv", ref)
        extra["reference_steps"] = setup.reference_steps
    entries = _base_manifest("run-pilotwave", setup, extra)
    write_manifest(out / "manifest.txt", entries, wall_time=time.time() - t0)
    return 0


def cmd_converge(setup: RunSetup, out: Path, threads: int | None = None) -> int:
    from .analysis import convergence_study
    from .io import write_trajectory_csv as _wt

    t0 = time.time()
    if len(setup.c_values) < 3:
        raise ConfigError("[converge] c_values needs at least three entries")
    position = _require_position(setup)
    report = convergence_study(
        setup.grid,
        setup.initial_preset,
        setup.initial_kwargs,
        position,
        setup.c_values,
        setup.duration,
        params_kwargs={
            "mass": setup.params.mass,
            "action_const": setup.params.action_const,
            "coupling_a": setup.params.coupling_a,
            "coupling_b": setup.params.coupling_b,
            "kappa": setup.params.kappa,
        },
        solver_kwargs=dict(
            cfl_safety=setup.cfl_safety,
            compton_fraction=setup.compton_fraction,
            record_every=setup.record_every,
            **setup.kg_options,
        ),
        threads=threads if threads is not None else setup.threads,
        reference_steps=setup.reference_steps,
    )
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(out / "report.csv", report)
    for member in report.members:
        sub = out / f"c_{member.c:g}"
        sub.mkdir(exist_ok=True)
        _wt(sub / "trajectory.csv", member.trajectory)
        _wt(sub / "reference.csv", member.reference)
    entries = _base_manifest(
        "converge",
        setup,
        {
            "c_values": " ".join(repr(c) for c in setup.c_values),
            "fitted_order": repr(report.fitted_order),
            "fit_residual": repr(report.fit_residual),
            "flags": ";".join(report.flags) or "none",
        },
    )
    write_manifest(out / "manifest.txt", entries, wall_time=time.time() - t0)
    return 0


def cmd_measure(setup: RunSetup, out: Path) -> int:
    t0 = time.time()
    psi0 = setup.build_psi0()
    position = _require_position(setup)
    if setup.measurement_cuts is None:
        raise ConfigError("missing required key [measurement] cuts")
    partition = make_partition(setup.grid, setup.measurement_cuts)
    particle = ParticleState(position=position, velocity=np.zeros(3), gamma=1.0)
    state = BohmianState(psi=psi0, particle=particle)
    outcome = measure_position(
        state,
        partition,
        setup.params,
        duration=setup.measurement_duration,
        dt=setup.measurement_dt,
        record_every=setup.measurement_record_every,
    )
    out.mkdir(parents=True, exist_ok=True)
    write_collapse_csv(out / "collapse.csv", outcome)
    snapdir = out / "snapshots"
    snapdir.mkdir(exist_ok=True)
    write_snapshot(snapdir / snapshot_name(0), psi0, 0.0)
    write_snapshot(
        snapdir / snapshot_name(len(outcome.times) - 1),
        outcome.collapsed_psi,
        outcome.duration,
    )
    cell = partition.cells[outcome.cell_index]
    plateau = outcome.mean_density(cell.volume)
    # fitted decay rate of the fastest-emptying cell (log-linear fit)
    rates = []
    for i in range(len(partition.cells)):
        norms = outcome.norm_history[:, i]
        if i != outcome.cell_index and norms[0] > 0:
            good = norms > 1e-14 * norms[0]
            if np.sum(good) > 3:
                rate = -np.polyfit(outcome.times[good], np.log(norms[good]), 1)[0]
                rates.append(rate)
    entries = _base_manifest(
        "measure",
        setup,
        {
            "cuts": " ".join(str(c) for c in setup.measurement_cuts),
            "cell_index": outcome.cell_index,
            "duration": repr(outcome.duration),
            "plateau_mean_density": repr(plateau),
            "empty_cell_decay_rates": " ".join(repr(r) for r in rates) or "none",
        },
    )
    write_manifest(out / "manifest.txt", entries, wall_time=time.time() - t0)
    return 0


def cmd_greens_check(setup: RunSetup, out: Path) -> int:
    t0 = time.time()
    r_values = setup.greens_r_values or tuple(np.linspace(0.0, 50.0, 11))
    samples = []
    for r in r_values:
        trunc = max(setup.greens_truncation, 80.0 * r)
        samples.append(epsilon1_kernel(r, trunc))
    out.mkdir(parents=True, exist_ok=True)
    write_kernel_csv(out / "kernel.csv", samples)
    entries = _base_manifest(
        "greens-check",
        setup,
        {
            "r_prime_values": " ".join(repr(r) for r in r_values),
            "max_abs_K": repr(max(abs(s.value) for s in samples)),
            "max_err_estimate": repr(max(s.abs_error_estimate for s in samples)),
        },
    )
    write_manifest(out / "manifest.txt", entries, wall_time=time.time() - t0)
    return 0


COMMANDS = {
    "run-bohmian": cmd_run_bohmian,
    "run-pilotwave": cmd_run_pilotwave,
    "converge": cmd_converge,
    "measure": cmd_measure,
    "greens-check": cmd_greens_check,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pilotwave",
        description="Batch experiments for the phase-coupled pilot-wave laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override [run] seed")
        p.add_argument("--threads", type=int, default=None, help="worker pool size")
    args = parser.parse_args(argv)

    try:
        setup = load_config(args.config)
        if args.seed is not None:
            setup.seed = args.seed
        out = Path(args.out)
        if args.command == "converge":
            return cmd_converge(setup, out, threads=args.threads)
        return COMMANDS[args.command](setup, out)
    except CflError as exc:
        print(f"pilotwave: CFL violation: {exc}", file=sys.stderr)
        return EXIT_CFL
    except ConfigError as exc:
        print(f"pilotwave: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PilotwaveError as exc:
        if args.command == "converge":
            print(f"pilotwave: sweep member failed: {exc}", file=sys.stderr)
            return EXIT_MEMBER
        print(f"pilotwave: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
