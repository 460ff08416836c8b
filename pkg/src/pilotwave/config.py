"""Structured text configuration (INI sections, key = value) for the CLI.

Sections and keys are documented in the README; unknown keys are rejected so
typos fail fast, and missing required keys are reported by name.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ConfigError, Grid3, PhysicalParams
from .io import config_hash
from . import presets

_KNOWN_KEYS = {
    "physics": {
        "mass",
        "light_speed",
        "action_const",
        "coupling_a",
        "coupling_b",
        "kappa",
        "singular_density",
        "potential",
    },
    "grid": {"points", "extents", "boundary"},
    "initial": {
        "preset",
        "mode",
        "mode1",
        "mode2",
        "epsilon",
        "phase2",
        "center",
        "width",
        "momentum",
        "amplitude",
        "amplitudes",
        "cuts",
    },
    "particle": {"position", "velocity", "velocity_scale"},
    "run": {
        "duration",
        "dt",
        "cfl_safety",
        "compton_fraction",
        "record_every",
        "snapshot_every",
        "snapshot_times",
        "seed",
        "reference",
        "reference_steps",
    },
    "kleingordon": {
        "laplacian",
        "extraction",
        "radii_dx",
        "mollifier_width_dx",
        "avg_window",
        "alternate_sigma",
    },
    "measurement": {"cuts", "duration", "dt", "record_every"},
    "converge": {"c_values", "threads"},
    "greens": {"r_prime_values", "truncation"},
}


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in text.replace(",", " ").split()]


@dataclass
class RunSetup:
    """Parsed configuration with everything the commands consume."""

    params: PhysicalParams
    grid: Grid3
    initial_preset: str
    initial_kwargs: dict
    position: np.ndarray | None
    velocity: np.ndarray | str
    velocity_scale: float
    duration: float
    dt: float | None
    cfl_safety: float
    compton_fraction: float
    record_every: int
    snapshot_every: int
    snapshot_times: tuple
    seed: int
    reference: bool
    reference_steps: int
    kg_options: dict
    measurement_cuts: tuple | None
    measurement_duration: float | None
    measurement_dt: float | None
    measurement_record_every: int
    c_values: tuple
    threads: int
    greens_r_values: tuple
    greens_truncation: float
    hash: str = ""

    def build_psi0(self):
        return presets.build(self.grid, self.initial_preset, **self.initial_kwargs)


def _require(section, key: str, path: str):
    if key not in section:
        raise ConfigError(f"{path}: missing required key [{section.name}] {key}")
    return section[key]


def load_config(path) -> RunSetup:
    path = str(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not read:
        raise ConfigError(f"{path}: config file not found or unreadable")

    pairs = []
    for sec in parser.sections():
        if sec not in _KNOWN_KEYS:
            raise ConfigError(f"{path}: unknown section [{sec}]")
        for key, value in parser.items(sec):
            if key not in _KNOWN_KEYS[sec]:
                raise ConfigError(f"{path}: unknown key [{sec}] {key}")
            pairs.append((f"{sec}.{key}", value.strip()))

    phys = parser["physics"] if parser.has_section("physics") else {}
    pot_spec = phys.get("potential", "none").strip() if phys else "none"
    potential = None
    if pot_spec not in ("none", ""):
        if pot_spec.startswith("constant:"):
            v0 = float(pot_spec.split(":", 1)[1])

            def potential(pts, _v0=v0):
                return np.full(len(np.atleast_2d(pts)), _v0)

        else:
            raise ConfigError(f"{path}: unsupported potential spec {pot_spec!r}")
    sdens = phys.get("singular_density", "auto").strip() if phys else "auto"
    params = PhysicalParams(
        mass=float(phys.get("mass", 1.0)),
        light_speed=float(phys.get("light_speed", 1.0)),
        action_const=float(phys.get("action_const", 1.0)),
        coupling_a=float(phys.get("coupling_a", -4.0 * np.pi)),
        coupling_b=float(phys.get("coupling_b", 1.0)),
        kappa=float(phys.get("kappa", 1.0)),
        singular_density=None if sdens == "auto" else float(sdens),
        potential=potential,
    )

    if not parser.has_section("grid"):
        raise ConfigError(f"{path}: missing required section [grid]")
    gsec = parser["grid"]
    points = _ints(_require(gsec, "points", path))
    extents = _floats(_require(gsec, "extents", path))
    if len(points) != 3 or len(extents) != 3:
        raise ConfigError(f"{path}: [grid] points and extents need three entries")
    grid = Grid3(
        points=tuple(points),
        extents=tuple(extents),
        boundary=gsec.get("boundary", "dirichlet").strip(),
    )

    initial_preset = "two_mode"
    initial_kwargs: dict = {}
    if parser.has_section("initial"):
        isec = parser["initial"]
        initial_preset = isec.get("preset", "two_mode").strip()
        if "mode" in isec:
            initial_kwargs["mode"] = tuple(_ints(isec["mode"]))
        if "mode1" in isec:
            initial_kwargs["mode1"] = tuple(_ints(isec["mode1"]))
        if "mode2" in isec:
            initial_kwargs["mode2"] = tuple(_ints(isec["mode2"]))
        if "epsilon" in isec:
            initial_kwargs["epsilon"] = float(isec["epsilon"])
        if "phase2" in isec:
            initial_kwargs["phase2"] = float(isec["phase2"])
        if "center" in isec:
            initial_kwargs["center"] = _floats(isec["center"])
        if "width" in isec:
            initial_kwargs["width"] = float(isec["width"])
        if "momentum" in isec:
            initial_kwargs["momentum"] = tuple(_floats(isec["momentum"]))
        if "amplitude" in isec:
            initial_kwargs["amplitude"] = complex(isec["amplitude"].replace(" ", ""))
        if "amplitudes" in isec:
            initial_kwargs["amplitudes"] = _floats(isec["amplitudes"])
        if "cuts" in isec:
            initial_kwargs["cuts"] = tuple(_ints(isec["cuts"]))

    position = None
    velocity: np.ndarray | str = "auto"
    velocity_scale = 1.0
    if parser.has_section("particle"):
        psec = parser["particle"]
        if "position" in psec:
            position = np.asarray(_floats(psec["position"]))
        vel = psec.get("velocity", "auto").strip()
        velocity = "auto" if vel == "auto" else np.asarray(_floats(vel))
        velocity_scale = float(psec.get("velocity_scale", 1.0))

    rsec = parser["run"] if parser.has_section("run") else {}
    dt_spec = rsec.get("dt", "auto").strip() if rsec else "auto"
    snapshot_times = tuple(_floats(rsec.get("snapshot_times", ""))) if rsec else ()

    kg_options = {}
    if parser.has_section("kleingordon"):
        ksec = parser["kleingordon"]
        if "laplacian" in ksec:
            kg_options["laplacian"] = ksec["laplacian"].strip()
        if "extraction" in ksec:
            kg_options["extraction"] = ksec["extraction"].strip()
        if "radii_dx" in ksec:
            kg_options["radii_dx"] = tuple(_floats(ksec["radii_dx"]))
        if "mollifier_width_dx" in ksec:
            kg_options["mollifier_width_dx"] = float(ksec["mollifier_width_dx"])
        if "avg_window" in ksec:
            kg_options["avg_window"] = int(ksec["avg_window"])
        if "alternate_sigma" in ksec:
            kg_options["alternate_sigma"] = ksec.getboolean("alternate_sigma")

    msec = parser["measurement"] if parser.has_section("measurement") else {}
    m_dur = msec.get("duration", "auto").strip() if msec else "auto"
    m_dt = msec.get("dt", "auto").strip() if msec else "auto"

    csec = parser["converge"] if parser.has_section("converge") else {}
    gsec2 = parser["greens"] if parser.has_section("greens") else {}

    return RunSetup(
        params=params,
        grid=grid,
        initial_preset=initial_preset,
        initial_kwargs=initial_kwargs,
        position=position,
        velocity=velocity,
        velocity_scale=velocity_scale,
        duration=float(rsec.get("duration", 1.0)) if rsec else 1.0,
        dt=None if dt_spec == "auto" else float(dt_spec),
        cfl_safety=float(rsec.get("cfl_safety", 0.5)) if rsec else 0.5,
        compton_fraction=float(rsec.get("compton_fraction", 0.1)) if rsec else 0.1,
        record_every=int(rsec.get("record_every", 1)) if rsec else 1,
        snapshot_every=int(rsec.get("snapshot_every", 100)) if rsec else 100,
        snapshot_times=snapshot_times,
        seed=int(rsec.get("seed", 1234)) if rsec else 1234,
        reference=rsec.getboolean("reference", fallback=False) if rsec else False,
        reference_steps=int(rsec.get("reference_steps", 2048)) if rsec else 2048,
        kg_options=kg_options,
        measurement_cuts=tuple(_ints(msec["cuts"])) if msec and "cuts" in msec else None,
        measurement_duration=None if m_dur == "auto" else float(m_dur),
        measurement_dt=None if m_dt == "auto" else float(m_dt),
        measurement_record_every=int(msec.get("record_every", 1)) if msec else 1,
        c_values=tuple(_floats(csec.get("c_values", ""))) if csec else (),
        threads=int(csec.get("threads", 1)) if csec else 1,
        greens_r_values=tuple(_floats(gsec2.get("r_prime_values", ""))) if gsec2 else (),
        greens_truncation=float(gsec2.get("truncation", 1000.0)) if gsec2 else 1000.0,
        hash=config_hash(pairs),
    )
