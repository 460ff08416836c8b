import re
from pathlib import Path

import numpy as np
import pytest

from pilotwave.cli import main
from pilotwave.config import load_config
from pilotwave.core import ConfigError
from pilotwave.io import read_manifest, read_snapshot, read_trajectory_csv

BASE = """
[physics]
light_speed = 6.0

[grid]
points = 14 14 14
extents = 2.0 2.0 2.0
boundary = dirichlet

[initial]
preset = two_mode
epsilon = 0.5

[particle]
position = 0.9 1.1 0.85

[run]
duration = 0.04
snapshot_every = 20
seed = 11
"""


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _strip_wall_time(path: Path) -> str:
    return re.sub(r"wall_time_s = .*\n?", "", path.read_text())


class TestConfig:
    def test_missing_grid_section(self, tmp_path):
        cfg = _write(tmp_path, "[physics]\nlight_speed = 2.0\n")
        with pytest.raises(ConfigError, match=r"\[grid\]"):
            load_config(cfg)

    def test_unknown_key_named(self, tmp_path):
        bad = BASE.replace("points = 14 14 14", "typo_key = 3\npoints = 14 14 14")
        cfg = _write(tmp_path, bad)
        with pytest.raises(ConfigError, match="typo_key"):
            load_config(cfg)

    def test_hash_stable_under_reordering(self, tmp_path):
        a = load_config(_write(tmp_path, BASE, "a.ini"))
        reordered = BASE.replace(
            "points = 14 14 14\nextents = 2.0 2.0 2.0",
            "extents = 2.0 2.0 2.0\npoints = 14 14 14",
        )
        b = load_config(_write(tmp_path, reordered, "b.ini"))
        assert a.hash == b.hash

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.ini")


class TestCommands:
    def test_run_pilotwave_outputs(self, tmp_path):
        cfg = _write(tmp_path, BASE)
        out = tmp_path / "out"
        assert main(["run-pilotwave", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "manifest.txt").exists()
        rec = read_trajectory_csv(out / "trajectory.csv")
        assert len(rec.times) > 10
        snaps = sorted((out / "snapshots").iterdir())
        assert snaps
        vals, t = read_snapshot(snaps[0])
        assert vals.shape == (14, 14, 14)
        manifest = read_manifest(out / "manifest.txt")
        assert manifest["omega_c"] == "36.0"

    def test_missing_required_key_exit_2(self, tmp_path, capsys):
        cfg = _write(tmp_path, BASE.replace("position = 0.9 1.1 0.85", ""))
        code = main(["run-pilotwave", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "position" in capsys.readouterr().err

    def test_cfl_violation_exit_3_before_output(self, tmp_path):
        cfg = _write(tmp_path, BASE.replace("seed = 11", "seed = 11\ndt = 1.0"))
        out = tmp_path / "never"
        code = main(["run-pilotwave", "--config", str(cfg), "--out", str(out)])
        assert code == 3
        assert not out.exists()

    def test_deterministic_outputs(self, tmp_path):
        cfg = _write(tmp_path, BASE)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["run-pilotwave", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["run-pilotwave", "--config", str(cfg), "--out", str(out2)]) == 0
        assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()
        for snap in (out1 / "snapshots").iterdir():
            twin = out2 / "snapshots" / snap.name
            assert snap.read_bytes() == twin.read_bytes()
        assert _strip_wall_time(out1 / "manifest.txt") == _strip_wall_time(
            out2 / "manifest.txt"
        )

    def test_run_bohmian(self, tmp_path):
        cfg = _write(tmp_path, BASE.replace("seed = 11", "seed = 11\nreference_steps = 128"))
        out = tmp_path / "bohm"
        assert main(["run-bohmian", "--config", str(cfg), "--out", str(out)]) == 0
        rec = read_trajectory_csv(out / "trajectory.csv")
        assert rec.min_abs_psi() > 0

    def test_measure_command(self, tmp_path):
        cfg = _write(
            tmp_path,
            BASE
            + """
[measurement]
cuts = 2 1 1
record_every = 5
""",
        )
        out = tmp_path / "meas"
        assert main(["measure", "--config", str(cfg), "--out", str(out)]) == 0
        collapse = (out / "collapse.csv").read_text().splitlines()
        assert collapse[0] == "t,norm_cell_0,norm_cell_1,energy_cell_0,energy_cell_1"
        manifest = read_manifest(out / "manifest.txt")
        assert manifest["cell_index"] == "0"
        plateau = float(manifest["plateau_mean_density"])
        assert plateau == pytest.approx(np.sqrt(0.5), rel=0.02)

    def test_greens_check_command(self, tmp_path):
        cfg = _write(
            tmp_path,
            BASE
            + """
[greens]
r_prime_values = 0 5
truncation = 1000
""",
        )
        out = tmp_path / "gc"
        assert main(["greens-check", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "kernel.csv").read_text().splitlines()
        assert lines[0] == "r_prime,re_K,im_K,abs_K,truncation,err_estimate"
        assert len(lines) == 3

    def test_converge_command_small(self, tmp_path):
        text = BASE.replace("duration = 0.04", "duration = 0.03").replace(
            "seed = 11", "seed = 11\nreference_steps = 256"
        )
        cfg = _write(
            tmp_path,
            text
            + """
[converge]
c_values = 3 4.5 6

[kleingordon]
laplacian = spectral
""",
        )
        out = tmp_path / "conv"
        assert main(["converge", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[0] == "c,U,sup_dev,l2_dev,field_dev,fitted_order"
        assert len(lines) == 4
        assert (out / "c_3" / "trajectory.csv").exists()
        assert (out / "c_3" / "reference.csv").exists()
