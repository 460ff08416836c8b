import numpy as np
import pytest

from pilotwave import presets
from pilotwave.core import ComplexField, Grid3, NearNodeError, ParticleState, PhysicalParams
from pilotwave.fields import gradient_arrays
from pilotwave.schrodinger import (
    BohmianState,
    DegenerateDensityError,
    SchrodingerSolver,
    advect_ensemble,
    bohm_velocity,
    integrate_bohmian,
    sample_born,
    step_schrodinger,
)
from pilotwave.analysis import chi_square_vs_density


def _box(n=20, L=1.0):
    return Grid3(points=(n, n, n), extents=(L, L, L), boundary="dirichlet")


def _periodic(n=20, L=1.0):
    return Grid3(points=(n, n, n), extents=(L, L, L), boundary="periodic")


class TestStep:
    def test_plane_wave_phase_factor(self):
        g = _periodic(24)
        psi = presets.plane_wave(g, mode=(2, 0, 0))
        k = 2 * np.pi * 2
        dt = 1e-3
        stepped = step_schrodinger(psi, dt)
        # exact eigenmode: amplitude unchanged, phase -hbar k^2 dt/2m via the
        # Cayley function of the exact mode eigenvalue
        z = k**2 * dt / 4
        expect = psi.values * (1 - 1j * z) / (1 + 1j * z)
        np.testing.assert_allclose(stepped.values, expect, atol=1e-13)

    def test_box_mode_phase_rate(self):
        g = _box(18)
        psi = presets.box_mode(g, (1, 1, 1))
        E = 3 * np.pi**2 / 2
        dt = 5e-5
        solver = SchrodingerSolver(g, PhysicalParams())
        v = psi.values.copy()
        phases = []
        for _ in range(1500):
            v = solver.step(v, dt)
            phases.append(np.angle(np.vdot(psi.values, v)))
        t = dt * np.arange(1, 1501)
        slope = np.polyfit(t, np.unwrap(np.array(phases)), 1)[0]
        assert -slope / E == pytest.approx(1.0, rel=1e-6)

    def test_constant_potential_adds_phase(self):
        g = _box(16)
        psi = presets.box_mode(g, (1, 1, 1))
        V0 = 3.7
        pot = np.full(g.shape, V0)
        dt = 1e-4
        plain = step_schrodinger(psi, dt)
        shifted = step_schrodinger(psi, dt, potential=pot)
        # Cayley half-steps: phase factor [(1 - i z)/(1 + i z)]^2, z = V0 dt/4
        z = V0 * dt / 4
        factor = ((1 - 1j * z) / (1 + 1j * z)) ** 2
        np.testing.assert_allclose(shifted.values, plain.values * factor, atol=1e-13)

    def test_gaussian_spreading_law(self):
        # position variance of a free Gaussian: s^2(t) = s^2 (1 + (hbar t / 2 m s^2)^2)
        g = _periodic(40)
        s = 0.06
        psi = presets.gaussian(g, width=s)
        solver = SchrodingerSolver(g, PhysicalParams())
        dt = 2e-4
        T = 0.004  # spread factor ~1.5, tails still far from the walls
        v = psi.values.copy()
        for _ in range(round(T / dt)):
            v = solver.step(v, dt)
        X, Y, Z = g.meshgrid()
        rho = np.abs(v) ** 2
        rho /= rho.sum()
        xm = (rho * X).sum()
        var = (rho * (X - xm) ** 2).sum()
        expect = s**2 * (1 + (T / (2 * s**2)) ** 2)
        assert var == pytest.approx(expect, rel=1e-3)

    def test_norm_preserved_per_step(self):
        g = _box(16)
        psi = presets.two_mode(g)
        stepped = step_schrodinger(psi, 0.02)
        assert stepped.norm_l2() == pytest.approx(psi.norm_l2(), abs=1e-12)


class TestBohmVelocity:
    def test_plane_wave(self):
        g = _periodic(32)
        psi = presets.plane_wave(g, mode=(3, 0, 0))
        k = 2 * np.pi * 3
        dx = g.spacing[0]
        v = bohm_velocity(psi, np.array([0.37, 0.21, 0.55]))
        # centered differences resolve sin(k dx)/dx exactly; consistent with
        # hbar k / m to second order in k dx
        assert v[0] == pytest.approx(np.sin(k * dx) / dx, rel=1e-12)
        assert v[0] == pytest.approx(k, rel=(k * dx) ** 2 / 6 * 1.1)
        assert abs(v[1]) < 1e-12 and abs(v[2]) < 1e-12

    def test_real_field_is_static(self):
        g = _box(16)
        psi = presets.two_mode(g)
        v = bohm_velocity(psi, np.array([0.43, 0.52, 0.61]))
        np.testing.assert_allclose(v, 0.0, atol=1e-13)

    def test_two_wave_superposition_matches_symbolic(self):
        g = _periodic(48)
        X, _, _ = g.meshgrid()
        k1, k2 = 2 * np.pi * 1, 2 * np.pi * 3
        psi = ComplexField(grid=g, values=np.exp(1j * k1 * X) + np.exp(1j * k2 * X))
        q = np.array([0.315, 0.5, 0.5])
        # symbolic Im(grad psi / psi) at the sample point
        e1, e2 = np.exp(1j * k1 * q[0]), np.exp(1j * k2 * q[0])
        expect = np.imag(1j * (k1 * e1 + k2 * e2) / (e1 + e2))
        v = bohm_velocity(psi, q)
        tol = (k2 * g.spacing[0]) ** 2 * abs(expect)
        assert v[0] == pytest.approx(expect, abs=tol)

    def test_near_node_raises(self):
        g = _box(16)
        psi = presets.box_mode(g, (2, 1, 1))
        # the (2,1,1) mode vanishes on the x = L/2 plane
        with pytest.raises(NearNodeError):
            bohm_velocity(psi, np.array([0.5, 0.52, 0.61]))


class TestIntegrate:
    def test_plane_wave_straight_line(self):
        g = _periodic(24)
        psi = presets.plane_wave(g, mode=(1, 0, 0))
        q0 = np.array([0.31, 0.41, 0.52])
        particle = ParticleState(position=q0, velocity=np.zeros(3), gamma=1.0)
        rec = integrate_bohmian(BohmianState(psi=psi, particle=particle), 0.02, 1e-3)
        k = 2 * np.pi
        dx = g.spacing[0]
        v_disc = np.sin(k * dx) / dx
        expect = q0[0] + v_disc * rec.times[-1]
        assert rec.positions[-1][0] == pytest.approx(expect, rel=1e-9)
        np.testing.assert_allclose(rec.positions[-1][1:], q0[1:], atol=1e-12)

    def test_ground_state_stationary(self):
        g = _box(16)
        psi = presets.box_mode(g, (1, 1, 1))
        q0 = np.array([0.37, 0.56, 0.44])
        particle = ParticleState(position=q0, velocity=np.zeros(3), gamma=1.0)
        rec = integrate_bohmian(BohmianState(psi=psi, particle=particle), 0.05, 1e-3)
        np.testing.assert_allclose(rec.positions[-1], q0, atol=1e-10)

    def test_two_mode_self_convergence(self):
        # oscillating trajectory against a dense-timestep reference
        g = _box(20)
        psi = presets.two_mode(g)
        q0 = np.array([0.45, 0.55, 0.42])
        particle = ParticleState(position=q0, velocity=np.zeros(3), gamma=1.0)
        state = BohmianState(psi=psi, particle=particle)
        T = 0.12
        coarse = integrate_bohmian(state, T, T / 128)
        fine = integrate_bohmian(state, T, T / 2048, record_every=16)
        scale = np.max(np.linalg.norm(fine.positions - q0, axis=1))
        dev = np.max(np.linalg.norm(coarse.positions - fine.positions, axis=1))
        assert scale > 1e-3  # the trajectory actually moved
        assert dev <= 1e-4 * max(1.0, scale)

    def test_diagnostics_recorded(self):
        g = _box(16)
        psi = presets.two_mode(g)
        particle = ParticleState(
            position=np.array([0.45, 0.55, 0.42]), velocity=np.zeros(3), gamma=1.0
        )
        rec = integrate_bohmian(BohmianState(psi=psi, particle=particle), 0.02, 1e-3)
        assert rec.min_abs_psi() > 0
        assert rec.velocity_scale() >= 0
        assert np.all(np.diff(rec.times) > 0)


class TestSampleBorn:
    def test_uniform_density_uniform_cells(self):
        g = _periodic(10)
        psi = presets.uniform(g)
        n = 100_000
        pts = sample_born(psi, n, seed=11)
        counts, _ = np.histogramdd(pts, bins=(5, 5, 5), range=[(0, 1)] * 3)
        p = 1 / 125
        sigma = np.sqrt(n * p * (1 - p))
        assert np.max(np.abs(counts - n * p)) < 4 * sigma

    def test_single_cell_support(self):
        g = _periodic(10)
        vals = np.zeros(g.shape, dtype=complex)
        vals[4, 7, 2] = 1.0  # support inside one grid cell's corner set
        psi = ComplexField(grid=g, values=vals)
        pts = sample_born(psi, 500, seed=3)
        dx = g.spacing[0]
        # all samples must fall in cells adjacent to the lone nonzero node
        assert np.all(np.abs(pts[:, 0] - 4 * dx) <= dx + 1e-12)
        assert np.all(np.abs(pts[:, 1] - 7 * dx) <= dx + 1e-12)
        assert np.all(np.abs(pts[:, 2] - 2 * dx) <= dx + 1e-12)

    def test_box_ground_state_chi2(self):
        g = _box(24)
        psi = presets.box_mode(g, (1, 1, 1))
        pts = sample_born(psi, 10_000, seed=5)
        chi2, dof, p = chi_square_vs_density(pts, psi, bins=(5, 5, 5))
        assert p > 0.01

    def test_deterministic_for_seed(self):
        g = _box(16)
        psi = presets.two_mode(g)
        a = sample_born(psi, 200, seed=9)
        b = sample_born(psi, 200, seed=9)
        np.testing.assert_array_equal(a, b)

    def test_zero_field_rejected(self, box_grid):
        psi = ComplexField(grid=box_grid, values=np.zeros(box_grid.shape, dtype=complex))
        with pytest.raises(DegenerateDensityError):
            sample_born(psi, 10, seed=0)


class TestInvariants:
    def test_velocity_field_consistency_weak(self):
        # d_t |psi|^2 + div(|psi|^2 v) = 0 tested against a smooth window
        g = _periodic(28)
        psi = presets.gaussian(g, width=0.12, momentum=(4.0, 0.0, 0.0))
        params = PhysicalParams()
        solver = SchrodingerSolver(g, params)
        dt = 5e-4
        before = solver.step(psi.values.copy(), dt)  # t = dt
        after = solver.step(before.copy(), dt)  # t = 2 dt
        mid = before
        drho_dt = (np.abs(after) ** 2 - np.abs(psi.values) ** 2) / (2 * dt)
        grads = gradient_arrays(mid, g)
        with np.errstate(invalid="ignore", divide="ignore"):
            v = [np.imag(gr / mid) for gr in grads]
        rho = np.abs(mid) ** 2
        flux = [rho * vi for vi in v]
        div = sum(gradient_arrays(f, g)[i] for i, f in enumerate(flux))
        X, Y, Z = g.meshgrid()
        w = np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2 + (Z - 0.5) ** 2) / 0.05)
        resid = np.sum(w * (drho_dt + div)) * g.cell_volume
        scale = np.sum(w * np.abs(drho_dt)) * g.cell_volume
        assert abs(resid) < 2e-2 * scale

    def test_no_crossing_in_separable_slab(self):
        # 1-D-like field: x-velocity depends on x alone, so the x-order of
        # particles sharing (y, z) is preserved
        g = _box(20)
        from pilotwave.core import zero_dirichlet_boundary

        X, Y, Z = g.meshgrid()
        vals = (np.sin(np.pi * X) + 0.5 * np.sin(2 * np.pi * X)) * np.sin(
            np.pi * Y
        ) * np.sin(np.pi * Z)
        psi = ComplexField(grid=g, values=zero_dirichlet_boundary(vals.astype(complex)))
        xs = np.linspace(0.25, 0.75, 12)
        pts = np.stack([xs, np.full(12, 0.5), np.full(12, 0.5)], axis=1)
        current = psi
        positions = pts
        for _ in range(10):
            positions, alive, current = advect_ensemble(
                current, positions, 0.01, 1e-3
            )
            assert np.all(alive)
            assert np.all(np.diff(positions[:, 0]) > 0)

    def test_equivariance_small_ensemble(self):
        g = _periodic(24)
        psi = presets.gaussian(g, width=0.1)
        pts = sample_born(psi, 4000, seed=2)
        final, alive, psi_T = advect_ensemble(psi, pts, 0.004, 1e-4)
        chi2, dof, p = chi_square_vs_density(final[alive], psi_T, bins=(4, 4, 4))
        assert p > 0.01
