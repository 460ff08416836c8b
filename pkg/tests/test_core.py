import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pilotwave.core import (
    ComplexField,
    ConfigError,
    Grid3,
    ParticleState,
    PhysicalParams,
    SuperluminalError,
    derive_scales,
    lorentz_gamma,
    sigma,
    wrap_phase,
)


class TestPhysicalParams:
    def test_rejects_same_sign_couplings(self):
        with pytest.raises(ConfigError):
            PhysicalParams(coupling_a=4 * math.pi, coupling_b=1.0)

    def test_rejects_weak_offset(self):
        # |a| must exceed 2 pi |b| so sigma keeps one sign
        with pytest.raises(ConfigError):
            PhysicalParams(coupling_a=-6.0, coupling_b=1.0)

    def test_zero_coupling_allowed(self):
        p = PhysicalParams(coupling_b=0.0)
        assert p.coupling_b == 0.0

    def test_rejects_nonpositive_scales(self):
        with pytest.raises(ConfigError):
            PhysicalParams(mass=0.0)
        with pytest.raises(ConfigError):
            PhysicalParams(kappa=-0.1)

    def test_default_singular_density_preset(self):
        # preset pins omega_s = omega_c, i.e. rho_s = 4 m^2 c^2 k_c omega_c / hbar
        p = PhysicalParams(light_speed=3.0)
        sc = derive_scales(p)
        assert sc.omega_s == pytest.approx(sc.omega_c, rel=1e-14)
        assert p.singular_density == pytest.approx(4 * 3.0**5, rel=1e-14)


class TestDeriveScales:
    def test_unit_substitution(self):
        p = PhysicalParams(light_speed=1.0, singular_density=4.0)
        sc = derive_scales(p)
        assert (sc.omega_c, sc.k_c, sc.omega_s) == (1.0, 1.0, 1.0)

    def test_direct_formula(self):
        sc = derive_scales(PhysicalParams(light_speed=10.0))
        assert sc.omega_c == pytest.approx(100.0)
        assert sc.k_c == pytest.approx(10.0)

    def test_omega_s_matches_omega_c_for_chosen_density(self):
        m, c, hbar = 2.0, 3.0, 1.5
        k_c = m * c / hbar
        omega_c = m * c**2 / hbar
        rho = 4 * m**2 * c**2 * k_c * omega_c / hbar
        sc = derive_scales(
            PhysicalParams(mass=m, light_speed=c, action_const=hbar, singular_density=rho)
        )
        assert sc.omega_s == pytest.approx(sc.omega_c, rel=1e-14)

    def test_mass_scaling(self):
        base = derive_scales(PhysicalParams(mass=1.0, light_speed=2.0))
        scaled = derive_scales(PhysicalParams(mass=3.0, light_speed=2.0))
        assert scaled.omega_c == pytest.approx(3 * base.omega_c)
        assert scaled.k_c == pytest.approx(3 * base.k_c)


class TestLorentzGamma:
    def test_rest_frame(self):
        assert lorentz_gamma(np.zeros(3), 1.0) == 1.0

    def test_textbook_identity(self):
        assert lorentz_gamma(np.array([0.6, 0.0, 0.0]), 1.0) == pytest.approx(1.25)

    def test_near_and_at_light_speed(self):
        g = lorentz_gamma(np.array([0.99999, 0.0, 0.0]), 1.0)
        assert g > 200 and math.isfinite(g)
        with pytest.raises(SuperluminalError):
            lorentz_gamma(np.array([1.0, 0.0, 0.0]), 1.0)


class TestSigma:
    def test_direct_substitution(self):
        p = PhysicalParams(coupling_a=-4 * math.pi, coupling_b=1.0)
        assert sigma(math.pi, p) == pytest.approx(-3 * math.pi)

    def test_periodicity(self):
        p = PhysicalParams()
        for theta in (-7.3, 0.0, 2.2, 9.9):
            assert sigma(theta, p) == pytest.approx(sigma(theta + 2 * math.pi, p))

    @given(st.floats(min_value=-10 * math.pi, max_value=10 * math.pi))
    def test_sign_definite(self, theta):
        p = PhysicalParams(coupling_a=-4 * math.pi, coupling_b=1.0)
        s = sigma(theta, p)
        assert s / p.coupling_b < 0
        assert -4 * math.pi < s <= -2 * math.pi

    @given(st.floats(min_value=-50.0, max_value=50.0))
    def test_wrap_range(self, theta):
        w = wrap_phase(theta)
        assert 0.0 < w <= 2 * math.pi + 1e-12


class TestGrid3:
    def test_spacing_conventions(self):
        gd = Grid3(points=(11, 11, 11), extents=(1.0, 1.0, 1.0), boundary="dirichlet")
        gp = Grid3(points=(10, 10, 10), extents=(1.0, 1.0, 1.0), boundary="periodic")
        assert gd.spacing[0] == pytest.approx(0.1)
        assert gp.spacing[0] == pytest.approx(0.1)

    def test_minimum_points(self):
        with pytest.raises(ConfigError):
            Grid3(points=(7, 16, 16), extents=(1.0, 1.0, 1.0))

    def test_interiority(self):
        g = Grid3(points=(16, 16, 16), extents=(2.0, 2.0, 2.0))
        assert g.is_interior(np.array([1.0, 1.0, 1.0]))
        assert not g.is_interior(np.array([0.0, 1.0, 1.0]))


class TestComplexField:
    def test_boundary_enforced(self, box_grid):
        vals = np.ones(box_grid.shape, dtype=complex)
        with pytest.raises(ConfigError):
            ComplexField(grid=box_grid, values=vals)

    def test_shape_enforced(self, box_grid):
        with pytest.raises(ConfigError):
            ComplexField(grid=box_grid, values=np.zeros((4, 4, 4), dtype=complex))

    def test_values_frozen(self, box_grid):
        vals = np.zeros(box_grid.shape, dtype=complex)
        f = ComplexField(grid=box_grid, values=vals)
        with pytest.raises(ValueError):
            f.values[2, 2, 2] = 1.0


class TestParticleState:
    def test_superluminal_rejected(self):
        with pytest.raises(SuperluminalError):
            ParticleState.make([0.5, 0.5, 0.5], [2.0, 0.0, 0.0], light_speed=1.0)

    def test_outside_domain_rejected(self):
        g = Grid3(points=(16, 16, 16), extents=(1.0, 1.0, 1.0))
        with pytest.raises(ConfigError):
            ParticleState.make([1.5, 0.5, 0.5], [0.0, 0.0, 0.0], 1.0, grid=g)

    def test_gamma_consistency(self):
        p = ParticleState.make([0.5, 0.5, 0.5], [0.6, 0.0, 0.0], light_speed=1.0)
        assert p.gamma == pytest.approx(1.25, rel=1e-14)
        p.check_consistent(1.0)
        bad = ParticleState(position=p.position, velocity=p.velocity, gamma=2.0)
        with pytest.raises(ConfigError):
            bad.check_consistent(1.0)
