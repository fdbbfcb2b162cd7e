import math

import numpy as np
import pytest

from vml_lab import kinetic_core
from vml_lab.errors import DomainError, GridError
from vml_lab.euler_waves import GasState
from vml_lab.kinetic_core import GLOBAL_STATE, KineticField, VelocityGrid, WeightSpec
from vml_lab.landau_kernel import LandauKernel, direct_matrix

GRID = VelocityGrid(11, 5.0)


def test_velocity_grid_validation():
    with pytest.raises(GridError):
        VelocityGrid(10, 5.0)
    with pytest.raises(GridError):
        VelocityGrid(7, 5.0)
    with pytest.raises(GridError):
        VelocityGrid(11, 0.0)


def test_velocity_grid_geometry():
    assert GRID.h == pytest.approx(1.0)
    assert GRID.axis[5] == 0.0
    assert GRID.v.shape == (3, 11, 11, 11)
    assert GRID.integrate(np.ones(GRID.shape)) == pytest.approx(11**3)


def test_grid_for_state_is_wide_enough():
    state = GasState(1.0, (2.0, 0.0, 0.0), 1.5)
    grid = VelocityGrid.for_state(state, 15)
    assert grid.v_max == pytest.approx(2.0 + 8.0)


def test_kinetic_field_grid_checks():
    with pytest.raises(GridError):
        KineticField(GRID, np.zeros((9, 9, 9)))
    other = KineticField(VelocityGrid(11, 4.0), np.zeros((11, 11, 11)))
    with pytest.raises(GridError):
        KineticField(GRID, np.zeros(GRID.shape)) + other


def test_flat_dump_runs_v1_fastest():
    frame = kinetic_core.global_maxwellian(GRID).to_frame()

    assert len(frame) == 11**3
    assert list(frame["v1"][:2]) == [-5.0, -4.0]
    assert frame["v2"][0] == frame["v2"][1] == -5.0
    assert frame["v2"][11] == -4.0


def test_moments_recover_the_maxwellian_state():
    state = GasState(1.2, (0.3, -0.2, 0.1), 1.4)
    m = kinetic_core.moments(kinetic_core.maxwellian(state, GRID))

    assert m.rho == pytest.approx(1.2, rel=1e-4)
    assert np.allclose(m.momentum / m.rho, [0.3, -0.2, 0.1], atol=1e-4)
    assert float(m.state.theta) == pytest.approx(1.4, rel=1e-4)


def test_moments_of_a_signed_field():
    with pytest.raises(DomainError):
        kinetic_core.moments(-kinetic_core.global_maxwellian(GRID))


def test_hydro_projection():
    # Create a field with a microscopic part
    M = kinetic_core.global_maxwellian(GRID)
    f = KineticField(GRID, M.values * (1.0 + 0.1 * GRID.v[0] * GRID.v[1] + 0.2 * GRID.v[0]))

    p0, p1 = kinetic_core.project_hydro(f, GLOBAL_STATE)
    basis = kinetic_core.hydro_basis(GLOBAL_STATE, GRID)
    assert np.allclose((p0 + p1).values, f.values)
    assert np.max(np.abs(basis.coefficients(p1.values))) < 1e-12
    again, _ = kinetic_core.project_hydro(p0, GLOBAL_STATE)
    assert np.allclose(again.values, p0.values, atol=1e-14)

    # The Maxwellian itself is hydrodynamic
    p0, p1 = kinetic_core.project_hydro(M, GLOBAL_STATE)
    assert p1.norm() < 1e-12 * M.norm()


def test_charge_projection():
    M = kinetic_core.global_maxwellian(GRID)
    f = KineticField(GRID, M.values * (0.5 + GRID.v[0]))

    pd_, pr = kinetic_core.project_charge(f, GLOBAL_STATE)
    assert abs(GRID.integrate(pr.values)) < 1e-12
    assert np.allclose(pd_.values, 0.5 * M.values, atol=1e-12)


def test_symmetric_projection_is_orthogonal():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(GRID.shape) * kinetic_core.sqrt_mu(GRID)

    p0, p1 = kinetic_core.symmetric_projection(x, GRID)
    assert abs(float(np.sum(p0 * p1))) < 1e-10 * float(np.sum(x * x))


def test_weight_spec_validation():
    with pytest.raises(DomainError):
        WeightSpec(q2=0.5)
    with pytest.raises(DomainError):
        WeightSpec(q1=1.0)
    with pytest.raises(DomainError):
        WeightSpec(l=1, alpha_order=1, beta_order=1)


def test_weight_omega():
    spec = WeightSpec(l=2, q1=0.5, q2=0.25)

    assert spec.q(3.0) == pytest.approx(0.125)
    at_rest = kinetic_core.weight_omega(spec, 0.0, np.zeros(3))
    assert at_rest == pytest.approx(math.exp(0.125))
    v = np.array([1.0, 1.0, 1.0])
    assert kinetic_core.weight_omega(spec.orders(1), 0.0, v) == pytest.approx(4.0 * math.exp(0.5))
    assert kinetic_core.weight_omega(spec, 0.0, GRID).shape == GRID.shape


def test_weighted_maxwellian_integral_condition():
    admissible = kinetic_core.weighted_maxwellian_integral(WeightSpec(q2=0.25), GLOBAL_STATE, GRID)
    inadmissible = kinetic_core.weighted_maxwellian_integral(WeightSpec(q2=0.45), GLOBAL_STATE, GRID)

    assert admissible[1]
    assert not inadmissible[1]
    assert admissible[0] > 0


def test_sigma_matrix_is_symmetric_and_positive():
    sigma = kinetic_core.sigma_matrix(GRID)

    assert sigma.shape == (3, 3) + GRID.shape
    assert np.allclose(sigma[0, 1], sigma[1, 0])
    assert np.all(sigma[0, 0] > 0)
    with pytest.raises(DomainError):
        kinetic_core.sigma_matrix(GRID, gamma=-2.0)


def test_sigma_norms_are_positive():
    f = KineticField(GRID, GRID.v[0] * kinetic_core.sqrt_mu(GRID))

    assert kinetic_core.sigma_norm(f) > 0
    assert kinetic_core.sigma_surrogate(f) > 0
    weighted = kinetic_core.sigma_norm(f, weight=WeightSpec(), t=0.0)
    assert weighted > kinetic_core.sigma_norm(f)


def test_fft_kernel_matches_direct_sum():
    n, h, gamma = 9, 1.0, -3.0
    rng = np.random.default_rng(1)
    f = rng.uniform(0.5, 1.5, (n, n, n))

    fast = LandauKernel(n, h, gamma).matrix(f)
    slow = direct_matrix(n, h, gamma, f)
    assert np.max(np.abs(fast - slow)) < 1e-10 * np.max(np.abs(slow))
