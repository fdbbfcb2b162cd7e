import numpy as np
import pytest

from vml_lab import kinetic_core, landau_collision
from vml_lab.errors import DomainError, GridError, NotInRangeError
from vml_lab.euler_waves import GasState
from vml_lab.kinetic_core import GLOBAL_STATE, KineticField, VelocityGrid
from vml_lab.landau_collision import CollisionParams, TransportCoeffs, TransportTable

GRID = VelocityGrid(11, 5.0)
PARAMS = CollisionParams(GRID, -3.0)


def get_bimaxwellian(seed: int = 0) -> KineticField:
    rng = np.random.default_rng(seed)
    parts = []
    for _ in range(2):
        state = GasState(rng.uniform(0.8, 1.2), tuple(rng.uniform(-0.3, 0.3, 3)), rng.uniform(1.2, 1.8))
        parts.append(kinetic_core.maxwellian(state, GRID).values)
    return KineticField(GRID, 0.5 * (parts[0] + parts[1]))


def test_collision_params_validation():
    with pytest.raises(DomainError):
        CollisionParams(GRID, -1.0)


def test_collide_conserves_mass_momentum_energy():
    for seed in range(3):
        residuals = landau_collision.conservation_residuals(get_bimaxwellian(seed), PARAMS)
        assert residuals["mass"] < 1e-12
        assert residuals["momentum"] < 1e-10
        assert residuals["energy"] < 1e-10


def test_maxwellian_is_an_equilibrium():
    mu = kinetic_core.global_maxwellian(GRID)

    q = landau_collision.collide(mu, mu, PARAMS)
    assert np.max(np.abs(q.values)) < 1e-12 * np.max(mu.values)


def test_collide_checks_grids():
    other = kinetic_core.global_maxwellian(VelocityGrid(9, 4.0))
    with pytest.raises(GridError):
        landau_collision.collide(other, other, PARAMS)


def test_entropy_production_needs_positive_field():
    f = get_bimaxwellian()
    assert np.isfinite(landau_collision.entropy_production(f, PARAMS))
    with pytest.raises(DomainError):
        landau_collision.entropy_production(-f, PARAMS)


def test_linearized_operator_is_symmetric_and_dissipative():
    # Create two random perturbations in the sqrt(mu) picture
    rng = np.random.default_rng(2)
    root = kinetic_core.sqrt_mu(GRID)
    x = KineticField(GRID, rng.standard_normal(GRID.shape) * root)
    y = KineticField(GRID, rng.standard_normal(GRID.shape) * root)

    lx, ly = landau_collision.linearized_L(x, PARAMS), landau_collision.linearized_L(y, PARAMS)
    scale = lx.norm() * y.norm()
    assert abs(lx.inner(y) - x.inner(ly)) < 1e-9 * scale
    assert lx.inner(x) <= 1e-12 * lx.norm() * x.norm()


def test_linearized_operator_kills_the_maxwellian():
    root = KineticField(GRID, kinetic_core.sqrt_mu(GRID))

    assert landau_collision.linearized_L(root, PARAMS).norm() < 1e-12 * root.norm()
    assert landau_collision.linearized_calL(root, PARAMS).norm() < 1e-12 * root.norm()


def test_invert_LM_returns_a_microscopic_solution():
    basis = kinetic_core.hydro_basis(GLOBAL_STATE, GRID)
    rhs = GRID.v[0] * GRID.v[1] * basis.M
    rhs = KineticField(GRID, rhs - basis.project(rhs))

    X = landau_collision.invert_LM(rhs, GLOBAL_STATE, PARAMS)
    assert np.max(np.abs(basis.coefficients(X.values))) < 1e-10 * X.norm()
    assert X.norm() > 0


def test_invert_LM_rejects_the_null_space():
    mu = kinetic_core.global_maxwellian(GRID)
    with pytest.raises(NotInRangeError):
        landau_collision.invert_LM(mu, GLOBAL_STATE, PARAMS)


def test_invert_zero_is_zero():
    zero = KineticField(GRID, np.zeros(GRID.shape))
    assert landau_collision.invert_calLM(zero, GLOBAL_STATE, PARAMS).norm() == 0.0


def test_coercivity_ratio_is_positive():
    g = KineticField(GRID, (GRID.v[0] * GRID.v[1] + GRID.speed2 * GRID.v[2]) * kinetic_core.sqrt_mu(GRID))
    assert landau_collision.coercivity_ratio(g, PARAMS) > 0.0

    with pytest.raises(DomainError):
        landau_collision.coercivity_ratio(KineticField(GRID, np.zeros(GRID.shape)), PARAMS)


def test_transport_coefficients_are_positive():
    detail = landau_collision.transport_detail(1.5, PARAMS, threads=2)

    coeffs = detail.coeffs
    assert coeffs.kappa1 > 0
    assert coeffs.kappa2 > 0
    assert coeffs.sigma_theta > 0
    assert np.ptp(detail.kappa2_by_index) < 1e-6 * coeffs.kappa2
    assert detail.burnett.field("B12") is detail.burnett.B[0][1]


def test_transport_coefficients_reject_bad_temperature():
    with pytest.raises(DomainError):
        landau_collision.transport_coefficients(0.0, PARAMS)


def test_transport_coeffs_must_be_positive():
    with pytest.raises(landau_collision.SolverError):
        TransportCoeffs(-1.0, 1.0, 1.0, 1.5)


def test_constant_transport_table():
    coeffs = TransportCoeffs(0.1, 0.2, 0.3, 1.5)
    table = TransportTable.constant(coeffs)

    assert table.mode == "constant"
    assert table.theta_range == (0.75, 3.0)
    at = table.at(1.2)
    assert at.kappa1 == pytest.approx(0.1)
    assert at.sigma_theta == pytest.approx(0.3)
    values = table(np.array([1.0, 2.0]))
    assert np.allclose(values["kappa2"], 0.2)


def test_scaling_exponent():
    assert landau_collision.scaling_exponent(-3.0) == pytest.approx(2.5)


def test_transport_table_rejects_bad_input():
    with pytest.raises(DomainError):
        landau_collision.transport_table((2.0, 1.0), PARAMS)
    with pytest.raises(DomainError):
        landau_collision.transport_table((1.0, 2.0), PARAMS, mode="spline")


def test_correction_Gbar_vanishes_without_gradients():
    G = landau_collision.correction_Gbar((0.0, 0.0), GLOBAL_STATE, PARAMS, 1e-2, 0.5)
    assert G.norm() == 0.0
