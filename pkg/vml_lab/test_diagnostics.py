import functools
import math

import numpy as np
import pytest

from vml_lab import diagnostics, euler_waves, fitting, fluid_solver
from vml_lab.burgers_profile import EXACT_FAN, WaveProfile
from vml_lab.diagnostics import EnergyOptions
from vml_lab.errors import DomainError, GridError, HistoryError, TimeTooSmallError
from vml_lab.euler_waves import GasState
from vml_lab.fluid_solver import FluidHistory, Perturbation, RunConfig
from vml_lab.kinetic_core import WeightSpec
from vml_lab.landau_collision import TransportCoeffs, TransportTable


def get_config(**kwargs) -> RunConfig:
    profile = WaveProfile(euler_waves.rarefaction_data(GasState(1.0, 0.0, 1.5), 1.1), 0.2)
    transport = TransportTable.constant(TransportCoeffs(0.05, 0.05, 0.05, 1.5))
    options = dict(eps=1e-2, a=0.5, nx=48, t_end=0.2, output_every=0.1)
    options.update(kwargs)
    return RunConfig(profile, transport, **options)


@functools.lru_cache(maxsize=1)
def get_closure():
    return diagnostics.default_closure(n=11, v_max=5.0, threads=2)


@functools.lru_cache(maxsize=1)
def get_history() -> FluidHistory:
    return fluid_solver.run(get_config(perturbation=Perturbation("charge", 1e-3, 1.0, seed=1)))


def test_bounds():
    assert diagnostics.theorem_bound(1e-2, 0.5, 0.2, 1.0) == pytest.approx(1.0)
    assert diagnostics.initial_bound(1e-2, 0.5, 0.2) == pytest.approx(0.25)
    assert diagnostics.coupled_delta(1e-2, 0.5, 1.0) == pytest.approx(2.0**0.4 * 0.01**0.1)
    assert diagnostics.target_exponent(0.5) == pytest.approx(0.1)
    assert diagnostics.target_exponent(0.4) == pytest.approx(0.04)
    assert diagnostics.fan_rate_bound(1e-2, 0.5, 0.0, 0.1) == pytest.approx(math.log(100.0) * 2 * 0.01**0.1 / 0.1)


def test_energy_ceiling():
    assert diagnostics.energy_ceiling(0.0, 1e-2, 0.5, 0.2, 1.0) == pytest.approx(100.0)
    assert diagnostics.energy_ceiling(3.0, 1e-2, 0.5, 0.2, 1.0, factor=2.0) == pytest.approx(8.0)
    # a negative initial energy does not lower the ceiling
    assert diagnostics.energy_ceiling(-1.0, 1e-2, 0.5, 0.2, 1.0) == pytest.approx(100.0)
    with pytest.raises(DomainError):
        diagnostics.energy_ceiling(0.0, 1e-2, 0.5, 0.2, 1.0, factor=0.0)


def test_rate_fits_are_reexported():
    assert {"rate_fit", "refinement_order"} <= set(diagnostics.__all__)
    assert diagnostics.refinement_order is fitting.refinement_order
    assert all(hasattr(diagnostics, name) for name in diagnostics.__all__)


def test_default_weight_is_admissible():
    weight = diagnostics.default_weight(1e-2, 0.5, 0.5, 1.0)

    assert 0.0 < weight.q1 < 1.0
    assert weight.q2 == 0.25
    conditions = diagnostics.weight_conditions(1e-2, 0.5, 0.5, 1.0)
    assert set(conditions) == {"eps_T", "interaction", "energy", "q1_min"}
    assert conditions["eps_T"] == pytest.approx(2e-2)


def test_entropy_density():
    assert diagnostics.entropy_density(1.0, np.zeros(3), 1.5, 1.0, np.zeros(3), 1.5) == 0.0
    assert diagnostics.entropy_density(1.1, np.zeros(3), 1.4, 1.0, np.zeros(3), 1.5) > 0.0
    assert diagnostics.entropy_density(1.0, np.array([0.1, 0.0, 0.0]), 1.5, 1.0, np.zeros(3), 1.5) == pytest.approx(0.005)
    with pytest.raises(DomainError):
        diagnostics.entropy_density(-1.0, np.zeros(3), 1.5, 1.0, np.zeros(3), 1.5)


def test_initial_state_has_no_perturbation():
    config = get_config()
    state = fluid_solver.initialize(config)

    pert = diagnostics.perturbation_fields(state, config.profile)
    assert np.max(np.abs(pert.phi)) < 1e-12
    assert np.max(np.abs(pert.psi)) < 1e-12
    assert np.max(np.abs(pert.zeta)) < 1e-12

    eta, q, integral = diagnostics.entropy_pair(state, config.profile, eps=1e-2, a=0.5)
    assert eta.shape == state.grid.centers.shape
    assert abs(integral) < 1e-20


def test_gas_state_inputs_need_coordinates_and_time():
    config = get_config()
    x = np.linspace(-1.0, 1.0, 5)
    state = config.profile.state(0.5, x)

    with pytest.raises(GridError):
        diagnostics.perturbation_fields(state, config.profile, t=0.5)
    with pytest.raises(DomainError):
        diagnostics.perturbation_fields(state, config.profile, x=x)
    with pytest.raises(GridError):
        diagnostics.perturbation_fields(state, config.profile, t=0.5, x=np.zeros(4))
    pert = diagnostics.perturbation_fields(state, config.profile, t=0.5, x=x)
    assert np.max(np.abs(pert.phi)) == 0.0


def test_closure_coefficients_of_the_initial_state():
    config = get_config()
    state = fluid_solver.initialize(config)

    fields = diagnostics.closure_fields(state, config.profile)
    assert set(fields) == set(diagnostics.CLOSURE_NAMES)
    for name in diagnostics.G1_NAMES:
        assert np.max(np.abs(fields[name])) < 1e-12
    for name in diagnostics.G2_NAMES:
        assert np.all(fields[name] == 0.0)

    coefficients = diagnostics.closure_coefficients(state, config.profile)
    assert np.max(np.abs(coefficients["G1"]["B11"])) > 0.0


def test_closure_fields_assembled_on_the_basis():
    basis, params = get_closure()
    history = get_history()

    fields = diagnostics.closure_fields(history.final, history.config.profile, basis=basis)
    nx, n = history.final.grid.nx, params.grid.n
    assert fields["g1"].shape == (nx, n, n, n)
    assert fields["g2"].shape == (nx, n, n, n)
    assert np.max(np.abs(fields["g2"])) > 0.0


def test_wave_error_references():
    config = get_config()
    state = fluid_solver.initialize(config)

    errors = diagnostics.wave_error(state, config.profile)
    assert errors["rho"] < 1e-12
    assert errors["em"] == 0.0
    assert math.isnan(errors["kinetic"])
    assert errors["total"] < 1e-12
    with pytest.raises(TimeTooSmallError):
        diagnostics.wave_error(state, config.profile, reference=EXACT_FAN, h=0.1)
    with pytest.raises(DomainError):
        diagnostics.wave_error(state, config.profile, reference="shock")


def test_wave_error_with_kinetic_part():
    basis, params = get_closure()
    history = get_history()

    errors = diagnostics.wave_error(history.final, history.config.profile, reference=EXACT_FAN, basis=basis, params=params, h=0.1)
    assert errors["kinetic"] > 0.0
    assert errors["total"] == pytest.approx(errors["kinetic"] + errors["em"])


def test_energy_functionals_need_three_snapshots():
    config = get_config()
    history = FluidHistory(config, [fluid_solver.initialize(config)])

    with pytest.raises(HistoryError):
        diagnostics.energy_functionals(history, 1e-2, 0.5, WeightSpec())


def test_energy_report():
    basis, params = get_closure()
    history = get_history()

    report = diagnostics.energy_functionals(history, 1e-2, 0.5, WeightSpec(), EnergyOptions(), basis, params)
    table = report.table
    assert list(table.columns) == diagnostics.REPORT_COLUMNS
    assert len(table) == 3
    assert np.allclose(table["tau"], table["t"] / 0.1)
    assert math.isnan(table["error_fan"].iloc[0])
    assert not math.isnan(table["error_fan"].iloc[-1])
    numeric = table.drop(columns=["error_fan"])
    assert (numeric >= -1e-14).all().all()
    assert np.allclose(table["E_tilde"], table["E_macro"] + table["E_micro"])
    assert np.allclose(table["E_tilde"], table["E_scaled"], rtol=1e-10, atol=0.0)
    assert table["E_tilde"].iloc[-1] > 0.0

    summary = report.summary()
    assert summary["sup_E_tilde"] == pytest.approx(table["E_tilde"].max())


def test_energy_report_without_f_block():
    basis, params = get_closure()
    history = get_history()

    full = diagnostics.energy_functionals(history, 1e-2, 0.5, WeightSpec(), EnergyOptions(), basis, params)
    partial = diagnostics.energy_functionals(history, 1e-2, 0.5, WeightSpec(), EnergyOptions(include_f_block=False), basis, params)
    assert (partial.table["F_omega"] <= full.table["F_omega"] * (1 + 1e-12)).all()
    assert np.allclose(partial.table["E_tilde"], full.table["E_tilde"])


def test_run_with_report_records_vacuum():
    basis, params = get_closure()
    config = get_config(perturbation=Perturbation("rho", -2.0, 1.0))

    history, report = diagnostics.run_with_report(config, basis, params)
    assert report is None
    assert history.failure is not None
    assert len(history.snapshots) == 1


def test_kinetic_grid_for_covers_the_run():
    grid = diagnostics.kinetic_grid_for(get_history(), 15)

    assert grid.n == 15
    assert grid.v_max > 8.0


def test_frozen_closure_vanishes_at_the_global_state():
    basis, params = get_closure()

    errors = diagnostics.frozen_closure_error(GasState(1.0, 0.0, 1.5), params, basis, threads=2)
    assert set(errors) == set(diagnostics.CLOSURE_NAMES) | {"max"}
    assert errors["max"] < 1e-10


def test_frozen_closure_error_is_first_order_in_the_wave_strength():
    basis, params = get_closure()
    left = GasState(1.0, 0.0, 1.5)

    weak = diagnostics.frozen_closure_error(euler_waves.wave_curve_state(left, 1.02), params, basis, threads=2)
    strong = diagnostics.frozen_closure_error(euler_waves.wave_curve_state(left, 1.04), params, basis, threads=2)
    assert 0.0 < strong["max"] < 0.5
    assert 0.25 <= weak["max"] / strong["max"] <= 0.75
