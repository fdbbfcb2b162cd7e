import numpy as np
import pytest

from vml_lab import euler_waves, fluid_solver
from vml_lab.burgers_profile import WaveProfile
from vml_lab.errors import ConfigError, TimeStepError, VacuumError
from vml_lab.euler_waves import GasState
from vml_lab.fluid_solver import ClosureFlags, Perturbation, RunConfig
from vml_lab.landau_collision import TransportCoeffs, TransportTable


def get_config(**kwargs) -> RunConfig:
    profile = WaveProfile(euler_waves.rarefaction_data(GasState(1.0, 0.0, 1.5), 1.1), 0.2)
    transport = TransportTable.constant(TransportCoeffs(0.05, 0.05, 0.05, 1.5))
    options = dict(eps=1e-2, a=0.5, nx=64, t_end=0.2, output_every=0.1)
    options.update(kwargs)
    return RunConfig(profile, transport, **options)


def test_run_config_validation():
    with pytest.raises(ConfigError):
        get_config(a=0.3)
    with pytest.raises(ConfigError):
        get_config(eps=0.0)
    with pytest.raises(ConfigError):
        get_config(domain=(1.0, -1.0))
    with pytest.raises(ConfigError):
        Perturbation("spike")


def test_initial_state_is_the_wave():
    config = get_config()
    state = fluid_solver.initialize(config)

    wave = config.profile.state(0.0, state.grid.centers)
    P = state.primitives
    assert state.t == 0.0
    assert np.allclose(P.rho, wave.rho, rtol=1e-12)
    assert np.allclose(P.u[0], wave.u1, atol=1e-12)
    assert np.allclose(P.theta, wave.theta, rtol=1e-12)
    assert np.all(state.U[fluid_solver.N :] == 0.0)


def test_conservative_round_trip():
    U = fluid_solver.conservative(np.array([1.0, 2.0]), (np.array([0.5, -0.5]), 0.0, 0.1), np.array([1.5, 1.0]))
    P = fluid_solver.Primitives(U)

    assert U.shape == (11, 2)
    assert np.allclose(P.theta, [1.5, 1.0])
    assert np.allclose(P.u[2], 0.1)


def test_run_samples_every_output_time():
    history = fluid_solver.run(get_config())

    assert np.allclose(history.times, [0.0, 0.1, 0.2])
    assert len(history.invariants) == 3
    assert history.failure is None
    assert list(history.frame().columns) == fluid_solver.SNAPSHOT_COLUMNS
    assert len(history.frame()) == 3 * 64
    assert history.invariants["min_rho"].min() > 0.9


def test_run_conserves_mass():
    history = fluid_solver.run(get_config())
    budget = fluid_solver.conservation_budget(history)

    assert budget["mass"].max() < 1e-12
    assert budget["charge"].max() < 1e-12


def test_neutral_run_stays_neutral():
    history = fluid_solver.run(get_config())

    final = history.final
    assert np.all(final.U[fluid_solver.N] == 0.0)
    assert fluid_solver.gauss_residual(final) == 0.0


def test_gauss_law_is_carried_by_the_scheme():
    config = get_config(perturbation=Perturbation("charge", 1e-3, 1.0, seed=3))
    history = fluid_solver.run(config)

    residuals = history.invariants["gauss_residual"]
    assert residuals.max() <= 10.0 * max(residuals.iloc[0], 1e-13)
    assert np.any(history.final.U[fluid_solver.N] != 0.0)


def test_navier_stokes_without_fields():
    config = get_config(flags=ClosureFlags(em=False), perturbation=Perturbation("rho", 1e-2))
    state = fluid_solver.initialize(config)

    dU = fluid_solver.rhs(state)
    assert np.all(dU[fluid_solver.N :] == 0.0)
    history = fluid_solver.run(config)
    assert np.all(history.final.U[fluid_solver.E1] == 0.0)


def test_step_respects_the_stability_limit():
    state = fluid_solver.initialize(get_config())
    limit = fluid_solver.stable_dt(state)

    with pytest.raises(TimeStepError):
        fluid_solver.step(state, 2.0 * limit)
    with pytest.raises(TimeStepError):
        fluid_solver.step(state, 0.0)
    later = fluid_solver.step(state, limit)
    assert later.t == pytest.approx(limit)


def test_vacuum_failure_keeps_the_history():
    config = get_config(perturbation=Perturbation("rho", -2.0, 1.0))

    with pytest.raises(VacuumError) as info:
        fluid_solver.run(config)
    history = info.value.history
    assert history is not None
    assert len(history.snapshots) == 1
    assert history.failure_time > 0.0
    assert "vacuum" in history.failure
