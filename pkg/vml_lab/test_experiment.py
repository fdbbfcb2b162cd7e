import functools

import numpy as np
import pandas as pd
import pytest

from vml_lab import experiment
from vml_lab.experiment import ExperimentResult
from vml_lab.experiment_config import parse_config

WAVE_CONFIG = """
name = wave-check
mode = wave
state.right.rho = 1.1
wave.samples = 5
wave.points = 41
wave.times = 0, 1
"""


def get_spec(text: str = WAVE_CONFIG, **overrides):
    spec = parse_config(text)
    return spec.with_overrides(**overrides) if overrides else spec


@functools.lru_cache(maxsize=1)
def get_wave_result() -> ExperimentResult:
    return experiment.run_experiment(get_spec())


def get_sweep_table(exponent: float = 0.1) -> pd.DataFrame:
    # Create an exact power law over 2 decades, ordered by decreasing eps
    eps = np.array([1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    table = pd.DataFrame({column: np.zeros(len(eps)) for column in experiment.SWEEP_COLUMNS})
    table["value"] = eps
    table["eps"] = eps
    table["delta"] = 0.2
    table["a"] = 0.5
    table["T"] = 1.0
    table["error_fan"] = 2.0 * eps**exponent
    table["error_smoothed_sq"] = eps**1.5
    table["bound_smoothed"] = eps**1.5 / 0.2**3
    return table


def test_wave_mode_tables_and_verdicts():
    result = get_wave_result()

    assert result.error is None
    assert result.passed
    assert set(result.tables) == {"wave_profile", "decay", "decay_exponents"}
    assert len(result.tables["wave_profile"]) == 2 * 41
    assert len(result.tables["decay"]) == 3 * 5
    checks = {v.check for v in result.verdicts}
    assert checks == {"riemann_data_valid", "invariants_along_curve", "fan_identity"}


def test_wave_profile_has_no_fan_at_time_zero():
    frame = get_wave_result().tables["wave_profile"]

    at_zero = frame[frame["t"] == 0.0]
    assert at_zero["rho_fan"].isna().all()
    assert not frame[frame["t"] == 1.0]["rho_fan"].isna().any()


def test_wave_mode_is_deterministic():
    again = experiment.run_experiment(get_spec())

    for name, frame in get_wave_result().tables.items():
        pd.testing.assert_frame_equal(frame, again.tables[name])


def test_compressive_data_are_recorded_not_raised():
    result = experiment.run_experiment(get_spec(**{"state.right.rho": 0.9}))

    assert not result.passed
    assert result.error["stage"] == "riemann"
    assert result.error["type"] == "InvalidRiemannDataError"
    failed = [v.check for v in result.verdicts if not v.passed]
    assert failed == ["riemann_data_valid"]


def test_riemann_data_from_density_alone():
    data = experiment.riemann_data(get_spec())

    assert data.right.rho == pytest.approx(1.1)
    assert data.right.theta == pytest.approx(1.5 * 1.1 ** (2.0 / 3.0))


def test_collision_mode_verdicts():
    spec = get_spec("mode = collision-test\ncollision.random_fields = 2\n")
    result = experiment.run_experiment(spec)

    assert result.error is None
    verdicts = {v.check: v for v in result.verdicts}
    for name in ("mass_conservation", "maxwellian_equilibrium", "self_adjoint", "coercivity_positive"):
        assert verdicts[name].passed, name
    assert len(result.tables["collision_fields"]) == 2
    assert list(result.tables["coercivity"]["n"]) == [11]


def test_sweep_verdicts_recover_a_power_law():
    spec = get_spec("mode = sweep\nstate.right.rho = 1.1\nsweep.values = 1e-3, 3e-3, 1e-2, 3e-2, 1e-1\n")
    result = ExperimentResult(spec)

    experiment._sweep_verdicts(spec, result, get_sweep_table())
    assert result.summary["rate_fit"]["exponent"] == pytest.approx(0.1)
    assert result.summary["rate_fit"]["target"] == pytest.approx(0.1)
    assert result.summary["bound_constant"] == pytest.approx(0.2**3)
    assert result.passed
    assert result.plots[0].fit is not None


def test_sweep_verdicts_flag_a_slow_rate():
    spec = get_spec("mode = sweep\nstate.right.rho = 1.1\nsweep.values = 1e-3, 3e-3, 1e-2, 3e-2, 1e-1\n")
    result = ExperimentResult(spec)

    experiment._sweep_verdicts(spec, result, get_sweep_table(exponent=0.05))
    verdicts = {v.check: v.passed for v in result.verdicts}
    assert not verdicts["fan_rate_exponent"]
    assert verdicts["fan_error_monotone"]
    assert not result.passed


def test_sweep_fails_on_a_gauss_residual():
    spec = get_spec("mode = sweep\nstate.right.rho = 1.1\nsweep.values = 1e-3, 3e-3, 1e-2, 3e-2, 1e-1\n")
    result = ExperimentResult(spec)
    table = get_sweep_table()
    table.loc[2, "gauss_residual"] = 1e3

    experiment._sweep_verdicts(spec, result, table)
    verdicts = {v.check: v.passed for v in result.verdicts}
    assert not verdicts["gauss_law"]
    assert verdicts["fan_rate_exponent"]
    assert not result.passed


def test_sweep_fails_on_an_unbounded_energy():
    spec = get_spec("mode = sweep\nstate.right.rho = 1.1\nsweep.values = 1e-3, 3e-3, 1e-2, 3e-2, 1e-1\n")
    result = ExperimentResult(spec)
    table = get_sweep_table()
    table["E_tilde_max"] = 1e6

    experiment._sweep_verdicts(spec, result, table)
    verdicts = {v.check: v.passed for v in result.verdicts}
    assert verdicts["gauss_law"]
    assert not verdicts["energy_bounded"]
    assert not result.passed


def test_sweep_fails_on_a_missing_energy():
    spec = get_spec("mode = sweep\nstate.right.rho = 1.1\nsweep.parameter = delta\nsweep.values = 0.05, 0.1, 0.2, 0.4\n")
    result = ExperimentResult(spec)
    delta = np.array([0.05, 0.1, 0.2, 0.4])
    table = pd.DataFrame({column: np.zeros(len(delta)) for column in experiment.SWEEP_COLUMNS})
    table["value"] = table["delta"] = delta
    table["eps"] = 1e-2
    table["error_fan"] = delta
    table.loc[0, "E_tilde_max"] = np.nan

    experiment._sweep_verdicts(spec, result, table)
    verdicts = {v.check: v.passed for v in result.verdicts}
    assert verdicts["fan_error_grows_with_delta"]
    assert not verdicts["energy_bounded"]


def test_energy_verdicts_flag_a_growing_energy():
    spec = get_spec()
    result = ExperimentResult(spec)
    energy = np.array([0.0, 1e3, 1e6])
    table = pd.DataFrame({"t": [0.0, 0.5, 1.0], "E_tilde": energy, "E_scaled": energy, "error_fan": np.nan})

    experiment.energy_verdicts(spec, result, table, 1e-2, 0.2, 1.0)
    verdicts = {v.check: v for v in result.verdicts}
    assert verdicts["energy_nonnegative"].passed
    assert verdicts["scaling_identity"].passed
    assert not verdicts["energy_bounded"].passed
    assert verdicts["energy_bounded"].value == pytest.approx(1e6 / 100.0)


def test_gauss_verdict_is_relative_to_the_initial_floor():
    result = ExperimentResult(get_spec())

    assert experiment.gauss_verdict(result, [5e-11], [1e-11]).passed
    assert not experiment.gauss_verdict(result, [5e-11], [1e-15]).passed
    assert not experiment.gauss_verdict(result, [np.nan], [1e-11]).passed
