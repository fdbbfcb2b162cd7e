import json

import pytest

from vml_lab import experiment_config
from vml_lab.errors import ConfigError

FLUID_CONFIG = """
# rarefaction run
name = small-run
mode = fluid-run
state.right.rho = 1.1
fluid.eps = 2e-2
fluid.nx = 120
runtime.formats = csv, json
"""


def test_parse_flat_applies_defaults():
    spec = experiment_config.parse_config(FLUID_CONFIG)

    assert spec.name == "small-run"
    assert spec.mode == "fluid-run"
    assert spec.fluid.eps == 2e-2
    assert spec.fluid.nx == 120
    assert spec.fluid.a == 0.5
    assert spec.state.left == {"rho": 1.0, "u1": 0.0, "theta": 1.5}
    assert spec.state.right == {"rho": 1.1}
    assert spec.runtime.formats == ("csv", "json")
    assert spec.seed == 0


def test_parse_json_matches_flat():
    document = {
        "name": "small-run",
        "mode": "fluid-run",
        "state": {"right": {"rho": 1.1}},
        "fluid": {"eps": 2e-2, "nx": 120},
        "runtime": {"formats": ["csv", "json"]},
    }
    spec = experiment_config.parse_config(json.dumps(document))

    assert spec.as_flat() == experiment_config.parse_config(FLUID_CONFIG).as_flat()


def test_format_flat_reparses():
    spec = experiment_config.parse_config(FLUID_CONFIG)
    again = experiment_config.parse_config(experiment_config.format_flat(spec))

    assert again.as_flat() == spec.as_flat()


def test_unknown_key_suggests_the_nearest():
    with pytest.raises(ConfigError) as info:
        experiment_config.parse_config("mode = wave\nfluid.esp = 0.1\n")
    assert info.value.line == 2
    assert info.value.key == "fluid.esp"
    assert "fluid.eps" in str(info.value)


def test_duplicate_and_malformed_lines():
    with pytest.raises(ConfigError) as info:
        experiment_config.parse_config("mode = wave\nmode = burgers\n")
    assert info.value.line == 2
    with pytest.raises(ConfigError) as info:
        experiment_config.parse_config("mode = wave\njust words\n")
    assert info.value.line == 2
    with pytest.raises(ConfigError):
        experiment_config.parse_config("mode = wave\nfluid.nx = many\n")


def test_admissible_scaling_exponent():
    with pytest.raises(ConfigError) as info:
        experiment_config.parse_config("mode = collision-test\nfluid.a = 0.3\n")
    assert info.value.key == "fluid.a"
    assert "(1/3, 1)" in str(info.value)


def test_mode_and_right_state_are_required():
    with pytest.raises(ConfigError):
        experiment_config.parse_config("fluid.eps = 0.1\n")
    with pytest.raises(ConfigError):
        experiment_config.parse_config("mode = explode\n")
    with pytest.raises(ConfigError) as info:
        experiment_config.parse_config("mode = wave\n")
    assert info.value.key == "state.right.rho"
    assert experiment_config.parse_config("mode = collision-test\n").mode == "collision-test"


def test_energy_bound_factor():
    assert experiment_config.parse_config("mode = collision-test\n").energy.bound_factor == 100.0
    assert experiment_config.parse_config("mode = collision-test\nenergy.bound_factor = 5\n").energy.bound_factor == 5.0
    with pytest.raises(ConfigError) as info:
        experiment_config.parse_config("mode = collision-test\nenergy.bound_factor = 0\n")
    assert info.value.key == "energy.bound_factor"


def test_velocity_grid_sizes():
    with pytest.raises(ConfigError):
        experiment_config.parse_config("mode = collision-test\ncollision.n = 10\n")
    with pytest.raises(ConfigError):
        experiment_config.parse_config("mode = collision-test\ncollision.refinement = 9, 12\n")


def test_sweep_values():
    base = "mode = sweep\nstate.right.rho = 1.1\n"
    spec = experiment_config.parse_config(base + "sweep.values = 5e-3, 4e-2, 1e-2, 2e-2\nsweep.parameter = delta\n")
    assert spec.sweep.values == (5e-3, 1e-2, 2e-2, 4e-2)

    with pytest.raises(ConfigError):
        experiment_config.parse_config(base + "sweep.values = 1e-2, 2e-2, 4e-2\n")
    with pytest.raises(ConfigError):
        experiment_config.parse_config(base + "sweep.values = 1e-2, 1e-2, 2e-2, 4e-2\n")
    with pytest.raises(ConfigError) as info:
        experiment_config.parse_config(base + "sweep.values = 1e-2, 2e-2, 4e-2, 8e-2\n")
    assert "1.5 decades" in str(info.value)
    spec = experiment_config.parse_config(base + "sweep.values = 1e-3, 4e-3, 1.6e-2, 6.4e-2\n")
    assert len(spec.sweep.values) == 4


def test_load_config_with_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("VML_OUTPUT_ROOT", str(tmp_path / "bundles"))
    path = tmp_path / "run.cfg"
    path.write_text(FLUID_CONFIG)

    spec = experiment_config.load_config(str(path), {"fluid.eps": "5e-3", "runtime.seed": 7, "runtime.out": None})
    assert spec.fluid.eps == 5e-3
    assert spec.seed == 7
    assert spec.runtime.out == str(tmp_path / "bundles")

    with pytest.raises(ConfigError):
        experiment_config.load_config(str(tmp_path / "missing.cfg"))


def test_with_overrides_validates():
    spec = experiment_config.parse_config(FLUID_CONFIG)

    assert spec.with_overrides(**{"fluid.eps": 1e-3}).fluid.eps == 1e-3
    with pytest.raises(ConfigError):
        spec.with_overrides(**{"fluid.a": 0.9999, "fluid.eps": -1.0})
    with pytest.raises(ConfigError):
        spec.with_overrides(**{"fluid.epsilon": 1e-3})
