import functools
import json
import math
import os

import numpy as np
import pandas as pd
import pytest

from vml_lab import __version__, experiment, outputs
from vml_lab.errors import OutputError
from vml_lab.experiment import ExperimentResult, PlotSpec
from vml_lab.experiment_config import parse_config
from vml_lab.fitting import rate_fit

WAVE_CONFIG = "name = bundle\nmode = wave\nstate.right.rho = 1.1\nwave.samples = 5\nwave.points = 21\nwave.times = 0, 1\n"


@functools.lru_cache(maxsize=1)
def get_result() -> ExperimentResult:
    return experiment.run_experiment(parse_config(WAVE_CONFIG))


def read_manifest(out_dir) -> dict:
    with open(os.path.join(out_dir, outputs.MANIFEST)) as f:
        return json.load(f)


def test_bundle_files(tmp_path):
    written = outputs.emit_outputs(get_result(), ("csv", "json", "svg"), str(tmp_path))

    names = sorted(os.path.basename(p) for p in written)
    assert names == sorted(
        [
            "decay.csv",
            "decay_exponents.csv",
            "wave_profile.csv",
            "verdicts.csv",
            "summary.json",
            "wave_profile.svg",
            "manifest.json",
        ]
    )
    assert written[-1].endswith(outputs.MANIFEST)


def test_csv_headers(tmp_path):
    outputs.emit_outputs(get_result(), ("csv",), str(tmp_path))

    with open(tmp_path / "verdicts.csv") as f:
        assert f.readline().strip() == "check,value,threshold,passed,detail"
    with open(tmp_path / "wave_profile.csv") as f:
        assert f.readline().strip() == "t,x,rho,u1,theta,rho_fan,u1_fan,theta_fan"
    with open(tmp_path / "decay.csv") as f:
        assert f.readline().strip() == "t,p,order,field,norm,bound,c_fit"


def test_manifest_echoes_the_config(tmp_path):
    outputs.emit_outputs(get_result(), ("json",), str(tmp_path))
    manifest = read_manifest(tmp_path)

    assert manifest["code_version"] == __version__
    assert manifest["config"]["fluid.eps"] == 1e-2
    assert manifest["config"]["wave.points"] == 21
    assert manifest["passed"] is True
    assert manifest["error"] is None
    assert [entry["path"] for entry in manifest["files"]] == ["summary.json"]
    assert len(manifest["verdicts"]) == 3


def test_bundle_hash_is_reproducible(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    outputs.emit_outputs(get_result(), ("csv", "json"), str(first))
    outputs.emit_outputs(get_result(), ("csv", "json"), str(second))

    a, b = read_manifest(first), read_manifest(second)
    assert a["bundle_sha256"] == b["bundle_sha256"]
    assert a["config_sha256"] == b["config_sha256"]


def test_wall_time_is_outside_the_bundle_hash(tmp_path):
    result = get_result()
    files = [{"path": "x.csv", "sha256": "0" * 64}]

    before = outputs.manifest(result, files)["bundle_sha256"]
    slow = ExperimentResult(result.spec, verdicts=result.verdicts, wall_time=result.wall_time + 100.0)
    assert outputs.manifest(slow, files)["bundle_sha256"] == before


def test_empty_formats_write_the_manifest_only(tmp_path):
    written = outputs.emit_outputs(get_result(), (), str(tmp_path))

    assert written == [str(tmp_path / outputs.MANIFEST)]
    assert os.listdir(tmp_path) == [outputs.MANIFEST]
    assert read_manifest(tmp_path)["files"] == []


def test_sweep_plot_with_fit(tmp_path):
    # Create a log-log plot carrying a fitted power law
    eps = np.array([1e-3, 1e-2, 1e-1, 1.0])
    frame = pd.DataFrame({"eps": eps, "error_fan": 3.0 * eps**0.1})
    plot = PlotSpec("sweep_rate", frame, "eps", ["error_fan"], loglog=True, fit=rate_fit(eps, frame["error_fan"]))
    path = str(tmp_path / "sweep_rate.svg")

    outputs.plot_svg(plot, path)
    with open(path) as f:
        text = f.read()
    assert text.lstrip().startswith("<?xml")
    assert "<svg" in text
    assert "<dc:date>" not in text


def test_json_replaces_non_finite_numbers():
    text = outputs.dumps({"a": math.inf, "b": np.float64(np.nan), "c": np.int64(3), "d": (1.5, True)})

    assert json.loads(text) == {"a": None, "b": None, "c": 3, "d": [1.5, True]}


def test_unwritable_output_directory(tmp_path):
    blocker = tmp_path / "taken"
    blocker.write_text("")

    with pytest.raises(OutputError) as info:
        outputs.emit_outputs(get_result(), ("csv",), str(blocker))
    assert str(blocker) in str(info.value)
