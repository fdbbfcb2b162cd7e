"""Experiment configuration: flat ``key = value`` documents or nested JSON.

Every known key has a type and a default; the effective values (defaults
included) are echoed back through ``ExperimentSpec.as_flat()``.
"""
import difflib
import json
import logging
import os
from typing import Dict, List, Tuple

from vml_lab.errors import ConfigError

logger = logging.getLogger(__name__)

MODES = ("wave", "burgers", "collision-test", "burnett", "fluid-run", "sweep")
SWEEP_PARAMETERS = ("eps", "delta")
FORMATS = ("csv", "json", "svg")


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(item) for item in str(text).replace(",", " ").split())


def _strings(text: str) -> Tuple[str, ...]:
    return tuple(item for item in str(text).replace(",", " ").split())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("true", "yes", "on", "1"):
        return True
    if value in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (converter, default); None marks keys without a default
SCHEMA = {
    "name": (str, "experiment"),
    "mode": (str, None),
    "state.left.rho": (float, 1.0),
    "state.left.u1": (float, 0.0),
    "state.left.theta": (float, 1.5),
    "state.right.rho": (float, None),
    "state.right.u1": (float, None),
    "state.right.theta": (float, None),
    "wave.delta": (float, 0.2),
    "wave.kind": (str, "smoothed"),
    "wave.times": (_floats, (0.0, 1.0, 10.0)),
    "wave.t_min": (float, 10.0),
    "wave.t_max": (float, 1000.0),
    "wave.samples": (int, 13),
    "wave.points": (int, 401),
    "fluid.eps": (float, 1e-2),
    "fluid.a": (float, 0.5),
    "fluid.nx": (int, 400),
    "fluid.cfl": (float, 0.4),
    "fluid.t_end": (float, 1.0),
    "fluid.output_every": (float, 0.25),
    "fluid.em": (_bool, True),
    "fluid.cross_terms": (_bool, True),
    "fluid.lorentz_drag": (_bool, True),
    "fluid.transport": (str, "table"),
    "fluid.perturbation": (str, "none"),
    "fluid.perturbation_amplitude": (float, 1e-3),
    "fluid.perturbation_width": (float, 1.0),
    "collision.n": (int, 11),
    "collision.v_max": (float, 5.0),
    "collision.gamma": (float, -3.0),
    "collision.table_mode": (str, "scaling"),
    "collision.table_nodes": (int, 9),
    "collision.random_fields": (int, 20),
    "collision.refinement": (_floats, ()),
    "collision.thetas": (_floats, (1.2, 1.5, 1.8)),
    "collision.decay_check": (_bool, True),
    "weight.l": (int, 2),
    "weight.q1": (float, None),
    "weight.q2": (float, 0.25),
    "energy.report": (_bool, True),
    "energy.include_beta": (_bool, False),
    "energy.include_f_block": (_bool, True),
    "energy.fan_h": (float, 0.1),
    "energy.bound_factor": (float, 100.0),
    "sweep.parameter": (str, "eps"),
    "sweep.values": (_floats, ()),
    "sweep.couple_delta": (_bool, True),
    "runtime.out": (str, None),
    "runtime.formats": (_strings, ("csv", "json", "svg")),
    "runtime.threads": (int, None),
    "runtime.seed": (int, 0),
}


class StateConfig:
    def __init__(self, left: dict = None, right: dict = None):
        self.left = {"rho": 1.0, "u1": 0.0, "theta": 1.5, **(left or {})}
        self.right = {k: v for k, v in (right or {}).items() if v is not None}


class WaveConfig:
    def __init__(
        self,
        delta: float = 0.2,
        kind: str = "smoothed",
        times: tuple = (0.0, 1.0, 10.0),
        t_min: float = 10.0,
        t_max: float = 1000.0,
        samples: int = 13,
        points: int = 401,
    ):
        self.delta = delta
        self.kind = kind
        self.times = tuple(times)
        self.t_min = t_min
        self.t_max = t_max
        self.samples = samples
        self.points = points


class FluidConfig:
    def __init__(
        self,
        eps: float = 1e-2,
        a: float = 0.5,
        nx: int = 400,
        cfl: float = 0.4,
        t_end: float = 1.0,
        output_every: float = 0.25,
        em: bool = True,
        cross_terms: bool = True,
        lorentz_drag: bool = True,
        transport: str = "table",
        perturbation: str = "none",
        perturbation_amplitude: float = 1e-3,
        perturbation_width: float = 1.0,
    ):
        self.eps = eps
        self.a = a
        self.nx = nx
        self.cfl = cfl
        self.t_end = t_end
        self.output_every = output_every
        self.em = em
        self.cross_terms = cross_terms
        self.lorentz_drag = lorentz_drag
        self.transport = transport
        self.perturbation = perturbation
        self.perturbation_amplitude = perturbation_amplitude
        self.perturbation_width = perturbation_width


class CollisionConfig:
    def __init__(
        self,
        n: int = 11,
        v_max: float = 5.0,
        gamma: float = -3.0,
        table_mode: str = "scaling",
        table_nodes: int = 9,
        random_fields: int = 20,
        refinement: tuple = (),
        thetas: tuple = (1.2, 1.5, 1.8),
        decay_check: bool = True,
    ):
        self.n = n
        self.v_max = v_max
        self.gamma = gamma
        self.table_mode = table_mode
        self.table_nodes = table_nodes
        self.random_fields = random_fields
        self.refinement = tuple(int(n) for n in refinement)
        self.thetas = tuple(thetas)
        self.decay_check = decay_check


class WeightConfig:
    def __init__(self, l: int = 2, q1: float = None, q2: float = 0.25):
        self.l = l
        self.q1 = q1
        self.q2 = q2


class EnergyConfig:
    def __init__(
        self,
        report: bool = True,
        include_beta: bool = False,
        include_f_block: bool = True,
        fan_h: float = 0.1,
        bound_factor: float = 100.0,
    ):
        self.report = report
        self.include_beta = include_beta
        self.include_f_block = include_f_block
        self.fan_h = fan_h
        self.bound_factor = bound_factor


class SweepConfig:
    def __init__(self, parameter: str = "eps", values: tuple = (), couple_delta: bool = True):
        self.parameter = parameter
        self.values = tuple(sorted(values))
        self.couple_delta = couple_delta


class RuntimeConfig:
    def __init__(self, out: str = None, formats: tuple = FORMATS, threads: int = None, seed: int = 0):
        self.out = out or os.environ.get("VML_OUTPUT_ROOT", "out")
        self.formats = tuple(formats)
        self.threads = threads or int(os.environ.get("VML_THREADS", "4"))
        self.seed = seed


class ExperimentSpec:
    def __init__(
        self,
        mode: str,
        name: str = "experiment",
        state: dict = None,
        wave: dict = None,
        fluid: dict = None,
        collision: dict = None,
        weight: dict = None,
        energy: dict = None,
        sweep: dict = None,
        runtime: dict = None,
    ):
        self.mode = mode
        self.name = name
        self.state = StateConfig(**(state or {}))
        self.wave = WaveConfig(**(wave or {}))
        self.fluid = FluidConfig(**(fluid or {}))
        self.collision = CollisionConfig(**(collision or {}))
        self.weight = WeightConfig(**(weight or {}))
        self.energy = EnergyConfig(**(energy or {}))
        self.sweep = SweepConfig(**(sweep or {}))
        self.runtime = RuntimeConfig(**(runtime or {}))

    @property
    def seed(self) -> int:
        return self.runtime.seed

    def as_flat(self) -> Dict[str, object]:
        """Every effective knob under its dotted key."""
        flat = {"name": self.name, "mode": self.mode}
        for side in ("left", "right"):
            for key, value in getattr(self.state, side).items():
                flat[f"state.{side}.{key}"] = value
        for section in ("wave", "fluid", "collision", "weight", "energy", "sweep", "runtime"):
            for key, value in vars(getattr(self, section)).items():
                flat[f"{section}.{key}"] = list(value) if isinstance(value, tuple) else value
        return flat

    def with_overrides(self, **flat) -> "ExperimentSpec":
        """A copy with dotted keys replaced, e.g. ``{"fluid.eps": 0.02}``."""
        values = self.as_flat()
        for key, value in flat.items():
            _check_known(key)
            values[key] = value
        return _build(values)


def _check_known(key: str, line: int = None):
    if key in SCHEMA:
        return
    nearest = difflib.get_close_matches(key, SCHEMA.keys(), n=1)
    hint = f"; did you mean {nearest[0]!r}?" if nearest else ""
    msg = f"unknown key {key!r}{hint}"
    logger.error(msg)
    raise ConfigError(msg, line=line, key=key)


def _nest(flat: Dict[str, object]) -> dict:
    nested: dict = {}
    for key, value in flat.items():
        parts = key.split(".")
        node = nested
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return nested


def _flatten(tree: dict, prefix: str = "") -> Dict[str, object]:
    flat = {}
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def _convert(key: str, raw, line: int = None):
    converter = SCHEMA[key][0]
    if isinstance(raw, list):
        raw = " ".join(str(item) for item in raw)
    try:
        return converter(raw)
    except (TypeError, ValueError) as err:
        msg = f"{key}: cannot read {raw!r} ({err})"
        logger.error(msg)
        raise ConfigError(msg, line=line, key=key) from err


def _require(condition: bool, key: str, message: str, lines: Dict[str, int]):
    if not condition:
        msg = f"{key}: {message}"
        logger.error(msg)
        raise ConfigError(msg, line=lines.get(key), key=key)


def validate(values: Dict[str, object], lines: Dict[str, int] = None) -> None:
    """Cross-key checks; raises ConfigError naming the offending key."""
    lines = lines or {}
    mode = values.get("mode")
    _require(mode is not None, "mode", f"is required, one of {', '.join(MODES)}", lines)
    _require(mode in MODES, "mode", f"{mode!r} is not one of {', '.join(MODES)}", lines)
    a = values["fluid.a"]
    _require(1.0 / 3.0 < a < 1.0, "fluid.a", f"{a} outside the admissible interval (1/3, 1)", lines)
    _require(values["fluid.eps"] > 0, "fluid.eps", "must be positive", lines)
    _require(values["wave.delta"] > 0, "wave.delta", "must be positive", lines)
    _require(values["energy.bound_factor"] > 0, "energy.bound_factor", "must be positive", lines)
    _require(values["wave.kind"] in ("smoothed", "exact-fan"), "wave.kind", "must be smoothed or exact-fan", lines)
    _require(values["fluid.transport"] in ("table", "constant"), "fluid.transport", "must be table or constant", lines)
    _require(values["collision.table_mode"] in ("scaling", "direct"), "collision.table_mode", "must be scaling or direct", lines)
    for key in ("collision.n",):
        n = values[key]
        _require(n >= 9 and n % 2 == 1, key, f"must be odd and at least 9, got {n}", lines)
    for n in values["collision.refinement"]:
        _require(n >= 9 and int(n) % 2 == 1, "collision.refinement", f"grid sizes must be odd and at least 9, got {n}", lines)
    _require(all(t > 0 for t in values["collision.thetas"]), "collision.thetas", "temperatures must be positive", lines)
    _require(-3.0 <= values["collision.gamma"] < -2.0, "collision.gamma", "must lie in [-3, -2)", lines)
    for fmt in values["runtime.formats"]:
        _require(fmt in FORMATS, "runtime.formats", f"unknown format {fmt!r}", lines)
    if mode in ("wave", "burgers", "fluid-run", "sweep"):
        _require(values.get("state.right.rho") is not None, "state.right.rho", f"is required for mode {mode}", lines)
    if mode == "sweep":
        sweep = values["sweep.values"]
        parameter = values["sweep.parameter"]
        _require(parameter in SWEEP_PARAMETERS, "sweep.parameter", f"must be one of {', '.join(SWEEP_PARAMETERS)}", lines)
        _require(len(sweep) >= 4, "sweep.values", "needs at least 4 values", lines)
        _require(all(v > 0 for v in sweep), "sweep.values", "values must be positive", lines)
        _require(len(set(sweep)) == len(sweep), "sweep.values", "values must be distinct", lines)
        if parameter == "eps":
            span = max(sweep) / min(sweep)
            _require(span >= 10**1.5 - 1e-9, "sweep.values", f"eps values must span 1.5 decades, got ratio {span:.3g}", lines)


def _build(flat: Dict[str, object], lines: Dict[str, int] = None) -> ExperimentSpec:
    values = {key: default for key, (_, default) in SCHEMA.items()}
    values.update(flat)
    validate(values, lines)
    nested = _nest({k: v for k, v in values.items() if not (k.startswith("state.") and v is None)})
    spec = ExperimentSpec(**nested)
    return spec


def parse_flat(text: str) -> Tuple[Dict[str, object], Dict[str, int]]:
    """Read ``key = value`` lines; returns typed values and the line of each key."""
    values, lines = {}, {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            msg = f"line {number}: expected 'key = value', got {raw.strip()!r}"
            logger.error(msg)
            raise ConfigError(msg, line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        _check_known(key, number)
        if key in values:
            msg = f"line {number}: duplicate key {key!r} (first on line {lines[key]})"
            logger.error(msg)
            raise ConfigError(msg, line=number, key=key)
        values[key] = _convert(key, value, number)
        lines[key] = number
    return values, lines


def parse_json(text: str) -> Dict[str, object]:
    try:
        tree = json.loads(text)
    except json.JSONDecodeError as err:
        msg = f"invalid JSON config: {err.msg}"
        logger.error(msg)
        raise ConfigError(msg, line=err.lineno) from err
    values = {}
    for key, value in _flatten(tree).items():
        _check_known(key)
        values[key] = _convert(key, value)
    return values


def parse_config(text: str) -> ExperimentSpec:
    """Parse a flat or JSON experiment document into a validated spec."""
    if text.lstrip().startswith("{"):
        return _build(parse_json(text))
    values, lines = parse_flat(text)
    return _build(values, lines)


def load_config(path: str, overrides: Dict[str, object] = None) -> ExperimentSpec:
    """Read a config file, apply command-line overrides (dotted keys)."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as err:
        msg = f"cannot read config {path}: {err.strerror}"
        logger.error(msg)
        raise ConfigError(msg) from err
    if text.lstrip().startswith("{"):
        values, lines = parse_json(text), {}
    else:
        values, lines = parse_flat(text)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        _check_known(key)
        values[key] = _convert(key, value)
    logger.info(f"Loaded config {path} with {len(values)} explicit keys")
    return _build(values, lines)


def format_flat(spec: ExperimentSpec) -> str:
    """Render a spec back to a flat document (stable key order)."""
    out: List[str] = []
    for key, value in sorted(spec.as_flat().items()):
        if value is None:
            continue
        if isinstance(value, list):
            value = ", ".join(str(v) for v in value)
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"
