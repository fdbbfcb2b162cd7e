"""Experiment orchestration for every harness mode.

``run_experiment`` never raises a ``LabError``: the failing stage and the
message are recorded on the result, which keeps whatever tables were
produced before the failure.
"""
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from vml_lab import burgers_profile, diagnostics, euler_waves, fluid_solver, landau_collision
from vml_lab.burgers_profile import EXACT_FAN, SMOOTHED, WaveProfile
from vml_lab.errors import LabError
from vml_lab.euler_waves import GasState, RiemannData
from vml_lab.experiment_config import ExperimentSpec
from vml_lab.fitting import RateFit, rate_fit, refinement_order
from vml_lab.kinetic_core import GLOBAL_STATE, KineticField, VelocityGrid, WeightSpec, maxwellian, sqrt_mu
from vml_lab.landau_collision import CollisionParams

logger = logging.getLogger(__name__)

P_LIST = (1.0, 2.0, math.inf)
FAN_DELTAS = (0.05, 0.1, 0.2, 0.4)
EXPONENT_TOL = 0.05
RATE_FRACTION = 0.8
R2_FLOOR = 0.9
INVARIANT_TOL = 1e-10
FAN_TOL = 1e-12
MASS_TOL = 1e-12
CONSERVATION_TOL = 1e-10
ADJOINT_TOL = 1e-9
H_TOL = 1e-6
ROUNDOFF = 1e-13
REFINEMENT_ORDER = 1.8
ISOTROPY_TOL = 1e-8
DECAY_DRIFT = 0.01
COERCIVITY_SPREAD = 0.2
GAUSS_FACTOR = 10.0
GAUSS_FLOOR = 1e-13
BUDGET_TOL = 1e-10


@dataclass
class Verdict:
    check: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def as_dict(self) -> dict:
        return {"check": self.check, "value": self.value, "threshold": self.threshold, "passed": bool(self.passed), "detail": self.detail}


@dataclass
class PlotSpec:
    """A line plot: one line per column in ``ys`` (or per value of ``group``)."""

    name: str
    frame: pd.DataFrame
    x: str
    ys: List[str]
    loglog: bool = False
    group: Optional[str] = None
    fit: Optional[RateFit] = None
    title: str = ""


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    summary: Dict[str, object] = field(default_factory=dict)
    verdicts: List[Verdict] = field(default_factory=list)
    plots: List[PlotSpec] = field(default_factory=list)
    error: Optional[Dict[str, str]] = None
    stage: str = "setup"
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return self.error is None and all(v.passed for v in self.verdicts)

    def check(self, name: str, value: float, threshold: float, passed: bool, detail: str = ""):
        verdict = Verdict(name, float(value), float(threshold), bool(passed), detail)
        self.verdicts.append(verdict)
        level = logging.INFO if verdict.passed else logging.WARNING
        logger.log(level, f"{name}: {value:.4e} vs {threshold:.4e} -> {'pass' if verdict.passed else 'FAIL'}")
        return verdict


def riemann_data(spec: ExperimentSpec) -> RiemannData:
    """End states from the config; a right state given by density alone lies on the 3-curve."""
    left = GasState(spec.state.left["rho"], spec.state.left["u1"], spec.state.left["theta"])
    right = spec.state.right
    if set(right) == {"rho"}:
        return euler_waves.rarefaction_data(left, right["rho"])
    full = {"u1": left.u1, "theta": left.theta, **right}
    return RiemannData(left, GasState(full["rho"], full["u1"], full["theta"]))


def wave_profile(spec: ExperimentSpec, delta: Optional[float] = None) -> WaveProfile:
    return WaveProfile(riemann_data(spec), spec.wave.delta if delta is None else delta, spec.wave.kind)


def collision_params(spec: ExperimentSpec, n: Optional[int] = None) -> CollisionParams:
    return CollisionParams(VelocityGrid(n or spec.collision.n, spec.collision.v_max), spec.collision.gamma)


def _profile_frame(profile: WaveProfile, times, points: int) -> pd.DataFrame:
    frames = []
    fan = profile.with_kind(EXACT_FAN)
    smooth = profile.with_kind(SMOOTHED)
    for t in times:
        lo = min(0.0, profile.w_minus * t) - 10.0 * profile.delta - 1.0
        hi = max(0.0, profile.w_plus * t) + 10.0 * profile.delta + 1.0
        x = np.linspace(lo, hi, points)
        s = smooth.state(t, x)
        row = {"t": np.full(points, float(t)), "x": x, "rho": s.rho, "u1": s.u1, "theta": s.theta}
        if t > 0:
            f = fan.state(t, x)
            row.update({"rho_fan": f.rho, "u1_fan": f.u1, "theta_fan": f.theta})
        else:
            row.update({"rho_fan": np.nan, "u1_fan": np.nan, "theta_fan": np.nan})
        frames.append(pd.DataFrame(row))
    return pd.concat(frames, ignore_index=True)


def _wave_mode(spec: ExperimentSpec, result: ExperimentResult):
    result.stage = "riemann"
    data = riemann_data(spec)
    report = euler_waves.validate_riemann_data(data)
    result.summary["riemann"] = report.as_dict()
    result.check("riemann_data_valid", 0.0 if report.passed else 1.0, 0.0, report.passed, "; ".join(report.reasons))

    # invariants along the curve
    rho = np.linspace(float(data.left.rho), float(data.right.rho), 101)
    curve = euler_waves.wave_curve_state(data.left, rho)
    r31, S = euler_waves.riemann_invariant_3(curve)
    r31_0, S_0 = euler_waves.riemann_invariant_3(data.left)
    drift = float(max(np.max(np.abs(r31 - r31_0)), np.max(np.abs(S - S_0))))
    result.check("invariants_along_curve", drift, INVARIANT_TOL, drift <= INVARIANT_TOL)

    profile = wave_profile(spec)
    xi = np.linspace(report.w_minus, report.w_plus, 201)
    lam3 = euler_waves.characteristic_fields(euler_waves.exact_fan_3(data, xi)).lam3
    fan_gap = float(np.max(np.abs(lam3 - xi)))
    result.check("fan_identity", fan_gap, FAN_TOL, fan_gap <= FAN_TOL)

    result.stage = "profile"
    frame = _profile_frame(profile, spec.wave.times, spec.wave.points)
    result.tables["wave_profile"] = frame
    result.plots.append(PlotSpec("wave_profile", frame, "x", ["u1"], group="t", title="u1 of the smoothed wave"))

    result.stage = "decay"
    times = np.geomspace(spec.wave.t_min, spec.wave.t_max, spec.wave.samples)
    decay = burgers_profile.decay_report(profile, times, P_LIST, orders=(1,), fields=("u1",), tolerance=EXPONENT_TOL)
    result.tables["decay"] = decay.table
    result.tables["decay_exponents"] = decay.exponents


def _burgers_mode(spec: ExperimentSpec, result: ExperimentResult):
    result.stage = "decay"
    profile = wave_profile(spec)
    times = np.geomspace(spec.wave.t_min, spec.wave.t_max, spec.wave.samples)
    decay = burgers_profile.decay_report(profile, times, P_LIST, tolerance=EXPONENT_TOL)
    result.tables["decay"] = decay.table
    result.tables["decay_exponents"] = decay.exponents
    checked = decay.exponents[(decay.exponents["field"] == "u1") & (decay.exponents["order"] == 1)]
    for _, row in checked.iterrows():
        name = f"decay_{row['field']}_order{int(row['order'])}_p{row['p']:g}"
        result.check(name, abs(row["exponent"] - row["expected"]), EXPONENT_TOL, bool(row["passed"]))
    for p in P_LIST:
        sub = decay.table[(decay.table["field"] == "u1") & (decay.table["order"] == 1) & (decay.table["p"] == p)]
        result.plots.append(PlotSpec(f"decay_u1_p{p:g}", sub, "t", ["norm", "bound"], loglog=True, title=f"L^{p:g} norm of d_x u1"))

    result.stage = "fan"
    fan_times = np.geomspace(1.0, spec.wave.t_max, spec.wave.samples)
    rows = []
    for delta in FAN_DELTAS:
        p = WaveProfile(profile.data, delta, SMOOTHED)
        for t in fan_times:
            rows.append({"delta": delta, "t": float(t), "distance": burgers_profile.fan_distance(p, t), "ratio": burgers_profile.fan_rate_constant(p, t)})
    fan = pd.DataFrame(rows, columns=["delta", "t", "distance", "ratio"])
    result.tables["fan_distance"] = fan
    result.plots.append(PlotSpec("fan_ratio", fan, "t", ["ratio"], loglog=True, group="delta", title="fan distance ratio"))
    late = fan[fan["t"] >= spec.wave.t_max / 10.0]
    worst = 0.0
    for delta, group in late.groupby("delta"):
        if len(group) >= 2 and np.all(group["ratio"] > 0):
            worst = max(worst, rate_fit(group["t"], group["ratio"], min_points=2).exponent)
    result.summary["fan_ratio_max"] = float(fan["ratio"].max())
    result.check("fan_ratio_bounded", worst, EXPONENT_TOL, worst <= EXPONENT_TOL, "growth exponent of the ratio over the last decade")


def _random_positive_fields(grid: VelocityGrid, count: int, rng: np.random.Generator) -> List[KineticField]:
    fields = []
    for _ in range(count):
        parts = []
        for _ in range(2):
            state = GasState(rng.uniform(0.8, 1.2), tuple(rng.uniform(-0.3, 0.3, 3)), rng.uniform(1.2, 1.8))
            parts.append(maxwellian(state, grid).values)
        fields.append(KineticField(grid, 0.5 * (parts[0] + parts[1])))
    return fields


def _smooth_random_perturbation(grid: VelocityGrid, rng: np.random.Generator) -> KineticField:
    v = grid.v
    coefs = rng.standard_normal(6)
    poly = coefs[0] + coefs[1] * v[0] + coefs[2] * v[1] * v[2] + coefs[3] * (grid.speed2 - 4.5) + coefs[4] * v[0] * grid.speed2 + coefs[5] * v[1] ** 2
    return KineticField(grid, poly * sqrt_mu(grid))


def _collision_mode(spec: ExperimentSpec, result: ExperimentResult):
    result.stage = "conservation"
    params = collision_params(spec)
    grid = params.grid
    rng = np.random.default_rng(spec.seed)
    rows = []
    for k, f in enumerate(_random_positive_fields(grid, spec.collision.random_fields, rng)):
        res = landau_collision.conservation_residuals(f, params)
        production = landau_collision.entropy_production(f, params)
        q = landau_collision.collide(f, f, params)
        scale = float(grid.integrate(np.abs(q.values * np.log(f.values))))
        rows.append({"field": k, **res, "entropy_production": production, "entropy_scale": scale})
    table = pd.DataFrame(rows, columns=["field", "mass", "momentum", "energy", "entropy_production", "entropy_scale"])
    result.tables["collision_fields"] = table
    result.check("mass_conservation", table["mass"].max(), MASS_TOL, table["mass"].max() <= MASS_TOL)
    result.check("momentum_conservation", table["momentum"].max(), CONSERVATION_TOL, table["momentum"].max() <= CONSERVATION_TOL)
    result.check("energy_conservation", table["energy"].max(), CONSERVATION_TOL, table["energy"].max() <= CONSERVATION_TOL)
    # sign of the production, relative to the size of its integrand
    h_excess = float((table["entropy_production"] / table["entropy_scale"].clip(lower=1e-300)).max())
    result.check("h_theorem", h_excess, H_TOL, h_excess <= H_TOL)

    mu = maxwellian(GLOBAL_STATE, grid)
    q_mu = landau_collision.collide(mu, mu, params)
    eq = math.sqrt(float(grid.integrate(q_mu.values**2))) / math.sqrt(float(grid.integrate(mu.values**2)))
    result.check("maxwellian_equilibrium", eq, CONSERVATION_TOL, eq <= CONSERVATION_TOL)

    result.stage = "linearized"
    op = landau_collision.linearized_operator(GLOBAL_STATE, params)
    x = rng.standard_normal(grid.shape) * sqrt_mu(grid)
    y = rng.standard_normal(grid.shape) * sqrt_mu(grid)
    ax, ay = op.apply_symmetric(x), op.apply_symmetric(y)
    defect = abs(float(np.sum(ax * y) - np.sum(x * ay))) / (float(np.linalg.norm(ax) * np.linalg.norm(y)) or 1.0)
    result.check("self_adjoint", defect, ADJOINT_TOL, defect <= ADJOINT_TOL)
    quad = float(np.sum(ax * x))
    result.check("dissipative", -quad, 0.0, quad >= -ADJOINT_TOL * float(np.linalg.norm(ax) * np.linalg.norm(x)))

    ratios = []
    sizes = spec.collision.refinement or (grid.n,)
    g_rng = np.random.default_rng(spec.seed + 1)
    coefs_state = g_rng.bit_generator.state
    shifted = GasState(1.1, (0.2, -0.1, 0.0), 1.3)
    for n in sizes:
        g_rng.bit_generator.state = coefs_state
        p_n = collision_params(spec, n)
        g = _smooth_random_perturbation(p_n.grid, g_rng)
        mu_n = maxwellian(GLOBAL_STATE, p_n.grid)
        f_n = KineticField(p_n.grid, 0.5 * (mu_n.values + maxwellian(shifted, p_n.grid).values))
        res = landau_collision.conservation_residuals(f_n, p_n)
        q_n = landau_collision.collide(mu_n, mu_n, p_n)
        ratios.append(
            {
                "n": n,
                "h": p_n.grid.h,
                "coercivity": landau_collision.coercivity_ratio(g, p_n),
                "momentum": res["momentum"],
                "energy": res["energy"],
                "equilibrium": q_n.norm() / mu_n.norm(),
            }
        )
    coercivity = pd.DataFrame(ratios, columns=["n", "h", "coercivity", "momentum", "energy", "equilibrium"])
    result.tables["coercivity"] = coercivity
    floor = float(coercivity["coercivity"].min())
    spread = float((coercivity["coercivity"].max() - floor) / max(floor, 1e-300))
    result.check("coercivity_positive", floor, 0.0, floor > 0.0)
    if len(coercivity) > 1:
        result.check("coercivity_stable", spread, COERCIVITY_SPREAD, spread <= COERCIVITY_SPREAD)
        for column in ("momentum", "energy", "equilibrium"):
            values = coercivity[column].to_numpy()
            if values.max() <= ROUNDOFF:
                result.check(f"{column}_refinement", values.max(), ROUNDOFF, True, "at roundoff on every grid")
                continue
            order = refinement_order(coercivity["h"], np.maximum(values, ROUNDOFF))
            result.check(f"{column}_refinement", order, REFINEMENT_ORDER, order >= REFINEMENT_ORDER, "observed order under h-refinement")
    result.summary["coercivity_floor"] = floor


def _burnett_mode(spec: ExperimentSpec, result: ExperimentResult):
    result.stage = "transport"
    rows = []
    base = collision_params(spec)
    for theta in spec.collision.thetas:
        grid = VelocityGrid(base.grid.n, base.grid.v_max * math.sqrt(theta / GLOBAL_STATE.theta))
        detail = landau_collision.transport_detail(theta, base.with_grid(grid), spec.runtime.threads)
        k2 = np.array(detail.kappa2_by_index)
        sigma = detail.sigma_matrix
        rows.append(
            {
                **detail.coeffs.as_dict(),
                "kappa2_spread": float(np.ptp(k2) / abs(np.mean(k2))),
                "sigma_offdiag": float(np.max(np.abs(sigma - np.diag(np.diag(sigma)))) / np.max(np.abs(np.diag(sigma)))),
            }
        )
    table = pd.DataFrame(rows, columns=["theta", "kappa1", "kappa2", "sigma_theta", "kappa2_spread", "sigma_offdiag"])
    result.tables["transport"] = table
    positive = bool((table[["kappa1", "kappa2", "sigma_theta"]] > 0).all().all())
    result.check("transport_positive", float(table[["kappa1", "kappa2", "sigma_theta"]].min().min()), 0.0, positive)
    isotropy = float(max(table["kappa2_spread"].max(), table["sigma_offdiag"].max()))
    result.check("transport_isotropy", isotropy, ISOTROPY_TOL, isotropy <= ISOTROPY_TOL)

    result.stage = "table"
    lo, hi = min(spec.collision.thetas), max(spec.collision.thetas)
    interp = landau_collision.transport_table((lo, hi), base, spec.collision.table_nodes, spec.collision.table_mode, threads=spec.runtime.threads)
    result.tables["transport_table"] = interp.frame

    if spec.collision.decay_check:
        result.stage = "decay"
        burnett = landau_collision.burnett_functions(GLOBAL_STATE, base, spec.runtime.threads)
        wide = base.with_grid(VelocityGrid(2 * base.grid.n - 1, 2.0 * base.grid.v_max))
        burnett_wide = landau_collision.burnett_functions(GLOBAL_STATE, wide, spec.runtime.threads)
        decay_rows = []
        for name in ("A1", "B12"):
            narrow = landau_collision.weighted_decay(burnett.field(name), GLOBAL_STATE)
            broad = landau_collision.weighted_decay(burnett_wide.field(name), GLOBAL_STATE)
            decay_rows.append({"field": name, "v_max": base.grid.v_max, "value": narrow, "value_wide": broad, "drift": abs(broad - narrow) / abs(broad)})
        decay = pd.DataFrame(decay_rows, columns=["field", "v_max", "value", "value_wide", "drift"])
        result.tables["burnett_decay"] = decay
        drift = float(decay["drift"].max())
        result.check("burnett_decay_stable", drift, DECAY_DRIFT, drift <= DECAY_DRIFT)


def transport_for(spec: ExperimentSpec, profile: WaveProfile, params: CollisionParams) -> landau_collision.TransportTable:
    if spec.fluid.transport == "constant":
        coeffs = landau_collision.transport_coefficients(GLOBAL_STATE.theta, params, spec.runtime.threads)
        return landau_collision.TransportTable.constant(coeffs)
    thetas = (float(profile.data.left.theta), float(profile.data.right.theta))
    return landau_collision.transport_table(
        (0.8 * min(thetas), 1.2 * max(thetas)),
        params,
        spec.collision.table_nodes,
        spec.collision.table_mode,
        threads=spec.runtime.threads,
    )


def run_config(spec: ExperimentSpec, profile: WaveProfile, transport) -> fluid_solver.RunConfig:
    fluid = spec.fluid
    return fluid_solver.RunConfig(
        profile=profile,
        transport=transport,
        eps=fluid.eps,
        a=fluid.a,
        nx=fluid.nx,
        cfl=fluid.cfl,
        t_end=fluid.t_end,
        output_every=fluid.output_every,
        flags=fluid_solver.ClosureFlags(fluid.em, fluid.cross_terms, fluid.lorentz_drag),
        perturbation=fluid_solver.Perturbation(fluid.perturbation, fluid.perturbation_amplitude, fluid.perturbation_width, spec.seed),
    )


def weight_for(spec: ExperimentSpec, eps: float, a: float, delta: float, T: float):
    if spec.weight.q1 is None:
        return diagnostics.default_weight(eps, a, delta, T, spec.weight.q2, spec.weight.l)
    return WeightSpec(spec.weight.l, spec.weight.q1, spec.weight.q2)


def _fluid_mode(spec: ExperimentSpec, result: ExperimentResult):
    result.stage = "transport"
    profile = wave_profile(spec)
    params = collision_params(spec)
    transport = transport_for(spec, profile, params)
    result.tables["transport_table"] = transport.frame

    result.stage = "closure"
    basis = landau_collision.closure_basis(GLOBAL_STATE, params, spec.runtime.threads)

    result.stage = "fluid"
    config = run_config(spec, profile, transport)
    weight = weight_for(spec, config.eps, config.a, profile.delta, config.t_end)
    options = diagnostics.EnergyOptions(spec.energy.include_beta, spec.energy.include_f_block, spec.energy.fan_h)
    if spec.energy.report:
        history, report = diagnostics.run_with_report(config, basis, params, weight, options)
    else:
        history, report = _run_keep(config), None
    result.tables["snapshots"] = history.frame()
    result.tables["invariants"] = history.invariants
    budget = fluid_solver.conservation_budget(history)
    result.tables["budget"] = budget
    result.summary["wall_time_fluid"] = history.wall_time
    result.summary["weight"] = {"l": weight.l, "q1": weight.q1, "q2": weight.q2}

    if history.failure is not None:
        result.check("run_completed", history.failure_time or 0.0, config.t_end, False, history.failure)
    else:
        result.check("run_completed", history.final.t, config.t_end, True)

    residuals = history.invariants["gauss_residual"]
    gauss_verdict(result, [residuals.max()], [residuals.iloc[0]])
    mass = float(budget["mass"].max())
    result.check("mass_budget", mass, BUDGET_TOL, mass <= BUDGET_TOL)

    result.stage = "frozen-closure"
    result.summary["frozen_closure_error"] = diagnostics.frozen_closure_error(_far_state(profile), params, basis, spec.runtime.threads)

    if report is not None:
        result.stage = "energy"
        result.tables["energy"] = report.table
        result.summary["energy"] = report.summary()
        energy_verdicts(spec, result, report.table, config.eps, profile.delta, config.t_end)
        result.plots.append(PlotSpec("energy", report.table, "t", ["E_tilde", "D", "F_omega"], title="closure energy functionals"))


def _far_state(profile: WaveProfile) -> GasState:
    """The end state of the wave farthest from the global Maxwellian state."""

    def distance(s: GasState) -> float:
        return abs(float(s.rho) - GLOBAL_STATE.rho) + float(np.linalg.norm(s.u)) + abs(float(s.theta) - GLOBAL_STATE.theta)

    return max((profile.data.left, profile.data.right), key=distance)


def gauss_verdict(result: ExperimentResult, residuals, floors):
    """Every run keeps its Gauss residual within GAUSS_FACTOR times its initial floor."""
    limits = GAUSS_FACTOR * np.maximum(np.asarray(floors, dtype=float), GAUSS_FLOOR)
    ratios = np.asarray(residuals, dtype=float) / limits
    worst = float(np.max(np.where(np.isfinite(ratios), ratios, np.inf)))
    return result.check("gauss_law", worst, 1.0, worst <= 1.0, f"max residual / ({GAUSS_FACTOR:g} x initial floor)")


def energy_bound_verdict(spec: ExperimentSpec, result: ExperimentResult, E0, E_max, eps, delta, T: float):
    """sup E_tilde of every run below energy_ceiling; missing values fail."""
    E0, E_max, eps, delta = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (E0, E_max, eps, delta))
    ceilings = np.array(
        [diagnostics.energy_ceiling(e0, e, spec.fluid.a, d, T, spec.energy.bound_factor) for e0, e, d in np.broadcast(E0, eps, delta)]
    )
    ratios = E_max / ceilings
    worst = float(np.max(np.where(np.isfinite(ratios), ratios, np.inf)))
    detail = f"sup E_tilde / ({spec.energy.bound_factor:g} x (E_tilde(0) + bound))"
    return result.check("energy_bounded", worst, 1.0, worst <= 1.0, detail)


def energy_verdicts(spec: ExperimentSpec, result: ExperimentResult, table: pd.DataFrame, eps: float, delta: float, T: float):
    numeric = table.drop(columns=["error_fan"])
    nonneg = bool((numeric >= -1e-14).all().all())
    result.check("energy_nonnegative", float(numeric.min().min()), 0.0, nonneg)
    energy_bound_verdict(spec, result, table["E_tilde"].iloc[0], table["E_tilde"].max(), eps, delta, T)
    rel = float(np.max(np.abs(table["E_tilde"] - table["E_scaled"]) / np.maximum(table["E_tilde"].abs(), 1e-300)))
    result.check("scaling_identity", rel, 1e-10, rel <= 1e-10)


def _run_keep(config: fluid_solver.RunConfig) -> fluid_solver.FluidHistory:
    try:
        return fluid_solver.run(config)
    except LabError as err:
        if getattr(err, "history", None) is None:
            raise
        return err.history


def _sweep_point(payload) -> dict:
    """One fluid run of a sweep; top level so that worker processes can import it."""
    spec, value, transport, basis, params = payload
    T = spec.fluid.t_end
    if spec.sweep.parameter == "eps":
        eps = value
        delta = diagnostics.coupled_delta(eps, spec.fluid.a, T) if spec.sweep.couple_delta else spec.wave.delta
    else:
        eps, delta = spec.fluid.eps, value
    point = spec.with_overrides(**{"fluid.eps": eps, "wave.delta": delta})
    profile = wave_profile(point)
    config = run_config(point, profile, transport)
    history = fluid_solver.run(config)
    final = history.final
    h = spec.energy.fan_h
    fan = diagnostics.wave_error(final, profile, reference=EXACT_FAN, basis=basis, params=params, h=h)
    smooth_sup = max(diagnostics.wave_error(s, profile, reference=SMOOTHED, basis=basis, params=params)["total"] for s in history.snapshots)
    E0 = E_max = math.nan
    if len(history.snapshots) >= 3:
        weight = weight_for(point, eps, spec.fluid.a, delta, T)
        options = diagnostics.EnergyOptions(spec.energy.include_beta, spec.energy.include_f_block, spec.energy.fan_h)
        energy = diagnostics.energy_functionals(history, eps, spec.fluid.a, weight, options, basis, params).table["E_tilde"]
        E0, E_max = float(energy.iloc[0]), float(energy.max())
    else:
        logger.warning(f"Sweep point {value:g} has {len(history.snapshots)} snapshots; no energy functional")
    return {
        "value": value,
        "eps": eps,
        "delta": delta,
        "a": spec.fluid.a,
        "T": T,
        "error_fan": fan["total"],
        "error_fan_macro": max(fan["rho"], fan["u"], fan["theta"]),
        "error_smoothed_sq": smooth_sup**2,
        "bound_smoothed": diagnostics.theorem_bound(eps, spec.fluid.a, delta, T),
        "bound_fan": diagnostics.fan_rate_bound(eps, spec.fluid.a, T, h),
        "gauss_residual": float(history.invariants["gauss_residual"].max()),
        "gauss_floor": float(history.invariants["gauss_residual"].iloc[0]),
        "E_tilde_0": E0,
        "E_tilde_max": E_max,
        "wall_time": history.wall_time,
    }


SWEEP_COLUMNS = [
    "value",
    "eps",
    "delta",
    "a",
    "T",
    "error_fan",
    "error_fan_macro",
    "error_smoothed_sq",
    "bound_smoothed",
    "bound_fan",
    "gauss_residual",
    "gauss_floor",
    "E_tilde_0",
    "E_tilde_max",
    "wall_time",
]


def sweep_epsilon(spec: ExperimentSpec, result: Optional[ExperimentResult] = None) -> ExperimentResult:
    """Fluid runs over the sweep axis and the rate fit of the exact-fan error.

    Points run in parallel on a process pool and are collected in
    submission order. A failing point aborts the sweep; the points already
    finished are kept in the result.
    """
    result = result or ExperimentResult(spec)
    result.stage = "transport"
    profile = wave_profile(spec)
    params = collision_params(spec)
    transport = transport_for(spec, profile, params)
    basis = landau_collision.closure_basis(GLOBAL_STATE, params, spec.runtime.threads)
    result.summary["frozen_closure_error"] = diagnostics.frozen_closure_error(_far_state(profile), params, basis, spec.runtime.threads)

    result.stage = "sweep"
    values = sorted(spec.sweep.values, reverse=spec.sweep.parameter == "eps")
    payloads = [(spec, v, transport, basis, params) for v in values]
    rows = []
    workers = max(1, min(spec.runtime.threads, len(payloads)))
    logger.info(f"Sweeping {spec.sweep.parameter} over {len(values)} values on {workers} workers")
    try:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_point, p) for p in payloads]
            for future in futures:
                rows.append(future.result())
    finally:
        table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
        result.tables["sweep"] = table

    _sweep_verdicts(spec, result, table)
    return result


def _monotone_decreasing(values) -> bool:
    values = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(values) < 0))


def _sweep_verdicts(spec: ExperimentSpec, result: ExperimentResult, table: pd.DataFrame):
    result.stage = "fit"
    a = spec.fluid.a
    gauss_verdict(result, table["gauss_residual"], table["gauss_floor"])
    energy_bound_verdict(spec, result, table["E_tilde_0"], table["E_tilde_max"], table["eps"], table["delta"], spec.fluid.t_end)
    if spec.sweep.parameter == "eps":
        # rows are ordered by decreasing eps
        fit = rate_fit(table["eps"], table["error_fan"])
        target = diagnostics.target_exponent(a)
        result.summary["rate_fit"] = {"exponent": fit.exponent, "intercept": fit.intercept, "r2": fit.r2, "target": target}
        result.check("fan_rate_exponent", fit.exponent, RATE_FRACTION * target, fit.exponent >= RATE_FRACTION * target)
        result.check("fan_rate_r2", fit.r2, R2_FLOOR, fit.r2 >= R2_FLOOR)
        result.check("fan_error_monotone", float(_monotone_decreasing(table["error_fan"])), 1.0, _monotone_decreasing(table["error_fan"]))
        result.check("smoothed_error_monotone", float(_monotone_decreasing(table["error_smoothed_sq"])), 1.0, _monotone_decreasing(table["error_smoothed_sq"]))
        constant = float((table["error_smoothed_sq"] / table["bound_smoothed"]).max())
        result.summary["bound_constant"] = constant
        result.plots.append(PlotSpec("sweep_rate", table, "eps", ["error_fan"], loglog=True, fit=fit, title=f"exact-fan error, a = {a:g}"))
    else:
        fit = rate_fit(table["delta"], table["error_fan"])
        result.summary["rate_fit"] = {"exponent": fit.exponent, "intercept": fit.intercept, "r2": fit.r2}
        result.check("fan_error_grows_with_delta", fit.exponent, 0.0, fit.exponent > 0.0)
        result.plots.append(PlotSpec("sweep_delta", table, "delta", ["error_fan"], loglog=True, fit=fit, title="exact-fan error against delta"))


MODE_RUNNERS = {
    "wave": _wave_mode,
    "burgers": _burgers_mode,
    "collision-test": _collision_mode,
    "burnett": _burnett_mode,
    "fluid-run": _fluid_mode,
    "sweep": lambda spec, result: sweep_epsilon(spec, result),
}


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Run one experiment; module errors are recorded, not raised."""
    result = ExperimentResult(spec)
    start = time.perf_counter()
    logger.info(f"Running experiment {spec.name!r} in mode {spec.mode}")
    try:
        MODE_RUNNERS[spec.mode](spec, result)
    except LabError as err:
        result.error = {"stage": result.stage, "type": type(err).__name__, "message": str(err)}
        logger.error(f"Experiment {spec.name!r} failed in stage {result.stage}: {err}")
    result.wall_time = time.perf_counter() - start
    logger.info(f"Experiment {spec.name!r} finished in {result.wall_time:.2f}s, passed={result.passed}")
    return result
