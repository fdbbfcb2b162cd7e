"""Two-fluid Navier-Stokes-Maxwell system around a rarefaction wave.

Conservative rows, one column per cell:

    rho, m1, m2, m3, Etot, n, E1, E2, E3, B2, B3

with Etot = rho (theta + |u|^2 / 2) and B1 = 0.  Euler fluxes use MUSCL
(minmod, primitive variables) with a local Lax-Friedrichs flux; the two
Maxwell pairs use unlimited Fromm slopes and the exact light speed 1.
Diffusive fluxes are central at the faces.  The charge current j1 is
collocated at cell centres and both n and E1 are driven by it through the
same central difference, so the discrete Gauss law dE1/dx = n is carried
exactly by the scheme.  Time stepping is SSP-RK2.
"""
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from vml_lab.burgers_profile import WaveProfile
from vml_lab.errors import ConfigError, HistoryError, TimeStepError, VacuumError
from vml_lab.euler_waves import R, GasState
from vml_lab.landau_collision import TransportTable

logger = logging.getLogger(__name__)

ROWS = ("rho", "m1", "m2", "m3", "Etot", "n", "E1", "E2", "E3", "B2", "B3")
RHO, M1, M2, M3, ETOT, N, E1, E2, E3, B2, B3 = range(len(ROWS))
HYDRO = slice(RHO, ETOT + 1)
GHOSTS = 2
GAMMA_GAS = 5.0 / 3.0
SNAPSHOT_COLUMNS = ["t", "x", "rho", "u1", "u2", "u3", "theta", "n", "E1", "E2", "E3", "B2", "B3"]

PERTURBATION_KINDS = ("none", "rho", "charge")


@dataclass(frozen=True)
class ClosureFlags:
    """em switches every electromagnetic row and coupling off when False."""

    em: bool = True
    cross_terms: bool = True
    lorentz_drag: bool = True


@dataclass(frozen=True)
class Perturbation:
    kind: str = "none"
    amplitude: float = 1e-3
    width: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ConfigError(f"unknown perturbation kind {self.kind!r}", key="fluid.perturbation")


@dataclass(frozen=True, eq=False)
class RunConfig:
    profile: WaveProfile
    transport: TransportTable
    eps: float = 1e-2
    a: float = 0.5
    nx: int = 400
    domain: Optional[Tuple[float, float]] = None
    cfl: float = 0.4
    t_end: float = 1.0
    output_every: float = 0.25
    flags: ClosureFlags = ClosureFlags()
    perturbation: Perturbation = Perturbation()
    gauss_tol: float = 1e-8

    def __post_init__(self):
        checks = [
            ("eps", self.eps > 0, "must be positive"),
            ("a", 1.0 / 3.0 < self.a < 1.0, "must lie in (1/3, 1)"),
            ("cfl", 0.0 < self.cfl < 1.0, "must lie in (0, 1)"),
            ("nx", self.nx >= 8, "must be at least 8"),
            ("t_end", self.t_end > 0, "must be positive"),
            ("output_every", self.output_every > 0, "must be positive"),
        ]
        for key, ok, reason in checks:
            if not ok:
                msg = f"fluid.{key} = {getattr(self, key)} {reason}"
                logger.error(msg)
                raise ConfigError(msg, key=f"fluid.{key}")
        if self.domain is not None and not self.domain[0] < self.domain[1]:
            raise ConfigError(f"empty domain {self.domain}", key="fluid.domain")


@dataclass(frozen=True)
class FluidGrid:
    x_lo: float
    x_hi: float
    nx: int

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.nx

    @property
    def centers(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.nx) + 0.5) * self.dx

    @classmethod
    def around(cls, profile: WaveProfile, t_end: float, nx: int) -> "FluidGrid":
        """Window holding the wave up to t_end with a 10% margin."""
        lo = min(0.0, profile.w_minus * t_end) - 20.0 * profile.delta - 1.0
        hi = max(0.0, profile.w_plus * t_end) + 20.0 * profile.delta + 1.0
        margin = 0.1 * (hi - lo)
        return cls(lo - margin, hi + margin, nx)


def conservative(rho, u, theta, n=0.0, E=(0.0, 0.0, 0.0), B=(0.0, 0.0)) -> np.ndarray:
    """Stack primitive fields into the eleven conservative rows."""
    rho = np.asarray(rho, dtype=float)
    u = [np.broadcast_to(np.asarray(c, dtype=float), rho.shape) for c in u]
    theta = np.broadcast_to(np.asarray(theta, dtype=float), rho.shape)
    kinetic = 0.5 * sum(c * c for c in u)
    rows = [rho, rho * u[0], rho * u[1], rho * u[2], rho * (theta + kinetic), n, *E, *B]
    return np.stack([np.broadcast_to(np.asarray(r, dtype=float), rho.shape) for r in rows])


def far_field(state: GasState) -> np.ndarray:
    return conservative(float(state.rho), tuple(float(c) for c in state.u), float(state.theta))


class Primitives:
    """Primitive view of a conservative array (any trailing shape)."""

    def __init__(self, U: np.ndarray):
        self.rho = U[RHO]
        self.u = U[M1 : M3 + 1] / self.rho
        self.theta = U[ETOT] / self.rho - 0.5 * np.sum(self.u**2, axis=0)
        self.p = R * self.rho * self.theta
        self.n = U[N]
        self.E = U[E1 : E3 + 1]
        self.B = np.stack([np.zeros_like(self.rho), U[B2], U[B3]])

    @property
    def sound_speed(self) -> np.ndarray:
        return np.sqrt(GAMMA_GAS * np.maximum(self.p, 0.0) / self.rho)


@dataclass(frozen=True, eq=False)
class FluidEMState:
    grid: FluidGrid
    U: np.ndarray
    t: float
    config: RunConfig

    @property
    def primitives(self) -> Primitives:
        return Primitives(self.U)

    def to_frame(self) -> pd.DataFrame:
        P = self.primitives
        return pd.DataFrame(
            {
                "t": np.full(self.grid.nx, self.t),
                "x": self.grid.centers,
                "rho": P.rho,
                "u1": P.u[0],
                "u2": P.u[1],
                "u3": P.u[2],
                "theta": P.theta,
                "n": P.n,
                "E1": P.E[0],
                "E2": P.E[1],
                "E3": P.E[2],
                "B2": self.U[B2],
                "B3": self.U[B3],
            },
            columns=SNAPSHOT_COLUMNS,
        )


def _perturb(U: np.ndarray, grid: FluidGrid, perturbation: Perturbation) -> np.ndarray:
    if perturbation.kind == "none":
        return U
    rng = np.random.default_rng(perturbation.seed)
    x = grid.centers
    center = rng.uniform(-0.5, 0.5) * perturbation.width
    shape = np.exp(-(((x - center) / perturbation.width) ** 2))
    U = U.copy()
    if perturbation.kind == "rho":
        P = Primitives(U)
        rho = P.rho * (1.0 + perturbation.amplitude * shape)
        U[HYDRO] = conservative(rho, P.u, P.theta)[HYDRO]
        return U
    # zero net charge: n is the x-derivative of a Gaussian
    n = -perturbation.amplitude * 2.0 * (x - center) / perturbation.width * shape
    e1 = np.zeros(grid.nx)
    e1[1] = 2.0 * grid.dx * n[0]
    for i in range(1, grid.nx - 1):
        e1[i + 1] = e1[i - 1] + 2.0 * grid.dx * n[i]
    U[N] = n
    U[E1] = e1
    return U


def initialize(config: RunConfig) -> FluidEMState:
    """Well-prepared data from the smooth wave at t = 0, electromagnetic field at rest."""
    profile = config.profile
    if config.domain is None:
        grid = FluidGrid.around(profile, config.t_end, config.nx)
    else:
        grid = FluidGrid(float(config.domain[0]), float(config.domain[1]), config.nx)
    wave = profile.state(0.0, grid.centers)
    U = conservative(wave.rho, wave.u, wave.theta)
    U = _perturb(U, grid, config.perturbation)
    logger.info(f"Initialized fluid state on [{grid.x_lo:.3f}, {grid.x_hi:.3f}] with nx={grid.nx}, dx={grid.dx:.4e}")
    return FluidEMState(grid, U, 0.0, config)


def _extend(state: FluidEMState, U: np.ndarray) -> np.ndarray:
    profile = state.config.profile
    left = far_field(profile.data.left)
    right = far_field(profile.data.right)
    return np.concatenate([np.repeat(left[:, None], GHOSTS, axis=1), U, np.repeat(right[:, None], GHOSTS, axis=1)], axis=1)


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _euler_flux(rho, u, theta) -> np.ndarray:
    p = R * rho * theta
    energy = rho * (theta + 0.5 * np.sum(u**2, axis=0))
    return np.stack([rho * u[0], rho * u[0] ** 2 + p, rho * u[0] * u[1], rho * u[0] * u[2], u[0] * (energy + p)])


def _hydro_faces(Ux: np.ndarray) -> np.ndarray:
    """LLF flux of the Euler rows at the nx + 1 faces."""
    P = Primitives(Ux)
    q = np.stack([P.rho, P.u[0], P.u[1], P.u[2], P.p])
    slope = _minmod(q[:, 1:-1] - q[:, :-2], q[:, 2:] - q[:, 1:-1])
    qL = q[:, 1:-2] + 0.5 * slope[:, :-1]
    qR = q[:, 2:-1] - 0.5 * slope[:, 1:]

    def pack(qs):
        rho, u, p = qs[0], qs[1:4], qs[4]
        theta = p / (R * rho)
        U = conservative(rho, u, theta)[HYDRO]
        c = np.sqrt(GAMMA_GAS * np.maximum(p, 0.0) / rho)
        return U, _euler_flux(rho, u, theta), np.abs(u[0]) + c

    UL, FL, sL = pack(qL)
    UR, FR, sR = pack(qR)
    speed = np.maximum(sL, sR)
    return 0.5 * (FL + FR) - 0.5 * speed * (UR - UL)


def _maxwell_faces(Ux: np.ndarray) -> np.ndarray:
    """LLF flux for (E2, E3, B2, B3) at the faces, light speed 1."""
    q = Ux[[E2, E3, B2, B3]]
    slope = 0.5 * (q[:, 2:] - q[:, :-2])
    qL = q[:, 1:-2] + 0.5 * slope[:, :-1]
    qR = q[:, 2:-1] - 0.5 * slope[:, 1:]

    def flux(s):
        e2, e3, b2, b3 = s
        return np.stack([b3, -b2, -e3, e2])

    return 0.5 * (flux(qL) + flux(qR)) - 0.5 * (qR - qL)


def _viscous_faces(Ux: np.ndarray, transport: TransportTable) -> np.ndarray:
    """Diffusive fluxes of the momentum and energy rows (without the eps factor)."""
    P = Primitives(Ux)
    lo, hi = slice(GHOSTS - 1, -GHOSTS), slice(GHOSTS, -GHOSTS + 1 or None)
    dx_u = P.u[:, hi] - P.u[:, lo]
    dx_theta = P.theta[hi] - P.theta[lo]
    u_face = 0.5 * (P.u[:, hi] + P.u[:, lo])
    coeffs = transport(0.5 * (P.theta[hi] + P.theta[lo]))
    k1, k2 = coeffs["kappa1"], coeffs["kappa2"]
    V = np.zeros((ETOT + 1, dx_theta.shape[0]))
    V[M1] = 4.0 / 3.0 * k1 * dx_u[0]
    V[M2] = k1 * dx_u[1]
    V[M3] = k1 * dx_u[2]
    V[ETOT] = k2 * dx_theta + k1 * u_face[0] * dx_u[0] / 3.0 + k1 * np.sum(u_face * dx_u, axis=0)
    return V


@dataclass
class Tendency:
    dU: np.ndarray
    boundary_flux: np.ndarray
    source: np.ndarray


def _ns_tendency(state: FluidEMState, Ux: np.ndarray) -> Tendency:
    grid, cfg = state.grid, state.config
    dx = grid.dx
    F = np.zeros((len(ROWS), grid.nx + 1))
    F[HYDRO] = _hydro_faces(Ux) - cfg.eps * _viscous_faces(Ux, cfg.transport) / dx
    dU = -(F[:, 1:] - F[:, :-1]) / dx
    return Tendency(dU, F[:, -1] - F[:, 0], np.zeros(len(ROWS)))


def navier_stokes_rhs(state: FluidEMState) -> np.ndarray:
    """Tendencies of compressible Navier-Stokes alone; EM rows are zero."""
    return _ns_tendency(state, _extend(state, state.U)).dU


def _em_tendency(state: FluidEMState, Ux: np.ndarray, out: Tendency):
    grid, cfg = state.grid, state.config
    flags, eps, dx = cfg.flags, cfg.eps, grid.dx
    inner = slice(GHOSTS, -GHOSTS)
    P = Primitives(Ux)
    rt = R * P.theta
    sigma = cfg.transport(P.theta)["sigma_theta"]
    W = P.E + np.cross(P.u, P.B, axis=0)

    charge_ratio = P.n / P.rho
    dn = np.zeros_like(charge_ratio)
    dn[1:-1] = (charge_ratio[2:] - charge_ratio[:-2]) / (2.0 * dx)

    j1 = P.n * P.u[0]
    if flags.cross_terms:
        j1 = j1 - eps * sigma * dn
    if flags.lorentz_drag:
        j1 = j1 + eps * sigma * W[0] / rt
    # far field carries no current
    j1[:GHOSTS] = 0.0
    j1[-GHOSTS:] = 0.0

    S = np.zeros((len(ROWS), grid.nx))
    nW = P.n * W
    S[M1 : M3 + 1] = nW[:, inner]
    S[ETOT] = (P.n * np.sum(P.u * P.E, axis=0))[inner]
    if flags.lorentz_drag:
        drag = eps * sigma / rt
        S[M1 : M3 + 1] += (drag * np.cross(W, P.B, axis=0))[:, inner]
        S[ETOT] += (drag * np.sum(W * P.E, axis=0))[inner]
        S[E1 + 1 : E3 + 1] -= (drag * W[1:])[:, inner]
    if flags.cross_terms:
        cross = eps * sigma * dn
        # -eps sigma d(n/rho) (e1 x B), e1 x B = (0, -B3, B2)
        S[M2] += (cross * P.B[2])[inner]
        S[M3] -= (cross * P.B[1])[inner]
        S[ETOT] -= (cross * P.E[0])[inner]
    S[E2] -= (P.n * P.u[1])[inner]
    S[E3] -= (P.n * P.u[2])[inner]
    S[E1] = -j1[inner]

    F = _maxwell_faces(Ux)
    rows = [E2, E3, B2, B3]
    out.dU[rows] -= (F[:, 1:] - F[:, :-1]) / dx
    out.boundary_flux[rows] += F[:, -1] - F[:, 0]

    out.dU[N] -= (j1[GHOSTS + 1 : -GHOSTS + 1] - j1[GHOSTS - 1 : -GHOSTS - 1]) / (2.0 * dx)
    last, first = grid.nx + GHOSTS - 1, GHOSTS
    out.boundary_flux[N] += 0.5 * (j1[last] + j1[last + 1]) - 0.5 * (j1[first - 1] + j1[first])

    out.dU += S
    out.source += S.sum(axis=1) * dx


def _tendency(state: FluidEMState, U: np.ndarray) -> Tendency:
    Ux = _extend(state, U)
    out = _ns_tendency(state, Ux)
    if state.config.flags.em:
        _em_tendency(state, Ux, out)
    return out


def rhs(state: FluidEMState) -> np.ndarray:
    _check_positive(state.U, state.t)
    if not state.config.flags.em:
        return navier_stokes_rhs(state)
    return _tendency(state, state.U).dU


def _check_positive(U: np.ndarray, t: float):
    P = Primitives(U)
    if not (np.all(np.isfinite(U)) and np.all(P.rho > 0) and np.all(P.theta > 0)):
        msg = f"vacuum or non-finite state at t={t:.6g}: min rho {np.nanmin(P.rho):.3e}, min theta {np.nanmin(P.theta):.3e}"
        logger.error(msg)
        raise VacuumError(msg, t)


def stable_dt(state: FluidEMState) -> float:
    """cfl * min(dx / lambda_max, dx^2 / (2 eps nu_max))."""
    cfg, dx = state.config, state.grid.dx
    P = state.primitives
    speed = float(np.max(np.abs(P.u[0]) + P.sound_speed))
    if cfg.flags.em:
        speed = max(speed, 1.0)
    coeffs = cfg.transport(P.theta)
    nu = np.maximum(4.0 / 3.0 * coeffs["kappa1"], coeffs["kappa2"])
    if cfg.flags.em:
        nu = np.maximum(nu, coeffs["sigma_theta"])
    nu_max = float(np.max(nu / P.rho))
    limits = [dx / speed]
    if nu_max > 0:
        limits.append(dx * dx / (2.0 * cfg.eps * nu_max))
    return cfg.cfl * min(limits)


def _advance(state: FluidEMState, dt: float):
    if state.config.flags.em:
        k1 = _tendency(state, state.U)
    else:
        k1 = _ns_tendency(state, _extend(state, state.U))
    U1 = state.U + dt * k1.dU
    _check_positive(U1, state.t + dt)
    if state.config.flags.em:
        k2 = _tendency(state, U1)
    else:
        k2 = _ns_tendency(state, _extend(state, U1))
    U = 0.5 * state.U + 0.5 * (U1 + dt * k2.dU)
    _check_positive(U, state.t + dt)
    flux = 0.5 * dt * (k1.boundary_flux + k2.boundary_flux)
    source = 0.5 * dt * (k1.source + k2.source)
    return replace(state, U=U, t=state.t + dt), flux, source


def step(state: FluidEMState, dt: float) -> FluidEMState:
    limit = stable_dt(state)
    if dt <= 0 or dt > limit * (1.0 + 1e-12):
        msg = f"time step {dt:.3e} outside (0, {limit:.3e}]"
        logger.error(msg)
        raise TimeStepError(msg)
    return _advance(state, dt)[0]


def gauss_residual(state: FluidEMState) -> float:
    """max |dE1/dx - n| by central differences, far-field ghosts included."""
    Ux = _extend(state, state.U)
    dE = (Ux[E1, GHOSTS + 1 : -GHOSTS + 1] - Ux[E1, GHOSTS - 1 : -GHOSTS - 1]) / (2.0 * state.grid.dx)
    return float(np.max(np.abs(dE - state.U[N])))


def _totals(state: FluidEMState) -> np.ndarray:
    return state.U.sum(axis=1) * state.grid.dx


@dataclass
class FluidHistory:
    config: RunConfig
    snapshots: List[FluidEMState] = field(default_factory=list)
    invariants: pd.DataFrame = None
    boundary_flux: List[np.ndarray] = field(default_factory=list)
    source: List[np.ndarray] = field(default_factory=list)
    wall_time: float = 0.0
    failure: Optional[str] = None
    failure_time: Optional[float] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> FluidEMState:
        if not self.snapshots:
            raise HistoryError("empty history")
        return self.snapshots[-1]

    def frame(self) -> pd.DataFrame:
        return pd.concat([s.to_frame() for s in self.snapshots], ignore_index=True)


def _invariant_row(state: FluidEMState) -> dict:
    P = state.primitives
    totals = _totals(state)
    return {
        "t": state.t,
        "min_rho": float(np.min(P.rho)),
        "min_theta": float(np.min(P.theta)),
        "gauss_residual": gauss_residual(state),
        "mass": float(totals[RHO]),
        "momentum1": float(totals[M1]),
        "energy": float(totals[ETOT]),
        "charge": float(totals[N]),
    }


def run(config: RunConfig) -> FluidHistory:
    """Integrate to t_end, sampling every output_every.

    A step failure ends the run; the history keeps the snapshots reached and
    records the failing time before the error propagates.
    """
    start = time.perf_counter()
    state = initialize(config)
    history = FluidHistory(config, [state])
    rows = [_invariant_row(state)]
    flux_acc = np.zeros(len(ROWS))
    source_acc = np.zeros(len(ROWS))
    history.boundary_flux.append(flux_acc.copy())
    history.source.append(source_acc.copy())
    n_out = max(1, int(math.ceil(config.t_end / config.output_every - 1e-9)))
    targets = [min(config.t_end, k * config.output_every) for k in range(1, n_out + 1)]
    steps = 0
    try:
        for target in targets:
            while state.t < target - 1e-14 * max(1.0, target):
                dt = min(stable_dt(state), target - state.t)
                state, flux, source = _advance(state, dt)
                flux_acc += flux
                source_acc += source
                steps += 1
            history.snapshots.append(state)
            history.boundary_flux.append(flux_acc.copy())
            history.source.append(source_acc.copy())
            rows.append(_invariant_row(state))
            logger.debug(f"snapshot t={state.t:.4f} after {steps} steps")
    except VacuumError as err:
        history.failure = str(err)
        history.failure_time = err.t
        history.invariants = pd.DataFrame(rows)
        history.wall_time = time.perf_counter() - start
        err.history = history
        raise
    history.invariants = pd.DataFrame(rows)
    history.wall_time = time.perf_counter() - start
    logger.info(f"Fluid run reached t={state.t:.4f} in {steps} steps ({history.wall_time:.2f}s)")
    return history


def conservation_budget(history: FluidHistory) -> pd.DataFrame:
    """Per snapshot: change of mass/momentum/energy against boundary fluxes and sources.

    Each residual is |Delta total + int flux dt - int source dt| relative to
    the initial total (or 1 for rows starting at zero).
    """
    first = history.snapshots[0]
    base = _totals(first)
    rows = []
    for state, flux, source in zip(history.snapshots, history.boundary_flux, history.source):
        change = _totals(state) - base
        row = {"t": state.t}
        for name, idx in (("mass", RHO), ("momentum1", M1), ("energy", ETOT), ("charge", N)):
            scale = abs(base[idx]) if base[idx] != 0 else 1.0
            row[name] = abs(change[idx] + flux[idx] - source[idx]) / scale
        rows.append(row)
    return pd.DataFrame(rows, columns=["t", "mass", "momentum1", "energy", "charge"])
