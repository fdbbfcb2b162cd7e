"""Perturbation fields, entropy, energy functionals and wave errors of a fluid run.

Microscopic fields are not evolved by the fluid solver; they are rebuilt
from the macroscopic gradients through the first-order closure

    G1 = eps [sqrt(R / theta) dx theta A1 + dx u_j B1j],
    G2 = eps dx(n / rho) C1 - eps (E + u x B)_j / (R theta) C_j,

with the response fields A1, B1j, C_j frozen at the global Maxwellian.
Functionals built from them are closure diagnostics. Freezing the fields
at mu instead of the local M[rho, u, theta] changes them by a relative
amount of first order in the distance of the local state from the global
one, bounded along a wave by its strength; ``frozen_closure_error``
measures it.

A functional evaluated in scaled variables (tau, y) = (t, x) / eps^a is
obtained from the same snapshot arrays with both coordinates divided by
eps^a; in x-units the block prefactors eps^((2|alpha| - 1) a) absorb the
change of variables.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional

import numpy as np
import pandas as pd

from vml_lab.burgers_profile import EXACT_FAN, SMOOTHED, WaveProfile
from vml_lab.errors import DomainError, GridError, HistoryError, TimeTooSmallError, VacuumError
from vml_lab.euler_waves import R, GasState
from vml_lab.fitting import rate_fit, refinement_order
from vml_lab.fluid_solver import FluidEMState, FluidHistory, Primitives, RunConfig, gauss_residual, run
from vml_lab.kinetic_core import (
    GLOBAL_STATE,
    SQRT_MU_FLOOR,
    VelocityGrid,
    WeightSpec,
    log_maxwellian,
    sigma_matrix,
    sqrt_mu,
    weight_omega,
)
from vml_lab.landau_collision import ClosureBasis, CollisionParams, closure_basis

logger = logging.getLogger(__name__)

# the rate fits live in fitting and are re-exported with the other diagnostics
__all__ = [
    "PerturbationFields",
    "EnergyOptions",
    "EnergyReport",
    "perturbation_fields",
    "entropy_density",
    "entropy_pair",
    "closure_coefficients",
    "closure_fields",
    "default_closure",
    "frozen_closure_error",
    "theorem_bound",
    "initial_bound",
    "energy_ceiling",
    "coupled_delta",
    "target_exponent",
    "fan_rate_bound",
    "weight_conditions",
    "default_weight",
    "energy_functionals",
    "wave_error",
    "kinetic_grid_for",
    "run_with_report",
    "rate_fit",
    "refinement_order",
]

ENERGY_FACTOR = 100.0

MACRO_FIELDS = ("phi", "psi1", "psi2", "psi3", "zeta", "n", "E1", "E2", "E3", "B2", "B3")
HYDRO_ROWS = [0, 1, 2, 3, 4]
EM_ROWS = [6, 7, 8, 9, 10]
G1_NAMES = ("A1", "B11", "B12", "B13")
G2_NAMES = ("C1", "C2", "C3")
CLOSURE_NAMES = G1_NAMES + G2_NAMES
ALPHAS = {0: [(0, 0)], 1: [(1, 0), (0, 1)], 2: [(2, 0), (1, 1), (0, 2)]}
BETAS = {1: [(0,), (1,), (2,)], 2: [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]}

REPORT_COLUMNS = [
    "t",
    "tau",
    "E_tilde",
    "E_scaled",
    "E_macro",
    "E_micro",
    "D",
    "F_omega",
    "entropy_integral",
    "error_smoothed",
    "error_fan",
    "gauss_residual",
]


class PerturbationFields(NamedTuple):
    phi: np.ndarray
    psi: np.ndarray
    zeta: np.ndarray


def _wave_arrays(wave: GasState, shape) -> tuple:
    rho = np.broadcast_to(np.asarray(wave.rho, dtype=float), shape)
    u = np.stack([np.broadcast_to(np.asarray(c, dtype=float), shape) for c in wave.u])
    theta = np.broadcast_to(np.asarray(wave.theta, dtype=float), shape)
    return rho, u, theta


def _state_arrays(state, x=None):
    if isinstance(state, FluidEMState):
        P = state.primitives
        return P.rho, P.u, P.theta, state.grid.centers
    if x is None:
        raise GridError("a GasState needs its x coordinates")
    rho = np.asarray(state.rho, dtype=float)
    x = np.asarray(x, dtype=float)
    if rho.shape != x.shape:
        raise GridError(f"state shape {rho.shape} does not match x grid {x.shape}")
    return _wave_arrays(state, x.shape) + (x,)


def _state_time(state, t):
    if t is not None:
        return float(t)
    if isinstance(state, FluidEMState):
        return state.t
    raise DomainError("a GasState needs an explicit time")


def perturbation_fields(state, wave: WaveProfile, t: Optional[float] = None, x=None) -> PerturbationFields:
    """(phi, psi, zeta) = (rho - rho_bar, u - u_bar, theta - theta_bar)."""
    rho, u, theta, x = _state_arrays(state, x)
    t = _state_time(state, t)
    rho_b, u_b, theta_b = _wave_arrays(wave.state(t, x), x.shape)
    return PerturbationFields(rho - rho_b, u - u_b, theta - theta_b)


def _phi_convex(s):
    return s - np.log(s) - 1.0


def entropy_density(rho, u, theta, rho_b, u_b, theta_b):
    """eta = R rho theta_b Phi(rho_b / rho) + rho theta_b Phi(theta / theta_b) + rho |u - u_b|^2 / 2."""
    for name, value in (("rho", rho), ("theta", theta), ("rho_bar", rho_b), ("theta_bar", theta_b)):
        if np.any(np.asarray(value) <= 0):
            msg = f"entropy needs positive {name}"
            logger.error(msg)
            raise DomainError(msg)
    du = np.asarray(u) - np.asarray(u_b)
    return R * rho * theta_b * _phi_convex(rho_b / rho) + rho * theta_b * _phi_convex(theta / theta_b) + 0.5 * rho * np.sum(du**2, axis=0)


def entropy_pair(state, wave: WaveProfile, t: Optional[float] = None, eps: float = None, a: float = None, x=None):
    """(eta, q, int eta); the integral is in y = x / eps^a when eps and a are given."""
    rho, u, theta, x = _state_arrays(state, x)
    t = _state_time(state, t)
    rho_b, u_b, theta_b = _wave_arrays(wave.state(t, x), x.shape)
    eta = entropy_density(rho, u, theta, rho_b, u_b, theta_b)
    phi, psi1, zeta = rho - rho_b, u[0] - u_b[0], theta - theta_b
    q = u[0] * eta + R * (phi * psi1 * theta_b + rho * psi1 * zeta)
    dx = float(x[1] - x[0]) if x.size > 1 else 1.0
    integral = float(np.sum(eta) * dx)
    if eps is not None and a is not None:
        integral /= eps**a
    return eta, q, integral


@dataclass(frozen=True)
class EnergyOptions:
    include_beta: bool = False
    include_f_block: bool = True
    fan_h: float = 0.1
    chunk: int = 256


@dataclass
class EnergyReport:
    table: pd.DataFrame
    eps: float
    a: float
    weight: WeightSpec

    def summary(self) -> Dict[str, float]:
        t = self.table
        return {
            "sup_E_tilde": float(t["E_tilde"].max()),
            "sup_D": float(t["D"].max()),
            "sup_F_omega": float(t["F_omega"].max()),
            "sup_error_smoothed": float(t["error_smoothed"].max()),
            "sup_error_fan": float(t["error_fan"].max(skipna=True)) if t["error_fan"].notna().any() else float("nan"),
            "sup_gauss_residual": float(t["gauss_residual"].max()),
        }


def closure_coefficients(state: FluidEMState, wave: WaveProfile, t: Optional[float] = None, eps: Optional[float] = None) -> Dict[str, np.ndarray]:
    """Coefficients of G1, G1_bar and G2 on the closure fields, per cell."""
    t = _state_time(state, t)
    eps = state.config.eps if eps is None else eps
    dx = state.grid.dx
    x = state.grid.centers
    P = state.primitives
    rho_b, u_b, theta_b = _wave_arrays(wave.state(t, x), x.shape)

    def d(f):
        return np.gradient(f, dx, edge_order=2)

    W = P.E + np.cross(P.u, P.B, axis=0)
    rt = R * P.theta
    G1 = {
        "A1": eps * np.sqrt(R / P.theta) * d(P.theta),
        "B11": eps * d(P.u[0]),
        "B12": eps * d(P.u[1]),
        "B13": eps * d(P.u[2]),
    }
    G1_bar = {
        "A1": eps * np.sqrt(R / theta_b) * d(theta_b),
        "B11": eps * d(u_b[0]),
        "B12": np.zeros_like(x),
        "B13": np.zeros_like(x),
    }
    G2 = {
        "C1": eps * d(P.n / P.rho) - eps * W[0] / rt,
        "C2": -eps * W[1] / rt,
        "C3": -eps * W[2] / rt,
    }
    return {"G1": G1, "G1_bar": G1_bar, "G2": G2}


def closure_fields(
    state: FluidEMState,
    wave: WaveProfile,
    t: Optional[float] = None,
    eps: Optional[float] = None,
    basis: Optional[ClosureBasis] = None,
) -> Dict[str, np.ndarray]:
    """Coefficients of g1 = (G1 - G1_bar) / sqrt(mu) and g2 = G2 / sqrt(mu) on CLOSURE_NAMES.

    With a basis the assembled fields are added under "g1" and "g2",
    each of shape (nx, n, n, n).
    """
    c = closure_coefficients(state, wave, t, eps)
    g1 = {k: c["G1"][k] - c["G1_bar"][k] for k in G1_NAMES}
    out = dict(g1, **c["G2"])
    if basis is not None:
        grid = basis.fields["A1"].grid
        inv = _inverse_sqrt_mu(grid)
        out["g1"] = basis.combine(g1) * inv
        out["g2"] = basis.combine(c["G2"]) * inv
    return out


def _inverse_sqrt_mu(grid: VelocityGrid) -> np.ndarray:
    root = sqrt_mu(grid)
    safe = root >= SQRT_MU_FLOOR
    return np.where(safe, 1.0 / np.where(safe, root, 1.0), 0.0)


def default_closure(n: int = 11, v_max: float = 5.0, gamma: float = -3.0, threads: int = 4):
    """(basis, params) of the closure at the global Maxwellian on a desk-scale grid."""
    params = CollisionParams(VelocityGrid(n, v_max), gamma)
    return closure_basis(GLOBAL_STATE, params, threads), params


def frozen_closure_error(
    state: GasState,
    params: CollisionParams,
    frozen: Optional[ClosureBasis] = None,
    threads: int = 4,
) -> Dict[str, float]:
    """Relative L2 distance of each frozen response field from the one solved at ``state``.

    The "max" entry is the largest of them.
    """
    frozen = frozen or closure_basis(GLOBAL_STATE, params, threads)
    local = closure_basis(state, params, threads)
    errors = {}
    for name in CLOSURE_NAMES:
        exact = local.fields[name]
        errors[name] = (exact - frozen.fields[name]).norm() / exact.norm()
    errors["max"] = max(errors.values())
    logger.info(f"Frozen closure error at rho={float(state.rho):.4g}, theta={float(state.theta):.4g}: {errors['max']:.3e}")
    return errors


def theorem_bound(eps: float, a: float, delta: float, T: float) -> float:
    """(1 + T)^2 (eps^(2-a) + eps^(1+a)) / delta^3."""
    return (1.0 + T) ** 2 * initial_bound(eps, a, delta)


def initial_bound(eps: float, a: float, delta: float) -> float:
    return (eps ** (2.0 - a) + eps ** (1.0 + a)) / delta**3


def energy_ceiling(E0: float, eps: float, a: float, delta: float, T: float, factor: float = ENERGY_FACTOR) -> float:
    """Largest admissible E_tilde over [0, T]: factor (E_tilde(0) + theorem_bound)."""
    if factor <= 0:
        raise DomainError(f"energy bound factor must be positive, got {factor}")
    return factor * (max(float(E0), 0.0) + theorem_bound(eps, a, delta, T))


def coupled_delta(eps: float, a: float, T: float) -> float:
    """delta = (1 + T)^(2/5) max(eps^((1-a)/5), eps^((3a-1)/5))."""
    return (1.0 + T) ** 0.4 * max(eps ** ((1.0 - a) / 5.0), eps ** ((3.0 * a - 1.0) / 5.0))


def target_exponent(a: float) -> float:
    return min((1.0 - a) / 5.0, (3.0 * a - 1.0) / 5.0)


def fan_rate_bound(eps: float, a: float, T: float, h: float) -> float:
    """Shape of the exact-fan error bound with unit constant."""
    return (1.0 + T) ** 0.4 * (math.log1p(T) + abs(math.log(eps))) * (eps ** ((1.0 - a) / 5.0) + eps ** ((3.0 * a - 1.0) / 5.0)) / h


def weight_conditions(eps: float, a: float, delta: float, T: float, q2: float = 0.25) -> Dict[str, float]:
    """The smallness quantities the existence theory asks to be small, and the least admissible q1."""
    return {
        "eps_T": eps * (1.0 + T),
        "interaction": (1.0 + T) * (eps ** (a / 2.0) + eps ** (1.5 * a - 0.5)) / delta**1.5,
        "energy": (1.0 + T) ** 3 * (eps ** (1.0 - a) + eps**a) / delta**3,
        "q1_min": (1.0 + T) ** 3 / q2 * (eps ** (1.0 - a / 2.0) + eps ** (0.5 + a / 2.0)) / delta**1.5,
    }


def default_weight(eps: float, a: float, delta: float, T: float, q2: float = 0.25, l: int = 2) -> WeightSpec:
    q1 = float(np.clip(weight_conditions(eps, a, delta, T, q2)["q1_min"], 1e-6, 0.99))
    return WeightSpec(l=l, q1=q1, q2=q2)


class _Jets:
    """Space-time derivatives up to second order of snapshot arrays (S, k, nx)."""

    def __init__(self, values: np.ndarray, times: np.ndarray, dx: float):
        def d_t(f):
            return np.gradient(f, times, axis=0, edge_order=2)

        def d_x(f):
            return np.gradient(f, dx, axis=-1, edge_order=2)

        self.d = {(0, 0): values, (1, 0): d_t(values), (0, 1): d_x(values)}
        self.d[(2, 0)] = d_t(self.d[(1, 0)])
        self.d[(1, 1)] = d_t(self.d[(0, 1)])
        self.d[(0, 2)] = d_x(self.d[(0, 1)])

    def __getitem__(self, alpha):
        return self.d[alpha]


class _ClosureGrams:
    """Velocity Gram matrices of the closure fields / sqrt(mu) per snapshot time."""

    def __init__(self, basis: ClosureBasis, params: CollisionParams, weight: WeightSpec, times_t: np.ndarray, include_beta: bool):
        grid = params.grid
        self.grid = grid
        self.weight = weight
        self.times = times_t
        self.inv_sqrt_mu = _inverse_sqrt_mu(grid)
        self.inv_mu = self.inv_sqrt_mu**2
        fields = np.stack([basis.fields[name].values for name in CLOSURE_NAMES]) * self.inv_sqrt_mu
        self.fields = fields
        self.raw = np.stack([basis.fields[name].values for name in CLOSURE_NAMES])
        self.sigma = sigma_matrix(grid, params.gamma)
        self.bracket2 = 1.0 + grid.speed2
        block = np.zeros((len(CLOSURE_NAMES),) * 2)
        block[: len(G1_NAMES), : len(G1_NAMES)] = 1.0
        block[len(G1_NAMES) :, len(G1_NAMES) :] = 1.0
        self.block = block
        self.derived = {0: fields[None]}
        if include_beta:
            grads = np.stack([grid.gradient(f) for f in fields], axis=1)  # (3, 7, ...)
            self.derived[1] = grads
            second = []
            for i, j in BETAS[2]:
                second.append(np.stack([np.gradient(grads[i, c], grid.h, axis=j, edge_order=2) for c in range(len(CLOSURE_NAMES))]))
            self.derived[2] = np.stack(second)
        self._cache = {}

    def _omega2(self, s: int, alpha_order: int, beta_order: int) -> np.ndarray:
        spec = self.weight.orders(alpha_order, beta_order)
        return weight_omega(spec, float(self.times[s]), self.grid) ** 2

    def gram(self, kind: str, s: int, alpha_order: int, beta_order: int = 0) -> np.ndarray:
        key = (kind, s, alpha_order, beta_order)
        if key in self._cache:
            return self._cache[key]
        w = self._omega2(s, alpha_order, beta_order)
        F = self.derived[beta_order]
        h3 = self.grid.weight
        if kind == "omega":
            G = np.einsum("mc...,md...,...->cd", F, F, w) * h3
        elif kind == "v":
            G = np.einsum("mc...,md...,...->cd", F, F, w * self.bracket2) * h3
        elif kind == "sigma":
            vsv = np.einsum("ij...,i...,j...->...", self.sigma, self.grid.v, self.grid.v) / 4.0
            G = np.einsum("mc...,md...,...->cd", F, F, w * vsv) * h3
            for m in range(F.shape[0]):
                grads = np.stack([self.grid.gradient(F[m, c]) for c in range(F.shape[1])])  # (7, 3, ...)
                flux = np.einsum("ij...,cj...->ci...", self.sigma, grads)
                G += np.einsum("ci...,di...,...->cd", flux, grads, w) * h3
        else:
            raise DomainError(f"unknown Gram kind {kind!r}")
        G = G * self.block
        self._cache[key] = G
        return G


def _quad_form(coef: np.ndarray, gram: np.ndarray, dvol: float) -> float:
    """sum_x c(x)^T G c(x) dvol for coef of shape (7, nx)."""
    return float(np.einsum("cx,cd,dx->", coef, gram, coef) * dvol)


def _macro_block(jets: _Jets, s: int, order: int, rows, dvol: float) -> float:
    total = 0.0
    for alpha in ALPHAS[order]:
        total += float(np.sum(jets[alpha][s, rows, :] ** 2) * dvol)
    return total


def _micro_block(jets: _Jets, grams: _ClosureGrams, kind: str, s: int, order: int, dvol: float) -> float:
    gram = grams.gram(kind, s, order)
    return sum(_quad_form(jets[alpha][s], gram, dvol) for alpha in ALPHAS[order])


def _beta_block(jets: _Jets, grams: _ClosureGrams, kind: str, s: int, dvol: float, prefactor=None) -> float:
    """Mixed (alpha, beta) blocks with 1 <= |beta| and |alpha| + |beta| <= 2."""
    total = 0.0
    for alpha_order in (0, 1):
        for beta_order in (1, 2):
            if alpha_order + beta_order > 2:
                continue
            gram = grams.gram(kind, s, alpha_order, beta_order)
            weight = prefactor(alpha_order) if prefactor else 1.0
            total += weight * sum(_quad_form(jets[alpha][s], gram, dvol) for alpha in ALPHAS[alpha_order])
    return total


def _dlog_maxwellian(c, P, a_, b_=None, ab=None):
    """First (and mixed second) derivative of ln M along generic directions.

    P, a_, b_, ab hold (rho, u1, u2, u3, theta) rows broadcast against v.
    """
    rho, theta = P[0], P[4]
    c2 = np.sum(c**2, axis=0)
    la = a_[0] / rho - 1.5 * a_[4] / theta + np.sum(c * a_[1:4], axis=0) / (R * theta) + c2 * a_[4] / (2.0 * R * theta**2)
    if b_ is None:
        return la
    lab = (
        ab[0] / rho
        - a_[0] * b_[0] / rho**2
        - 1.5 * (ab[4] / theta - a_[4] * b_[4] / theta**2)
        + (-np.sum(a_[1:4] * b_[1:4], axis=0) + np.sum(c * ab[1:4], axis=0)) / (R * theta)
        - np.sum(c * a_[1:4], axis=0) * b_[4] / (R * theta**2)
        - np.sum(c * b_[1:4], axis=0) * a_[4] / (R * theta**2)
        + c2 * ab[4] / (2.0 * R * theta**2)
        - c2 * a_[4] * b_[4] / (R * theta**3)
    )
    return la, lab


def _f_block(prim: _Jets, coefs: _Jets, grams: _ClosureGrams, s: int, dvol: float, chunk: int) -> float:
    """sum_{|alpha|=2} || <v> mu^(-1/2) d^alpha (F1, F2) ||_omega^2 with F from the closure."""
    grid = grams.grid
    w = grams._omega2(s, 2, 0) * grams.bracket2 * grams.inv_mu
    raw_fields = grams.raw
    nx = prim[(0, 0)].shape[-1]
    total = 0.0
    pairs = {(2, 0): ((1, 0), (1, 0)), (1, 1): ((1, 0), (0, 1)), (0, 2): ((0, 1), (0, 1))}
    expand = (slice(None), slice(None)) + (None,) * 3
    for alpha, (da, db) in pairs.items():
        for lo in range(0, nx, chunk):
            sl = slice(lo, min(nx, lo + chunk))

            def rows(key):
                return prim[key][s][:, sl][expand]

            P, A, B, AB = rows((0, 0)), rows(da), rows(db), rows(alpha)
            rho, u, theta, n = P[0], P[1:4], P[4], P[5]
            c = grid.v[:, None] - u
            log_m = np.log(rho) - 1.5 * np.log(2.0 * math.pi * R * theta) - np.sum(c**2, axis=0) / (2.0 * R * theta)
            M = np.exp(log_m)
            la = _dlog_maxwellian(c, P, A)
            lb = _dlog_maxwellian(c, P, B)
            _, lab = _dlog_maxwellian(c, P, A, B, AB)
            M_a, M_b, M_ab = M * la, M * lb, M * (la * lb + lab)

            r = n / rho
            r_a = A[5] / rho - n * A[0] / rho**2
            r_b = B[5] / rho - n * B[0] / rho**2
            r_ab = AB[5] / rho - (A[5] * B[0] + B[5] * A[0] + n * AB[0]) / rho**2 + 2.0 * n * A[0] * B[0] / rho**3

            k = coefs[alpha][s][:, sl]
            G1 = np.einsum("cx,c...->x...", k[: len(G1_NAMES)], raw_fields[: len(G1_NAMES)])
            G2 = np.einsum("cx,c...->x...", k[len(G1_NAMES) :], raw_fields[len(G1_NAMES) :])
            F1 = M_ab + G1
            F2 = r_ab * M + r_a * M_b + r_b * M_a + r * M_ab + G2
            total += float(np.sum((F1**2 + F2**2) * w) * grid.weight * dvol)
    return total


def _require_history(history: FluidHistory):
    if len(history.snapshots) < 3:
        msg = f"energy functionals need at least 3 snapshots, got {len(history.snapshots)}"
        logger.error(msg)
        raise HistoryError(msg)


def _stack_snapshots(history: FluidHistory, wave: WaveProfile, eps: float):
    macro, prim, micro, full = [], [], [], []
    for state in history.snapshots:
        P = state.primitives
        pert = perturbation_fields(state, wave)
        macro.append(np.vstack([pert.phi, pert.psi, pert.zeta, P.n, P.E, P.B[1:]]))
        prim.append(np.vstack([P.rho, P.u, P.theta, P.n]))
        c = closure_coefficients(state, wave, eps=eps)
        micro.append(np.stack([c["G1"][k] - c["G1_bar"][k] for k in G1_NAMES] + [c["G2"][k] for k in G2_NAMES]))
        full.append(np.stack([c["G1"][k] for k in G1_NAMES] + [c["G2"][k] for k in G2_NAMES]))
    return np.stack(macro), np.stack(prim), np.stack(micro), np.stack(full)


def energy_functionals(
    history: FluidHistory,
    eps: float,
    a: float,
    weight: WeightSpec,
    options: EnergyOptions = EnergyOptions(),
    basis: Optional[ClosureBasis] = None,
    params: Optional[CollisionParams] = None,
    wave: Optional[WaveProfile] = None,
) -> EnergyReport:
    """Energy, dissipation and weighted-moment functionals at every snapshot.

    The wave defaults to the profile the run was configured with and the
    closure to ``default_closure()``.
    """
    _require_history(history)
    times = history.times
    if np.any(np.diff(times) <= 0):
        msg = "snapshot times must increase strictly"
        logger.error(msg)
        raise HistoryError(msg)
    wave = wave or history.config.profile
    if basis is None or params is None:
        basis, params = default_closure()
    dx = history.snapshots[0].grid.dx
    scale = eps**a
    macro, prim, micro, full = _stack_snapshots(history, wave, eps)

    # x-units, for E_tilde
    mx = _Jets(macro, times, dx)
    gx = _Jets(micro, times, dx)
    # (tau, y) units
    tau, dy = times / scale, dx / scale
    my = _Jets(macro, tau, dy)
    gy = _Jets(micro, tau, dy)
    py = _Jets(prim, tau, dy)
    fy = _Jets(full, tau, dy)

    grams = _ClosureGrams(basis, params, weight, times, options.include_beta)
    all_rows = list(range(len(MACRO_FIELDS)))
    fluid_rows = HYDRO_ROWS + [5]

    rows = []
    for s, state in enumerate(history.snapshots):
        e_macro = sum(eps ** ((2 * k - 1) * a) * _macro_block(mx, s, k, all_rows, dx) for k in (0, 1))
        e_macro += eps ** (2 + a) * _macro_block(mx, s, 2, all_rows, dx)
        e_micro = sum(eps ** ((2 * k - 1) * a) * _micro_block(gx, grams, "omega", s, k, dx) for k in (0, 1))
        e_micro += eps ** (2 + a) * _micro_block(gx, grams, "omega", s, 2, dx)
        if options.include_beta:
            e_micro += _beta_block(gx, grams, "omega", s, dx, prefactor=lambda k: eps ** ((2 * k - 1) * a))

        e_scaled = sum(_macro_block(my, s, k, all_rows, dy) + _micro_block(gy, grams, "omega", s, k, dy) for k in (0, 1))
        e_scaled += eps ** (2 - 2 * a) * (_macro_block(my, s, 2, all_rows, dy) + _micro_block(gy, grams, "omega", s, 2, dy))
        if options.include_beta:
            e_scaled += _beta_block(gy, grams, "omega", s, dy)

        P = state.primitives
        W = P.E + np.cross(P.u, P.B, axis=0)
        d_val = eps ** (1 + a) * _macro_block(my, s, 1, EM_ROWS, dy)
        d_val += eps ** (1 + a) * float((np.sum(P.n**2) + np.sum(W**2)) * dy)
        d_val += eps ** (1 - a) * sum(_macro_block(my, s, k, fluid_rows, dy) for k in (1, 2))
        d_val += eps ** (1 - a) * _micro_block(gy, grams, "sigma", s, 2, dy)
        d_val += eps ** (a - 1) * sum(_micro_block(gy, grams, "sigma", s, k, dy) for k in (0, 1))
        if options.include_beta:
            d_val += eps ** (a - 1) * _beta_block(gy, grams, "sigma", s, dy)

        f_val = eps**a * sum(_micro_block(gy, grams, "v", s, k, dy) for k in (0, 1))
        if options.include_f_block:
            f_val += eps ** (2 - a) * _f_block(py, fy, grams, s, dy, options.chunk)
        if options.include_beta:
            f_val += eps**a * _beta_block(gy, grams, "v", s, dy)

        _, _, ent = entropy_pair(state, wave, eps=eps, a=a)
        err_smooth = wave_error(state, wave, reference=SMOOTHED, basis=basis, params=params, eps=eps)["total"]
        err_fan = float("nan")
        if state.t >= options.fan_h:
            err_fan = wave_error(state, wave, reference=EXACT_FAN, basis=basis, params=params, h=options.fan_h, eps=eps)["total"]
        rows.append(
            {
                "t": state.t,
                "tau": state.t / scale,
                "E_tilde": e_macro + e_micro,
                "E_scaled": e_scaled,
                "E_macro": e_macro,
                "E_micro": e_micro,
                "D": d_val,
                "F_omega": f_val,
                "entropy_integral": ent,
                "error_smoothed": err_smooth,
                "error_fan": err_fan,
                "gauss_residual": gauss_residual(state),
            }
        )
    table = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    logger.info(f"Energy report over {len(rows)} snapshots: sup E_tilde = {table['E_tilde'].max():.4e}")
    return EnergyReport(table, eps, a, weight)


def wave_error(
    state: FluidEMState,
    wave: WaveProfile,
    t: Optional[float] = None,
    reference: str = SMOOTHED,
    basis: Optional[ClosureBasis] = None,
    params: Optional[CollisionParams] = None,
    h: float = 0.1,
    eps: Optional[float] = None,
) -> Dict[str, float]:
    """Sup-norm errors against the smoothed wave or the exact fan.

    Kinetic errors need the closure basis: F1 = M + G1 and F2 = (n / rho) M + G2,
    measured in L^inf_x L^2_v after division by sqrt(mu). Without a basis the
    "total" entry is the macroscopic error plus the field error.
    """
    t = _state_time(state, t)
    if reference == EXACT_FAN:
        if h <= 0 or t < h:
            msg = f"exact-fan reference needs t >= h > 0, got t={t}, h={h}"
            logger.error(msg)
            raise TimeTooSmallError(msg)
        ref_profile = wave.with_kind(EXACT_FAN)
    elif reference == SMOOTHED:
        ref_profile = wave.with_kind(SMOOTHED)
    else:
        msg = f"unknown reference {reference!r}"
        logger.error(msg)
        raise DomainError(msg)

    x = state.grid.centers
    P = state.primitives
    rho_r, u_r, theta_r = _wave_arrays(ref_profile.state(t, x), x.shape)
    out = {
        "rho": float(np.max(np.abs(P.rho - rho_r))),
        "u": float(np.max(np.sqrt(np.sum((P.u - u_r) ** 2, axis=0)))),
        "theta": float(np.max(np.abs(P.theta - theta_r))),
        "em": float(np.max(np.sqrt(np.sum(P.E**2, axis=0) + np.sum(P.B**2, axis=0)))),
    }
    if basis is None or params is None:
        out["kinetic"] = float("nan")
        out["total"] = max(out["rho"], out["u"], out["theta"]) + out["em"]
        return out

    grid = params.grid
    c = closure_coefficients(state, wave, t, eps)
    inv = _inverse_sqrt_mu(grid)
    worst = 0.0
    for i in range(len(x)):
        local = GasState(float(P.rho[i]), tuple(float(v) for v in P.u[:, i]), float(P.theta[i]))
        ref_i = GasState(float(rho_r[i]), tuple(float(v) for v in u_r[:, i]), float(theta_r[i]))
        M = np.exp(log_maxwellian(local, grid))
        G1 = sum(c["G1"][k][i] * basis.fields[k].values for k in G1_NAMES)
        G2 = sum(c["G2"][k][i] * basis.fields[k].values for k in G2_NAMES)
        f1 = (M + G1 - np.exp(log_maxwellian(ref_i, grid))) * inv
        f2 = (P.n[i] / P.rho[i] * M + G2) * inv
        worst = max(worst, float(grid.integrate(f1**2 + f2**2)))
    out["kinetic"] = math.sqrt(worst)
    out["total"] = out["kinetic"] + out["em"]
    return out


def kinetic_grid_for(history: FluidHistory, n: int) -> VelocityGrid:
    """A velocity grid resolving every Maxwellian met in the run."""
    P = Primitives(np.concatenate([s.U for s in history.snapshots], axis=1))
    theta_max = float(np.max(P.theta))
    speed = float(np.max(np.sqrt(np.sum(P.u**2, axis=0))))
    return VelocityGrid(n, speed + 8.0 * math.sqrt(R * theta_max))


def run_with_report(
    config: RunConfig,
    basis: ClosureBasis,
    params: CollisionParams,
    weight: Optional[WeightSpec] = None,
    options: EnergyOptions = EnergyOptions(),
):
    """Run the fluid system and evaluate the energy report on the snapshots reached.

    Returns (history, report); report is None when fewer than three
    snapshots exist. A vacuum failure is recorded in the history, not raised.
    """
    try:
        history = run(config)
    except VacuumError as err:
        if err.history is None:
            raise
        history = err.history
    if weight is None:
        delta = coupled_delta(config.eps, config.a, config.t_end)
        weight = default_weight(config.eps, config.a, delta, config.t_end)
    if len(history.snapshots) < 3:
        logger.warning(f"Only {len(history.snapshots)} snapshots; no energy report")
        return history, None
    report = energy_functionals(history, config.eps, config.a, weight, options, basis, params)
    return history, report
