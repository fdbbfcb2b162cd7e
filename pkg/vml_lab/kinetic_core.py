"""Velocity lattice, Maxwellians, moments and the macro-micro projections.

Fields live on a uniform Cartesian lattice [-v_max, v_max]^3 with an odd
number of nodes per axis, integrated with the midpoint rule (weight h^3).
Arrays are indexed (i1, i2, i3) along (v1, v2, v3); flat dumps use
Fortran order so that the v1 index runs fastest.
"""
import functools
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd

from vml_lab.errors import DomainError, GridError
from vml_lab.euler_waves import R, GasState
from vml_lab.landau_kernel import cached_kernel

logger = logging.getLogger(__name__)

GLOBAL_STATE = GasState(1.0, 0.0, 1.5)
GRAM_TOL = 1e-3
SQRT_MU_FLOOR = 1e-150


@dataclass(frozen=True)
class VelocityGrid:
    n: int
    v_max: float

    def __post_init__(self):
        if self.n < 9 or self.n % 2 == 0:
            raise GridError(f"velocity grid needs an odd n >= 9, got {self.n}")
        if not self.v_max > 0:
            raise GridError(f"v_max must be positive, got {self.v_max}")

    @classmethod
    def for_state(cls, state: GasState, n: int, margin: float = 8.0) -> "VelocityGrid":
        """Grid wide enough for M_[state]: v_max = |u| + margin sqrt(R theta)."""
        v_max = float(np.max(state.speed())) + margin * math.sqrt(R * float(np.max(state.theta)))
        return cls(n, v_max)

    @property
    def h(self) -> float:
        return 2.0 * self.v_max / (self.n - 1)

    @property
    def weight(self) -> float:
        return self.h**3

    @functools.cached_property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - (self.n - 1) // 2) * self.h

    @functools.cached_property
    def v(self) -> np.ndarray:
        """Node coordinates, shape (3, n, n, n)."""
        return np.stack(np.meshgrid(self.axis, self.axis, self.axis, indexing="ij"))

    @functools.cached_property
    def speed2(self) -> np.ndarray:
        return np.sum(self.v**2, axis=0)

    @property
    def shape(self) -> tuple:
        return (self.n,) * 3

    def integrate(self, values: np.ndarray):
        return np.sum(values, axis=(-3, -2, -1)) * self.weight

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Second-order central differences, one-sided at the boundary."""
        return np.stack(np.gradient(values, self.h, edge_order=2))


@dataclass(frozen=True, eq=False)
class KineticField:
    grid: VelocityGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    def _check(self, other: "KineticField"):
        if other.grid != self.grid:
            raise GridError("fields live on different velocity grids")

    def __add__(self, other):
        self._check(other)
        return KineticField(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return KineticField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return KineticField(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return KineticField(self.grid, -self.values)

    def inner(self, other: "KineticField") -> float:
        self._check(other)
        return float(self.grid.integrate(self.values * other.values))

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def to_frame(self) -> pd.DataFrame:
        """Flat dump in v1-fastest order."""
        v = self.grid.v
        return pd.DataFrame(
            {
                "v1": v[0].ravel(order="F"),
                "v2": v[1].ravel(order="F"),
                "v3": v[2].ravel(order="F"),
                "value": self.values.ravel(order="F"),
            }
        )


def log_maxwellian(state: GasState, grid: VelocityGrid) -> np.ndarray:
    rt = R * float(state.theta)
    dv2 = sum((grid.v[k] - float(state.u[k])) ** 2 for k in range(3))
    return math.log(float(state.rho)) - 1.5 * math.log(2.0 * math.pi * rt) - dv2 / (2.0 * rt)


def maxwellian(state: GasState, grid: VelocityGrid) -> KineticField:
    return KineticField(grid, np.exp(log_maxwellian(state, grid)))


def global_maxwellian(grid: VelocityGrid) -> KineticField:
    return maxwellian(GLOBAL_STATE, grid)


def collision_invariants(grid: VelocityGrid) -> np.ndarray:
    """phi_0..phi_4 = 1, v1, v2, v3, |v|^2 / 2 on the lattice."""
    return np.stack([np.ones(grid.shape), grid.v[0], grid.v[1], grid.v[2], 0.5 * grid.speed2])


class Moments(NamedTuple):
    rho: float
    momentum: np.ndarray
    energy: float
    state: GasState


def moments(f: KineticField) -> Moments:
    m = f.grid.integrate(collision_invariants(f.grid) * f.values)
    rho, momentum, energy = float(m[0]), np.array(m[1:4]), float(m[4])
    if rho <= 0:
        msg = f"degenerate moments: mass {rho} is not positive"
        logger.error(msg)
        raise DomainError(msg)
    u = momentum / rho
    theta = energy / rho - 0.5 * float(u @ u)
    if theta <= 0:
        msg = f"degenerate moments: internal energy {theta} is not positive"
        logger.error(msg)
        raise DomainError(msg)
    return Moments(rho, momentum, energy, GasState(rho, tuple(u), theta))


class HydroBasis:
    """Discrete orthonormal basis chi_0..chi_4 of ker L_M in <f, g>_M.

    chi_i = p_i(v) M with polynomials p_i; the inner product
    <f, chi_i>_M = sum f p_i h^3 never divides by M.  The raw polynomials
    are re-orthonormalized (Cholesky of the discrete Gram matrix) so that
    the projections are exact on the lattice.
    """

    def __init__(self, state: GasState, grid: VelocityGrid, charge_only: bool = False):
        self.state = state
        self.grid = grid
        self.M = maxwellian(state, grid).values
        rho, rt = float(state.rho), R * float(state.theta)
        z = [(grid.v[k] - float(state.u[k])) / math.sqrt(rt) for k in range(3)]
        raw = [np.ones(grid.shape), z[0], z[1], z[2], (z[0] ** 2 + z[1] ** 2 + z[2] ** 2 - 3.0) / math.sqrt(6.0)]
        if charge_only:
            raw = raw[:1]
        raw = np.stack(raw) / math.sqrt(rho)
        gram = np.einsum("a...,b...->ab", raw * self.M, raw) * grid.weight
        defect = float(np.max(np.abs(gram - np.eye(len(raw)))))
        self.gram_defect = defect
        if defect > GRAM_TOL:
            msg = f"velocity grid too coarse for M: Gram defect {defect:.2e} > {GRAM_TOL}"
            logger.error(msg)
            raise GridError(msg)
        L = np.linalg.cholesky(gram)
        self.polys = np.einsum("ab,b...->a...", np.linalg.inv(L), raw)

    @property
    def chis(self) -> np.ndarray:
        return self.polys * self.M

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        return np.einsum("a...,...->a", self.polys, values) * self.grid.weight

    def project(self, values: np.ndarray) -> np.ndarray:
        return np.einsum("a,a...->...", self.coefficients(values), self.polys) * self.M

    def symmetric_vectors(self) -> np.ndarray:
        """p_i sqrt(M): orthonormal in the plain h^3-weighted inner product."""
        return self.polys * np.sqrt(self.M)

    def project_symmetric(self, x: np.ndarray) -> np.ndarray:
        e = self.symmetric_vectors()
        c = np.einsum("a...,...->a", e, x) * self.grid.weight
        return np.einsum("a,a...->...", c, e)


@functools.lru_cache(maxsize=32)
def _hydro_basis(state_key: tuple, grid: VelocityGrid, charge_only: bool) -> HydroBasis:
    rho, u1, u2, u3, theta = state_key
    return HydroBasis(GasState(rho, (u1, u2, u3), theta), grid, charge_only)


def hydro_basis(state: GasState, grid: VelocityGrid, charge_only: bool = False) -> HydroBasis:
    key = (float(state.rho), *(float(c) for c in state.u), float(state.theta))
    return _hydro_basis(key, grid, charge_only)


def project_hydro(f: KineticField, ref_state: GasState):
    """(P0 f, P1 f) around M_[ref_state]."""
    p0 = hydro_basis(ref_state, f.grid).project(f.values)
    return KineticField(f.grid, p0), KineticField(f.grid, f.values - p0)


def project_charge(f: KineticField, ref_state: GasState):
    """(Pd f, Pr f) with Pd f = (n / rho) M."""
    pd_ = hydro_basis(ref_state, f.grid, charge_only=True).project(f.values)
    return KineticField(f.grid, pd_), KineticField(f.grid, f.values - pd_)


def symmetric_projection(x: np.ndarray, grid: VelocityGrid, ref_state: GasState = GLOBAL_STATE, charge_only: bool = False):
    """(P0 x, P1 x) for fields in the sqrt(M)-scaled picture."""
    p0 = hydro_basis(ref_state, grid, charge_only).project_symmetric(x)
    return p0, x - p0


@dataclass(frozen=True)
class WeightSpec:
    """Parameters of the time-velocity weight omega(alpha, beta)."""

    l: int = 2
    q1: float = 0.5
    q2: float = 0.25
    alpha_order: int = 0
    beta_order: int = 0

    def __post_init__(self):
        if not 0.0 < self.q2 < 0.5:
            msg = f"q2 must lie in (0, 1/2), got {self.q2}"
            logger.error(msg)
            raise DomainError(msg)
        if not 0.0 < self.q1 < 1.0:
            msg = f"q1 must lie in (0, 1), got {self.q1}"
            logger.error(msg)
            raise DomainError(msg)
        if self.l < self.alpha_order + self.beta_order:
            msg = f"l = {self.l} must be at least |alpha| + |beta| = {self.alpha_order + self.beta_order}"
            logger.error(msg)
            raise DomainError(msg)

    def q(self, t: float) -> float:
        return self.q2 / (1.0 + t) ** self.q1

    def orders(self, alpha_order: int, beta_order: int = 0) -> "WeightSpec":
        return WeightSpec(self.l, self.q1, self.q2, alpha_order, beta_order)


def weight_omega(spec: WeightSpec, t: float, v):
    """<v>^(2(l - |alpha| - |beta|)) exp(q(t) <v>^2 / 2).

    ``v`` is a VelocityGrid (field result) or an array whose last axis holds
    the three velocity components.
    """
    if isinstance(v, VelocityGrid):
        bracket2 = 1.0 + v.speed2
    else:
        v = np.asarray(v, dtype=float)
        bracket2 = 1.0 + np.sum(v**2, axis=-1)
    power = spec.l - spec.alpha_order - spec.beta_order
    return bracket2**power * np.exp(spec.q(t) * bracket2 / 2.0)


def weighted_norm(f: KineticField, spec: WeightSpec, t: float) -> float:
    omega = weight_omega(spec, t, f.grid)
    return math.sqrt(float(f.grid.integrate((omega * f.values) ** 2)))


def weighted_maxwellian_integral(spec: WeightSpec, state: GasState, grid: VelocityGrid, eps0: float = 0.1, t: float = 0.0):
    """Quadrature of omega^2 mu^-1 M^(2(1 - eps0)) and its integrability condition.

    Returns (value, admissible) where admissible is
    q2 < 1/(R theta) - 1/2 - eps0/(R theta).
    """
    rt = R * float(state.theta)
    admissible = spec.q2 < 1.0 / rt - 0.5 - eps0 / rt
    omega = weight_omega(spec, t, grid)
    log_m = log_maxwellian(state, grid)
    log_mu = log_maxwellian(GLOBAL_STATE, grid)
    integrand = omega**2 * np.exp(2.0 * (1.0 - eps0) * log_m - log_mu)
    return float(grid.integrate(integrand)), bool(admissible)


@functools.lru_cache(maxsize=8)
def _sigma(grid: VelocityGrid, gamma: float) -> np.ndarray:
    kernel = cached_kernel(grid.n, grid.h, gamma)
    return kernel.matrix(global_maxwellian(grid).values)


def sigma_matrix(grid: VelocityGrid, gamma: float = -3.0) -> np.ndarray:
    """sigma_ij = phi_ij * mu, shape (3, 3, n, n, n)."""
    if not -3.0 <= gamma < -2.0:
        msg = f"gamma must lie in [-3, -2), got {gamma}"
        logger.error(msg)
        raise DomainError(msg)
    return _sigma(grid, float(gamma))


def sigma_norm(f: KineticField, gamma: float = -3.0, weight: Optional[WeightSpec] = None, t: float = 0.0) -> float:
    """|f|_sigma, or |f|_{sigma,omega} when a weight is given."""
    grid = f.grid
    sigma = sigma_matrix(grid, gamma)
    grad = grid.gradient(f.values)
    quad = np.einsum("ij...,i...,j...->...", sigma, grad, grad)
    quad += np.einsum("ij...,i...,j...->...", sigma, grid.v, grid.v) * f.values**2 / 4.0
    if weight is not None:
        quad = quad * weight_omega(weight, t, grid) ** 2
    return math.sqrt(max(float(grid.integrate(quad)), 0.0))


def sigma_surrogate(f: KineticField, gamma: float = -3.0) -> float:
    """The equivalent norm built from <v> powers and radial/tangential gradients."""
    grid = f.grid
    bracket = np.sqrt(1.0 + grid.speed2)
    speed = np.sqrt(grid.speed2)
    unit = grid.v / np.where(speed > 0, speed, 1.0)
    grad = grid.gradient(f.values)
    radial = np.sum(grad * unit, axis=0)
    tangential = np.cross(grad, unit, axis=0)
    total = (
        grid.integrate((bracket ** ((gamma + 2) / 2) * f.values) ** 2)
        + grid.integrate((bracket ** (gamma / 2) * radial) ** 2)
        + grid.integrate(np.sum((bracket ** ((gamma + 2) / 2) * tangential) ** 2, axis=0))
    )
    return math.sqrt(float(total))


def sqrt_mu(grid: VelocityGrid) -> np.ndarray:
    return np.exp(0.5 * log_maxwellian(GLOBAL_STATE, grid))
