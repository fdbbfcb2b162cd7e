"""Landau collision operator, its linearizations and their inverses.

The operator is discretized in flux form Q = div J with node-collocated
fluxes J_i = sum_j (phi_ij * f) D_j g - (phi_ij * D_j f) g.  Two one-sided
gradients are used (forward and backward), each paired with the exact
negative adjoint of itself as divergence, and the results are averaged.
Gradients are taken relative to a reference Maxwellian M,

    D^M g = M D(g / M) + g d,   d = -(v - u) / (R theta),

so that D^M M = M d holds exactly on the lattice.  Fluxes and convolution
sources are restricted to the interior nodes where every one-sided face
exists; with the coincident node omitted from the kernel this makes mass,
momentum and energy conservation exact up to roundoff and Q(M, M) = 0.
"""
import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator

from vml_lab.errors import DomainError, GridError, NotInRangeError, SolverError
from vml_lab.euler_waves import R, GasState
from vml_lab.kinetic_core import (
    GLOBAL_STATE,
    SQRT_MU_FLOOR,
    KineticField,
    VelocityGrid,
    hydro_basis,
    log_maxwellian,
    sigma_norm,
    symmetric_projection,
)
from vml_lab.landau_kernel import LandauKernel, cached_kernel

logger = logging.getLogger(__name__)

SIGNS = (1, -1)
CG_TOL = 1e-9
CG_MAX_ITER = 5000
RANGE_TOL = 1e-8
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class CollisionParams:
    grid: VelocityGrid
    gamma: float = -3.0

    def __post_init__(self):
        if not -3.0 <= self.gamma < -2.0:
            msg = f"gamma must lie in [-3, -2), got {self.gamma}"
            logger.error(msg)
            raise DomainError(msg)

    @property
    def kernel(self) -> LandauKernel:
        return cached_kernel(self.grid.n, self.grid.h, float(self.gamma))

    def with_grid(self, grid: VelocityGrid) -> "CollisionParams":
        return CollisionParams(grid, self.gamma)


def _state_key(state: GasState) -> tuple:
    return (float(state.rho), *(float(c) for c in state.u), float(state.theta))


def _key_state(key: tuple) -> GasState:
    return GasState(key[0], key[1:4], key[4])


def _shift(a: np.ndarray, axis: int, step: int) -> np.ndarray:
    """b[i] = a[i + step] along axis, zero outside the lattice."""
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, None), slice(None, -step)
    else:
        src[axis], dst[axis] = slice(None, step), slice(-step, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


class _Weights:
    """Reference-Maxwellian data for the weighted one-sided gradients."""

    def __init__(self, grid: VelocityGrid, state: GasState):
        n, h = grid.n, grid.h
        rt = R * float(state.theta)
        self.grid = grid
        self.M = np.exp(log_maxwellian(state, grid))
        self.sqrt_m = np.sqrt(self.M)
        self.d = np.stack([-(grid.v[k] - float(state.u[k])) / rt for k in range(3)])
        self.ratio = {1: [], -1: []}
        for k in range(3):
            c = grid.axis - float(state.u[k])
            shape = [1, 1, 1]
            shape[k] = n
            # M[i] / M[i + 1] and M[i] / M[i - 1] along axis k
            self.ratio[1].append(np.exp((2.0 * c * h + h * h) / (2.0 * rt)).reshape(shape))
            self.ratio[-1].append(np.exp(-(2.0 * c * h - h * h) / (2.0 * rt)).reshape(shape))
        idx = np.arange(n)
        inner_plus = (idx < n - 1).astype(float)
        inner_minus = (idx > 0).astype(float)
        self.mask = {
            1: np.einsum("i,j,k->ijk", inner_plus, inner_plus, inner_plus),
            -1: np.einsum("i,j,k->ijk", inner_minus, inner_minus, inner_minus),
        }

    def gradient(self, g: np.ndarray, sign: int, drift: bool = True) -> np.ndarray:
        """One-sided D^M g (drift=True) or M D(g / M) (drift=False), masked."""
        h = self.grid.h
        out = np.empty((3,) + g.shape)
        for k in range(3):
            if sign > 0:
                out[k] = (_shift(g, k, 1) * self.ratio[1][k] - g) / h
            else:
                out[k] = (g - _shift(g, k, -1) * self.ratio[-1][k]) / h
            if drift:
                out[k] += g * self.d[k]
        return out * self.mask[sign]

    def divergence(self, J: np.ndarray, sign: int) -> np.ndarray:
        """Negative adjoint of the masked one-sided difference."""
        h = self.grid.h
        Jm = J * self.mask[sign]
        out = np.zeros(J.shape[1:])
        for k in range(3):
            if sign > 0:
                out += (Jm[k] - _shift(Jm[k], k, -1)) / h
            else:
                out += (_shift(Jm[k], k, 1) - Jm[k]) / h
        return out


@functools.lru_cache(maxsize=32)
def _weights(grid: VelocityGrid, state_key: tuple) -> _Weights:
    return _Weights(grid, _key_state(state_key))


def weights_for(grid: VelocityGrid, state: GasState) -> _Weights:
    return _weights(grid, _state_key(state))


def _check_grid(params: CollisionParams, *fields: KineticField):
    for f in fields:
        if f.grid != params.grid:
            msg = "field and collision parameters live on different velocity grids"
            logger.error(msg)
            raise GridError(msg)


def collide(G1: KineticField, G2: KineticField, params: CollisionParams, reference: Optional[GasState] = None) -> KineticField:
    """Q(G1, G2) in flux form, gradients weighted by M_[reference] (default mu)."""
    _check_grid(params, G1, G2)
    w = weights_for(params.grid, reference or GLOBAL_STATE)
    kernel = params.kernel
    f, g = G1.values, G2.values
    total = np.zeros(params.grid.shape)
    for sign in SIGNS:
        A = kernel.matrix(f * w.mask[sign])
        J = np.einsum("ij...,j...->i...", A, w.gradient(g, sign)) - kernel.vector(w.gradient(f, sign)) * g
        total += w.divergence(J, sign)
    return KineticField(params.grid, 0.5 * total)


def _over_sqrt(values: np.ndarray, sqrt_m: np.ndarray) -> np.ndarray:
    safe = sqrt_m >= SQRT_MU_FLOOR
    return np.where(safe, values / np.where(safe, sqrt_m, 1.0), 0.0)


def gamma_bilinear(h1: KineticField, h2: KineticField, params: CollisionParams) -> KineticField:
    """Gamma(h1, h2) = mu^(-1/2) Q(sqrt(mu) h1, sqrt(mu) h2)."""
    _check_grid(params, h1, h2)
    w = weights_for(params.grid, GLOBAL_STATE)
    q = collide(KineticField(params.grid, w.sqrt_m * h1.values), KineticField(params.grid, w.sqrt_m * h2.values), params)
    return KineticField(params.grid, _over_sqrt(q.values, w.sqrt_m))


class LinearizedCollision:
    """Matrix-free L_M g = Q(M, g) + Q(g, M), or calL_M g = Q(M, g) when full=False.

    With D = M D(g / M) the two parts are J_a = sigma^M D and
    J_b = -M (phi * D); both are symmetric and non-positive in
    <f, g>_M = sum f g / M h^3.
    """

    def __init__(self, state: GasState, params: CollisionParams, full: bool = True):
        self.state = state
        self.params = params
        self.full = full
        self.weights = weights_for(params.grid, state)
        kernel = params.kernel
        self.sigma = {sign: kernel.matrix(self.weights.M * self.weights.mask[sign]) for sign in SIGNS}
        self.basis = hydro_basis(state, params.grid, charge_only=not full)

    def apply(self, g: np.ndarray) -> np.ndarray:
        w = self.weights
        kernel = self.params.kernel
        total = np.zeros(g.shape)
        for sign in SIGNS:
            D = w.gradient(g, sign, drift=False)
            J = np.einsum("ij...,j...->i...", self.sigma[sign], D)
            if self.full:
                J -= w.M * kernel.vector(D)
            total += w.divergence(J, sign)
        return 0.5 * total

    def apply_symmetric(self, x: np.ndarray) -> np.ndarray:
        """A x = -M^(-1/2) L(M^(1/2) x), symmetric positive semi-definite."""
        w = self.weights
        return -_over_sqrt(self.apply(w.sqrt_m * x), w.sqrt_m)

    def jacobi(self) -> np.ndarray:
        w = self.weights
        grid = self.params.grid
        rt = R * float(self.state.theta)
        diag = np.zeros(grid.shape)
        for sign in SIGNS:
            for k in range(3):
                s = self.sigma[sign][k, k]
                offset = grid.v[k] - float(self.state.u[k])
                diag += 0.5 * (s / grid.h**2 + s * offset**2 / (4.0 * rt**2))
        return np.maximum(diag, 1e-12 * float(np.max(diag)))

    def null_vectors(self) -> np.ndarray:
        return self.basis.symmetric_vectors()

    def deflate(self, x: np.ndarray) -> np.ndarray:
        return x - self.basis.project_symmetric(x)


@functools.lru_cache(maxsize=16)
def _operator(state_key: tuple, params: CollisionParams, full: bool) -> LinearizedCollision:
    return LinearizedCollision(_key_state(state_key), params, full)


def linearized_operator(state: GasState, params: CollisionParams, full: bool = True) -> LinearizedCollision:
    return _operator(_state_key(state), params, full)


def linearized_LM(g: KineticField, state: GasState, params: CollisionParams) -> KineticField:
    _check_grid(params, g)
    return KineticField(params.grid, linearized_operator(state, params).apply(g.values))


def linearized_calLM(g: KineticField, state: GasState, params: CollisionParams) -> KineticField:
    _check_grid(params, g)
    return KineticField(params.grid, linearized_operator(state, params, full=False).apply(g.values))


def linearized_L(h: KineticField, params: CollisionParams) -> KineticField:
    """L h = Gamma(sqrt(mu), h) + Gamma(h, sqrt(mu))."""
    _check_grid(params, h)
    return KineticField(params.grid, -linearized_operator(GLOBAL_STATE, params).apply_symmetric(h.values))


def linearized_calL(h: KineticField, params: CollisionParams) -> KineticField:
    """calL h = Gamma(sqrt(mu), h)."""
    _check_grid(params, h)
    return KineticField(params.grid, -linearized_operator(GLOBAL_STATE, params, full=False).apply_symmetric(h.values))


def deflated_pcg(op: LinearizedCollision, b: np.ndarray, tol: float = CG_TOL, max_iter: int = CG_MAX_ITER) -> Tuple[np.ndarray, int]:
    """Preconditioned CG for A x = b on the complement of the null space.

    Every residual and search direction is re-projected onto the complement
    of the discrete collision invariants.
    """
    weight = op.params.grid.weight
    inv_diag = 1.0 / op.jacobi()

    def dot(p, q):
        return float(np.sum(p * q)) * weight

    b = op.deflate(b)
    b_norm = math.sqrt(dot(b, b))
    x = np.zeros_like(b)
    if b_norm == 0.0:
        return x, 0
    r = b.copy()
    z = op.deflate(inv_diag * r)
    d = z.copy()
    rz = dot(r, z)
    for k in range(1, max_iter + 1):
        Ad = op.deflate(op.apply_symmetric(d))
        curvature = dot(d, Ad)
        if curvature <= 0.0:
            msg = f"CG lost positive curvature at iteration {k} ({curvature:.3e})"
            logger.error(msg)
            raise SolverError(msg)
        alpha = rz / curvature
        x = op.deflate(x + alpha * d)
        r = op.deflate(r - alpha * Ad)
        r_norm = math.sqrt(dot(r, r))
        if r_norm <= tol * b_norm:
            logger.debug(f"CG converged in {k} iterations, relative residual {r_norm / b_norm:.2e}")
            return x, k
        z = op.deflate(inv_diag * r)
        rz_next = dot(r, z)
        d = z + (rz_next / rz) * d
        rz = rz_next
    msg = f"CG did not converge in {max_iter} iterations (relative residual {r_norm / b_norm:.2e})"
    logger.error(msg)
    raise SolverError(msg)


def _invert(rhs: KineticField, state: GasState, params: CollisionParams, full: bool, tol: float, max_iter: int) -> KineticField:
    _check_grid(params, rhs)
    op = linearized_operator(state, params, full)
    b = -_over_sqrt(rhs.values, op.weights.sqrt_m)
    weight = params.grid.weight
    b_norm = math.sqrt(float(np.sum(b * b)) * weight)
    if b_norm == 0.0:
        return KineticField(params.grid, np.zeros(params.grid.shape))
    null_part = b - op.deflate(b)
    null_norm = math.sqrt(float(np.sum(null_part * null_part)) * weight)
    if null_norm > RANGE_TOL * b_norm:
        msg = f"right-hand side not in the range: null-space component {null_norm / b_norm:.2e} (relative)"
        logger.error(msg)
        raise NotInRangeError(msg)

    x, iterations = deflated_pcg(op, b, tol, max_iter)
    residual = op.deflate(op.apply_symmetric(x)) - op.deflate(b)
    rel = math.sqrt(float(np.sum(residual * residual)) * weight) / b_norm
    if rel > RESIDUAL_TOL:
        msg = f"substitution residual {rel:.2e} exceeds {RESIDUAL_TOL:.0e}"
        logger.error(msg)
        raise SolverError(msg)
    if iterations > max_iter // 2:
        logger.warning(f"slow CG convergence: {iterations} iterations")
    return KineticField(params.grid, op.weights.sqrt_m * x)


def invert_LM(rhs: KineticField, state: GasState, params: CollisionParams, tol: float = CG_TOL, max_iter: int = CG_MAX_ITER) -> KineticField:
    """X with L_M X = rhs and P0 X = 0."""
    return _invert(rhs, state, params, True, tol, max_iter)


def invert_calLM(rhs: KineticField, state: GasState, params: CollisionParams, tol: float = CG_TOL, max_iter: int = CG_MAX_ITER) -> KineticField:
    """X with calL_M X = rhs and Pd X = 0."""
    return _invert(rhs, state, params, False, tol, max_iter)


def dense_symmetric_matrix(state: GasState, params: CollisionParams, full: bool = True) -> np.ndarray:
    """Assemble A = -M^(-1/2) L_M M^(1/2) column by column (tiny grids only)."""
    op = linearized_operator(state, params, full)
    size = params.grid.n**3
    if size > 20**3:
        raise GridError(f"dense assembly refused for {size} unknowns")
    columns = np.empty((size, size))
    unit = np.zeros(size)
    for k in range(size):
        unit[k] = 1.0
        columns[:, k] = op.apply_symmetric(unit.reshape(params.grid.shape)).ravel()
        unit[k] = 0.0
    return columns


def dense_invert_LM(rhs: KineticField, state: GasState, params: CollisionParams, full: bool = True) -> KineticField:
    """Direct solve of the projected system by eigen-decomposition."""
    op = linearized_operator(state, params, full)
    A = dense_symmetric_matrix(state, params, full)
    A = 0.5 * (A + A.T)
    values, vectors = np.linalg.eigh(A)
    keep = values > 1e-10 * float(np.max(values))
    b = op.deflate(-_over_sqrt(rhs.values, op.weights.sqrt_m)).ravel()
    x = vectors[:, keep] @ ((vectors[:, keep].T @ b) / values[keep])
    x = op.deflate(x.reshape(params.grid.shape))
    return KineticField(params.grid, op.weights.sqrt_m * x)


def _scaled_velocity(state: GasState, grid: VelocityGrid) -> np.ndarray:
    s = math.sqrt(R * float(state.theta))
    return np.stack([(grid.v[k] - float(state.u[k])) / s for k in range(3)])


def burnett_polynomials(state: GasState, grid: VelocityGrid):
    """A_hat_j(z) and B_hat_ij(z) at z = (v - u) / sqrt(R theta)."""
    z = _scaled_velocity(state, grid)
    z2 = np.sum(z**2, axis=0)
    a_hat = 0.5 * (z2 - 5.0) * z
    b_hat = np.einsum("i...,j...->ij...", z, z) - np.eye(3)[:, :, None, None, None] * z2 / 3.0
    return a_hat, b_hat


@dataclass(frozen=True, eq=False)
class BurnettSet:
    state: GasState
    A: Tuple[KineticField, ...]
    B: Tuple[Tuple[KineticField, ...], ...]

    def field(self, name: str) -> KineticField:
        """Lookup by name: "A1", "B12", ..."""
        if name[0] == "A":
            return self.A[int(name[1]) - 1]
        return self.B[int(name[1]) - 1][int(name[2]) - 1]


def burnett_functions(state: GasState, params: CollisionParams, threads: int = 4) -> BurnettSet:
    grid = params.grid
    basis = hydro_basis(state, grid)
    M = basis.M
    a_hat, b_hat = burnett_polynomials(state, grid)
    jobs = {f"A{j + 1}": a_hat[j] for j in range(3)}
    jobs.update({f"B{i + 1}{j + 1}": b_hat[i, j] for i in range(3) for j in range(i, 3)})

    def solve(poly):
        rhs = poly * M
        rhs = rhs - basis.project(rhs)
        return invert_LM(KineticField(grid, rhs), state, params)

    linearized_operator(state, params)
    logger.info(f"Solving {len(jobs)} Burnett systems at {state} on n={grid.n}")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = {name: pool.submit(solve, poly) for name, poly in jobs.items()}
        solved = {name: future.result() for name, future in futures.items()}
    A = tuple(solved[f"A{j}"] for j in (1, 2, 3))
    B = tuple(tuple(solved[f"B{min(i, j)}{max(i, j)}"] for j in (1, 2, 3)) for i in (1, 2, 3))
    return BurnettSet(state, A, B)


def charge_response(state: GasState, params: CollisionParams, threads: int = 3) -> Tuple[KineticField, ...]:
    """C_j = calL_M^(-1) Pr(v_j M) = calL_M^(-1)((v_j - u_j) M)."""
    grid = params.grid
    basis = hydro_basis(state, grid, charge_only=True)

    def solve(j):
        rhs = (grid.v[j] - float(state.u[j])) * basis.M
        rhs = rhs - basis.project(rhs)
        return invert_calLM(KineticField(grid, rhs), state, params)

    linearized_operator(state, params, full=False)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return tuple(pool.map(solve, range(3)))


@dataclass(frozen=True)
class TransportCoeffs:
    kappa1: float
    kappa2: float
    sigma_theta: float
    theta: float

    def __post_init__(self):
        for name in ("kappa1", "kappa2", "sigma_theta"):
            value = getattr(self, name)
            if not value > 0:
                msg = f"transport coefficient {name} = {value} is not positive"
                logger.error(msg)
                raise SolverError(msg)

    def as_dict(self) -> Dict[str, float]:
        return {"theta": self.theta, "kappa1": self.kappa1, "kappa2": self.kappa2, "sigma_theta": self.sigma_theta}


@dataclass(frozen=True)
class TransportDetail:
    coeffs: TransportCoeffs
    kappa2_by_index: Tuple[float, float, float]
    sigma_matrix: np.ndarray
    burnett: BurnettSet
    charge: Tuple[KineticField, ...]


def transport_detail(theta: float, params: CollisionParams, threads: int = 4) -> TransportDetail:
    """Coefficients at (rho, u, theta) = (1, 0, theta) with their consistency data."""
    state = GasState(1.0, 0.0, theta)
    grid = params.grid
    burnett = burnett_functions(state, params, threads)
    charge = charge_response(state, params, threads)
    a_hat, b_hat = burnett_polynomials(state, grid)
    rt = R * theta
    kappa1 = -rt * grid.integrate(b_hat[0, 1] * burnett.B[0][1].values)
    kappa2 = tuple(float(-R * rt * grid.integrate(a_hat[j] * burnett.A[j].values)) for j in range(3))
    sigma = np.array([[-grid.integrate(grid.v[i] * charge[j].values) for j in range(3)] for i in range(3)])
    off = float(np.max(np.abs(sigma - np.diag(np.diag(sigma)))))
    if off > 1e-8 * float(np.max(np.abs(np.diag(sigma)))):
        logger.warning(f"conductivity tensor off-diagonal {off:.2e} at theta={theta}")
    coeffs = TransportCoeffs(float(kappa1), kappa2[0], float(np.mean(np.diag(sigma))), float(theta))
    logger.info(f"Transport at theta={theta}: kappa1={coeffs.kappa1:.6e} kappa2={coeffs.kappa2:.6e} sigma={coeffs.sigma_theta:.6e}")
    return TransportDetail(coeffs, kappa2, sigma, burnett, charge)


def transport_coefficients(theta: float, params: CollisionParams, threads: int = 4) -> TransportCoeffs:
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    return transport_detail(theta, params, threads).coeffs


def scaling_exponent(gamma: float) -> float:
    """Coefficients scale like (theta)^(1 - gamma/2) for soft potentials."""
    return 1.0 - gamma / 2.0


class TransportTable:
    """Monotone cubic interpolation of (kappa1, kappa2, sigma) in theta."""

    COLUMNS = ("kappa1", "kappa2", "sigma_theta")

    def __init__(self, frame: pd.DataFrame, mode: str):
        self.frame = frame.sort_values("theta").reset_index(drop=True)
        self.mode = mode
        thetas = self.frame["theta"].to_numpy()
        self._interp = {c: PchipInterpolator(thetas, self.frame[c].to_numpy()) for c in self.COLUMNS}

    @property
    def theta_range(self) -> Tuple[float, float]:
        return float(self.frame["theta"].iloc[0]), float(self.frame["theta"].iloc[-1])

    def __call__(self, theta):
        """Dict of coefficient arrays at theta."""
        return {c: self._interp[c](theta) for c in self.COLUMNS}

    def at(self, theta: float) -> TransportCoeffs:
        values = self(theta)
        return TransportCoeffs(float(values["kappa1"]), float(values["kappa2"]), float(values["sigma_theta"]), float(theta))

    @classmethod
    def constant(cls, coeffs: TransportCoeffs) -> "TransportTable":
        theta = coeffs.theta
        rows = [dict(coeffs.as_dict(), theta=theta * s) for s in (0.5, 1.0, 2.0)]
        return cls(pd.DataFrame(rows), "constant")


def transport_table(
    theta_range: Sequence[float],
    params: CollisionParams,
    nodes: int = 9,
    mode: str = "scaling",
    theta0: float = 1.5,
    threads: int = 4,
) -> TransportTable:
    """Tabulate the coefficients over theta_range.

    ``params.grid`` must resolve M at theta0.  In "direct" mode every node is
    solved on that grid rescaled by sqrt(theta / theta0); in "scaling" mode a
    single solve at theta0 is carried to the other nodes by the power law.
    """
    lo, hi = float(theta_range[0]), float(theta_range[1])
    if not 0 < lo <= hi:
        raise DomainError(f"invalid theta range ({lo}, {hi})")
    if mode not in ("scaling", "direct"):
        raise DomainError(f"unknown transport table mode {mode!r}")
    if hi - lo < 1e-12:
        lo, hi = lo * 0.95, hi * 1.05
    thetas = np.linspace(lo, hi, max(nodes, 2))
    rows = []
    if mode == "scaling":
        base = transport_coefficients(theta0, params, threads)
        p = scaling_exponent(params.gamma)
        for theta in thetas:
            factor = (theta / theta0) ** p
            rows.append({"theta": theta, "kappa1": base.kappa1 * factor, "kappa2": base.kappa2 * factor, "sigma_theta": base.sigma_theta * factor})
    else:
        for theta in thetas:
            grid = VelocityGrid(params.grid.n, params.grid.v_max * math.sqrt(theta / theta0))
            rows.append(transport_coefficients(theta, params.with_grid(grid), threads).as_dict())
    return TransportTable(pd.DataFrame(rows, columns=["theta", *TransportTable.COLUMNS]), mode)


@dataclass(frozen=True, eq=False)
class ClosureBasis:
    """Microscopic response fields at a frozen state.

    g1 is a combination of A1 and B1j, g2 of the charge responses C_j.
    """

    state: GasState
    fields: Dict[str, KineticField]

    NAMES = ("A1", "B11", "B12", "B13", "C1", "C2", "C3")

    def combine(self, coefficients: Dict[str, np.ndarray]) -> np.ndarray:
        """sum_k c_k(x) field_k(v), shape (len(x), n, n, n)."""
        out = None
        for name, c in coefficients.items():
            term = np.multiply.outer(np.asarray(c, dtype=float), self.fields[name].values)
            out = term if out is None else out + term
        return out


def closure_basis(state: GasState, params: CollisionParams, threads: int = 4) -> ClosureBasis:
    burnett = burnett_functions(state, params, threads)
    charge = charge_response(state, params, threads)
    fields = {name: burnett.field(name) for name in ("A1", "B11", "B12", "B13")}
    fields.update({f"C{j + 1}": charge[j] for j in range(3)})
    return ClosureBasis(state, fields)


def correction_Gbar(
    wave_grads,
    state: GasState,
    params: CollisionParams,
    eps: float,
    a: float,
    burnett: Optional[BurnettSet] = None,
) -> KineticField:
    """eps^(1-a) [sqrt(R/theta) d_y theta A1 + sum_j d_y u_j B1j].

    ``wave_grads`` is (d_y theta, d_y u) with d_y u a scalar (first
    component) or a 3-vector.
    """
    dtheta, du = wave_grads
    du = np.broadcast_to(np.asarray(du, dtype=float), (3,)) if np.ndim(du) else np.array([float(du), 0.0, 0.0])
    if dtheta == 0 and not np.any(du):
        return KineticField(params.grid, np.zeros(params.grid.shape))
    burnett = burnett or burnett_functions(state, params)
    values = math.sqrt(R / float(state.theta)) * dtheta * burnett.A[0].values
    for j in range(3):
        if du[j]:
            values = values + du[j] * burnett.B[0][j].values
    return KineticField(params.grid, eps ** (1.0 - a) * values)


def correction_Gbar_direct(wave_grads, state: GasState, params: CollisionParams, eps: float, a: float) -> KineticField:
    """eps^(1-a) / (R theta) L_M^-1 P1 [v1 (|v-u|^2 / (2 theta) d_y theta + v . d_y u) M]."""
    grid = params.grid
    dtheta, du = wave_grads
    du = np.broadcast_to(np.asarray(du, dtype=float), (3,)) if np.ndim(du) else np.array([float(du), 0.0, 0.0])
    basis = hydro_basis(state, grid)
    theta = float(state.theta)
    dv2 = sum((grid.v[k] - float(state.u[k])) ** 2 for k in range(3))
    source = grid.v[0] * (dv2 / (2.0 * theta) * dtheta + sum(grid.v[j] * du[j] for j in range(3))) * basis.M
    source = source - basis.project(source)
    solved = invert_LM(KineticField(grid, source), state, params)
    return solved * (eps ** (1.0 - a) / (R * theta))


def entropy_production(f: KineticField, params: CollisionParams) -> float:
    """sum Q(f, f) ln f h^3; non-positive for the continuous operator."""
    if np.any(f.values <= 0):
        raise DomainError("entropy production needs a strictly positive f")
    q = collide(f, f, params)
    return float(params.grid.integrate(q.values * np.log(f.values)))


def conservation_residuals(f: KineticField, params: CollisionParams) -> Dict[str, float]:
    """Moments of Q(f, f) against 1, v and |v|^2 / 2, relative to |Q|."""
    grid = params.grid
    q = collide(f, f, params).values
    scale = float(grid.integrate(np.abs(q) * (1.0 + grid.speed2))) or 1.0
    return {
        "mass": abs(float(grid.integrate(q))) / scale,
        "momentum": float(np.max(np.abs(grid.integrate(grid.v * q)))) / scale,
        "energy": abs(float(grid.integrate(0.5 * grid.speed2 * q))) / scale,
    }


def coercivity_ratio(g: KineticField, params: CollisionParams) -> float:
    """-<L g, g> / |P1 g|_sigma^2 in the sqrt(mu) picture."""
    _, p1 = symmetric_projection(g.values, params.grid)
    denominator = sigma_norm(KineticField(params.grid, p1), params.gamma) ** 2
    if denominator == 0.0:
        raise DomainError("coercivity ratio undefined on the null space")
    return -linearized_L(g, params).inner(g) / denominator


def weighted_decay(field: KineticField, state: GasState, m: int = 2) -> float:
    """int |<v>^m sqrt(mu) field / M|^2 dv."""
    grid = field.grid
    log_m = log_maxwellian(state, grid)
    log_mu = log_maxwellian(GLOBAL_STATE, grid)
    ratio = np.exp(0.5 * log_mu - log_m)
    return float(grid.integrate(((1.0 + grid.speed2) ** (m / 2) * ratio * field.values) ** 2))
