"""Thermodynamics, characteristic fields and the exact 3-rarefaction fan.

States are monatomic gas states with R = 2/3, so the internal energy is
e = (3/2) R theta = theta.  Every function accepts scalars or numpy arrays
for rho and theta, and broadcasts like numpy does.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple

import numpy as np
from scipy import integrate, optimize

from vml_lab.errors import DomainError, InvalidRiemannDataError

logger = logging.getLogger(__name__)

R = 2.0 / 3.0
K = 1.0 / (2.0 * math.pi * math.e)

# Relative tolerance used to decide that two invariants agree.
MATCH_TOL = 1e-10
FAN_TOL = 1e-12


def _as_vector(u) -> tuple:
    if np.ndim(u) == 0:
        return (u, 0.0, 0.0)
    if isinstance(u, np.ndarray) and u.shape[0] == 3 and u.ndim > 1:
        return (u[0], u[1], u[2])
    u = tuple(u)
    if len(u) != 3:
        raise DomainError(f"velocity must have 3 components, got {len(u)}")
    return u


@dataclass(frozen=True)
class GasState:
    """Primitive hydrodynamic state (rho, u, theta).

    ``u`` is always stored as a 3-tuple; a scalar is read as u1 with
    u2 = u3 = 0.  Components may be arrays of a common shape.
    """

    rho: object
    u: tuple
    theta: object

    def __post_init__(self):
        object.__setattr__(self, "u", _as_vector(self.u))
        rho = np.asarray(self.rho, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        if not (np.all(np.isfinite(rho)) and np.all(rho > 0)):
            msg = f"density must be positive and finite, got min {np.min(rho)}"
            logger.error(msg)
            raise DomainError(msg)
        if not (np.all(np.isfinite(theta)) and np.all(theta > 0)):
            msg = f"temperature must be positive and finite, got min {np.min(theta)}"
            logger.error(msg)
            raise DomainError(msg)

    @property
    def u1(self):
        return self.u[0]

    @property
    def pressure(self):
        return pressure(self.rho, self.theta)

    @property
    def entropy(self):
        return entropy(self.rho, self.theta)

    def speed(self):
        return np.sqrt(sum(np.asarray(c, dtype=float) ** 2 for c in self.u))

    def at(self, index) -> "GasState":
        """Pick one element out of an array-valued state."""
        shape = np.broadcast(self.rho, self.theta, *self.u).shape

        def pick(c):
            return float(np.broadcast_to(c, shape)[index])

        return GasState(pick(self.rho), tuple(pick(c) for c in self.u), pick(self.theta))


@dataclass(frozen=True)
class RiemannData:
    left: GasState
    right: GasState


class CharacteristicFields(NamedTuple):
    p: object
    S: object
    lam1: object
    lam2: object
    lam3: object


@dataclass
class RiemannReport:
    w_minus: float
    w_plus: float
    strength: float
    entropy_match: bool
    r31_match: bool
    transverse_zero: bool
    passed: bool
    reasons: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "w_minus": self.w_minus,
            "w_plus": self.w_plus,
            "strength": self.strength,
            "entropy_match": self.entropy_match,
            "r31_match": self.r31_match,
            "transverse_zero": self.transverse_zero,
            "passed": self.passed,
            "reasons": list(self.reasons),
        }


def pressure(rho, theta):
    return R * np.asarray(rho) * np.asarray(theta)


def entropy(rho, theta):
    return -(2.0 / 3.0) * np.log(rho) + np.log(4.0 / 3.0 * math.pi * np.asarray(theta)) + 1.0


def sound_speed_squared(rho, theta):
    """p_rho at fixed entropy, i.e. 5 p / (3 rho)."""
    return 5.0 * pressure(rho, theta) / (3.0 * np.asarray(rho))


def characteristic_fields(state: GasState) -> CharacteristicFields:
    c = np.sqrt(sound_speed_squared(state.rho, state.theta))
    u1 = np.asarray(state.u1, dtype=float)
    return CharacteristicFields(
        p=state.pressure, S=state.entropy, lam1=u1 - c, lam2=u1, lam3=u1 + c
    )


def riemann_invariant_3(state: GasState):
    """Return (R31, R32) = (u1 - sqrt(15k) rho^(1/3) e^(S/2), S)."""
    S = state.entropy
    r31 = state.u1 - math.sqrt(15.0 * K) * np.cbrt(state.rho) * np.exp(S / 2.0)
    return r31, S


def riemann_invariant_3_quadrature(state: GasState, rho_ref: float = 1.0) -> float:
    """R31 from its integral definition u1 - int^rho sqrt(p_z(z, S)) / z dz.

    The lower limit is anchored at ``rho_ref`` with the closed-form primitive,
    which leaves the integral over [rho_ref, rho] to quadrature.
    """
    S = float(state.entropy)

    def integrand(z):
        return math.sqrt(5.0 / 3.0 * K * z ** (2.0 / 3.0) * math.exp(S)) / z

    anchor = math.sqrt(15.0 * K) * rho_ref ** (1.0 / 3.0) * math.exp(S / 2.0)
    value, _ = integrate.quad(integrand, rho_ref, float(state.rho), epsabs=0.0, epsrel=1e-13)
    return float(state.u1) - (anchor + value)


def _curve_constant(S):
    # lambda3 = R31 + C rho^(1/3) along a 3-curve
    return 4.0 * math.sqrt(5.0 * K / 3.0) * np.exp(np.asarray(S) / 2.0)


def wave_curve_state(left: GasState, rho) -> GasState:
    """State on the 3-rarefaction curve through ``left`` with density ``rho``."""
    r31, S = riemann_invariant_3(left)
    r31, S = float(r31), float(S)
    rho = np.asarray(rho, dtype=float)
    u1 = r31 + math.sqrt(15.0 * K) * np.cbrt(rho) * math.exp(S / 2.0)
    theta = 1.5 * K * math.exp(S) * np.cbrt(rho) ** 2
    if rho.ndim == 0:
        return GasState(float(rho), (float(u1), 0.0, 0.0), float(theta))
    return GasState(rho, (u1, np.zeros_like(rho), np.zeros_like(rho)), theta)


def state_from_lambda3(r31: float, S: float, w) -> GasState:
    """Invert lambda3 = w along the curve with invariants (R31, S)."""
    s = (np.asarray(w, dtype=float) - r31) / _curve_constant(S)
    if np.any(s <= 0):
        msg = "lambda3 below the vacuum limit of the wave curve"
        logger.error(msg)
        raise DomainError(msg)
    rho = s**3
    u1 = (r31 + 3.0 * np.asarray(w, dtype=float)) / 4.0
    theta = 1.5 * K * math.exp(S) * s**2
    zero = np.zeros_like(rho) if rho.ndim else 0.0
    if rho.ndim == 0:
        return GasState(float(rho), (float(u1), 0.0, 0.0), float(theta))
    return GasState(rho, (u1, zero, zero), theta)


def rarefaction_data(left: GasState, rho_right: float) -> RiemannData:
    """Riemann data joined by a 3-rarefaction curve from ``left``."""
    return RiemannData(left=left, right=wave_curve_state(left, rho_right))


def wave_strength(data: RiemannData) -> float:
    du = np.array(data.right.u, dtype=float) - np.array(data.left.u, dtype=float)
    return float(
        abs(data.right.rho - data.left.rho)
        + np.linalg.norm(du)
        + abs(data.right.theta - data.left.theta)
    )


def _close(a, b, tol=MATCH_TOL) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def validate_riemann_data(data: RiemannData) -> RiemannReport:
    w_minus = float(characteristic_fields(data.left).lam3)
    w_plus = float(characteristic_fields(data.right).lam3)
    r31_l, s_l = riemann_invariant_3(data.left)
    r31_r, s_r = riemann_invariant_3(data.right)
    entropy_match = _close(float(s_l), float(s_r))
    r31_match = _close(float(r31_l), float(r31_r))
    transverse_zero = all(
        float(c) == 0.0 for c in (*data.left.u[1:], *data.right.u[1:])
    )

    reasons = []
    if not entropy_match:
        reasons.append("entropy mismatch")
    if not r31_match:
        reasons.append("R31 mismatch: states are not on one 3-rarefaction curve")
    if not transverse_zero:
        reasons.append("transverse velocity must vanish")
    if not w_minus < w_plus:
        if w_minus == w_plus:
            reasons.append("zero-strength wave (w- = w+)")
        else:
            reasons.append("w- > w+: compressive data, not a rarefaction")

    report = RiemannReport(
        w_minus=w_minus,
        w_plus=w_plus,
        strength=wave_strength(data),
        entropy_match=entropy_match,
        r31_match=r31_match,
        transverse_zero=transverse_zero,
        passed=not reasons,
        reasons=reasons,
    )
    logger.debug(f"Riemann data report: {report.as_dict()}")
    return report


def exact_fan_3(data: RiemannData, xi) -> GasState:
    """Self-similar 3-rarefaction fan evaluated at xi = x / t."""
    report = validate_riemann_data(data)
    if not report.passed:
        msg = f"not a 3-rarefaction: {'; '.join(report.reasons)}"
        logger.error(msg)
        raise InvalidRiemannDataError(msg)

    r31, S = riemann_invariant_3(data.left)
    r31, S = float(r31), float(S)
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        # Constant regions are returned verbatim.
        if xi <= report.w_minus:
            return data.left
        if xi >= report.w_plus:
            return data.right

    w = np.atleast_1d(np.clip(xi, report.w_minus, report.w_plus))
    C = float(_curve_constant(S))
    rho = ((w - r31) / C) ** 3

    # The closed form is exact; the bracketed root solve is a safeguard.
    bad = np.abs(C * np.cbrt(rho) + r31 - w) > FAN_TOL * (1.0 + np.abs(w))
    if np.any(bad):
        logger.warning(f"closed-form fan inversion polished at {int(bad.sum())} points")
        lo, hi = sorted((float(data.left.rho), float(data.right.rho)))
        for i in np.flatnonzero(bad):
            target = float(w[i])
            rho[i] = optimize.brentq(
                lambda r: C * np.cbrt(r) + r31 - target, lo, hi, xtol=1e-15
            )

    fan = wave_curve_state(data.left, rho)
    if xi.ndim == 0:
        return fan.at(0)
    left, right = xi <= report.w_minus, xi >= report.w_plus
    fields = []
    for fan_c, l_c, r_c in (
        (fan.rho, data.left.rho, data.right.rho),
        (fan.u1, data.left.u1, data.right.u1),
        (fan.theta, data.left.theta, data.right.theta),
    ):
        c = np.where(left, l_c, fan_c.reshape(xi.shape))
        fields.append(np.where(right, r_c, c))
    zero = np.zeros_like(fields[0])
    return GasState(fields[0], (fields[1], zero, zero.copy()), fields[2])


def wave_smallness(data: RiemannData, samples: int = 2001) -> float:
    """eta0 = sup |rho - 1| + |u| + |theta - 3/2| over the wave."""
    rho = np.linspace(float(data.left.rho), float(data.right.rho), samples)
    curve = wave_curve_state(data.left, rho)
    eta = np.abs(curve.rho - 1.0) + np.abs(curve.u1) + np.abs(curve.theta - 1.5)
    return float(np.max(eta))


def euler_residual(
    state_fn: Callable[[float, np.ndarray], GasState], t: float, x, h: float = 1e-4
) -> np.ndarray:
    """Max-norm residual of the three conservation laws of 1D Euler.

    ``state_fn(t, x)`` must return an array-valued GasState.  Derivatives are
    4th-order central differences with step ``h``.
    """
    x = np.asarray(x, dtype=float)

    def conserved(tt, xx):
        s = state_fn(tt, xx)
        rho, u1, theta = np.asarray(s.rho), np.asarray(s.u1), np.asarray(s.theta)
        p = R * rho * theta
        energy = rho * (theta + 0.5 * u1**2)
        U = np.stack([rho, rho * u1, energy])
        F = np.stack([rho * u1, rho * u1**2 + p, u1 * (energy + p)])
        return U, F

    def d(fn, arg_shift):
        a = fn(*arg_shift(2 * h))
        b = fn(*arg_shift(h))
        c = fn(*arg_shift(-h))
        e = fn(*arg_shift(-2 * h))
        return (-a + 8 * b - 8 * c + e) / (12 * h)

    U_t = d(lambda tt, xx: conserved(tt, xx)[0], lambda s: (t + s, x))
    F_x = d(lambda tt, xx: conserved(tt, xx)[1], lambda s: (t, x + s))
    return np.max(np.abs(U_t + F_x), axis=-1)
