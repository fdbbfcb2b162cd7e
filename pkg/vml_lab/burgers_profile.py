"""Smooth approximate rarefaction wave built from the Burgers equation.

w_t + w w_x = 0 with tanh data is solved by characteristics, and the gas
variables are lifted from w through the 3-Riemann invariants of the left
state.  Derivatives are analytic (implicit differentiation along the
characteristics) so that decay fits carry no finite-difference noise.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
import pandas as pd
from scipy import integrate, optimize

from vml_lab import euler_waves
from vml_lab.errors import (
    DomainError,
    InvalidRiemannDataError,
    QuadratureDomainError,
    SolverError,
)
from vml_lab.euler_waves import GasState, RiemannData
from vml_lab.fitting import rate_fit

logger = logging.getLogger(__name__)

SMOOTHED = "smoothed"
EXACT_FAN = "exact-fan"
FIELDS = ("rho", "u1", "theta")

CHARACTERISTIC_TOL = 1e-11
TAIL_TOL = 1e-12


def _check_delta(delta):
    if not delta > 0:
        msg = f"smoothing width delta must be positive, got {delta}"
        logger.error(msg)
        raise DomainError(msg)


def initial_profile(w_minus, w_plus, delta, x):
    _check_delta(delta)
    return 0.5 * (w_plus + w_minus) + 0.5 * (w_plus - w_minus) * np.tanh(np.asarray(x) / delta)


def initial_profile_derivatives(w_minus, w_plus, delta, x0):
    """First and second derivatives of the tanh data."""
    th = np.tanh(np.asarray(x0) / delta)
    sech2 = 1.0 - th**2
    half = 0.5 * (w_plus - w_minus)
    return half * sech2 / delta, -2.0 * half * sech2 * th / delta**2


def characteristic_foot(w_minus, w_plus, delta, t, x):
    """Solve x = x0 + w0(x0) t for x0 (vectorized)."""
    _check_delta(delta)
    if t < 0:
        msg = f"time must be nonnegative, got {t}"
        logger.error(msg)
        raise DomainError(msg)
    if w_minus > w_plus:
        msg = f"decreasing data w-={w_minus} > w+={w_plus} forms a shock"
        logger.error(msg)
        raise DomainError(msg)
    x = np.asarray(x, dtype=float)
    if t == 0 or w_minus == w_plus:
        return x - (w_minus * t if t else 0.0)

    # F(x0) = x0 + w0(x0) t - x is strictly increasing; the bracket follows
    # from w- < w0 < w+.
    lo = x - w_plus * t
    hi = x - w_minus * t
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = mid + initial_profile(w_minus, w_plus, delta, mid) * t - x
        lo = np.where(f < 0, mid, lo)
        hi = np.where(f < 0, hi, mid)
        if np.all(hi - lo <= 1e-3 * delta):
            break
    x0 = 0.5 * (lo + hi)
    for _ in range(8):
        f = x0 + initial_profile(w_minus, w_plus, delta, x0) * t - x
        a, _ = initial_profile_derivatives(w_minus, w_plus, delta, x0)
        x0 = np.clip(x0 - f / (1.0 + a * t), lo, hi)

    residual = np.abs(x0 + initial_profile(w_minus, w_plus, delta, x0) * t - x)
    worst = float(np.max(residual / (1.0 + np.abs(x)))) if residual.size else 0.0
    if worst > CHARACTERISTIC_TOL:
        msg = f"characteristic root solve failed, relative residual {worst:.3e}"
        logger.error(msg)
        raise SolverError(msg)
    return x0


def solve_characteristics(w_minus, w_plus, delta, t, x):
    x0 = characteristic_foot(w_minus, w_plus, delta, t, x)
    return initial_profile(w_minus, w_plus, delta, x0)


@dataclass(frozen=True)
class WaveProfile:
    """A 3-rarefaction wave, either the exact fan or its Burgers smoothing.

    Zero-strength data (left = right) are accepted and give a constant wave.
    """

    data: RiemannData
    delta: float = 0.2
    kind: str = SMOOTHED

    def __post_init__(self):
        if self.kind not in (SMOOTHED, EXACT_FAN):
            raise DomainError(f"unknown wave kind {self.kind!r}")
        if self.kind == SMOOTHED:
            _check_delta(self.delta)
        report = euler_waves.validate_riemann_data(self.data)
        fatal = [r for r in report.reasons if not r.startswith("zero-strength")]
        if fatal:
            msg = f"invalid wave data: {'; '.join(fatal)}"
            logger.error(msg)
            raise InvalidRiemannDataError(msg)
        object.__setattr__(self, "report", report)

    @property
    def w_minus(self) -> float:
        return self.report.w_minus

    @property
    def w_plus(self) -> float:
        return self.report.w_plus

    @property
    def strength(self) -> float:
        return self.report.strength

    @property
    def degenerate(self) -> bool:
        return self.w_minus == self.w_plus

    @property
    def entropy(self) -> float:
        return float(self.data.left.entropy)

    @property
    def r31(self) -> float:
        return float(euler_waves.riemann_invariant_3(self.data.left)[0])

    def with_kind(self, kind: str) -> "WaveProfile":
        return WaveProfile(self.data, self.delta, kind)

    def state(self, t: float, x) -> GasState:
        if self.kind == SMOOTHED or self.degenerate:
            return smooth_wave_state(self, t, x)
        if t <= 0:
            msg = "exact fan is singular at t = 0"
            logger.error(msg)
            raise DomainError(msg)
        return euler_waves.exact_fan_3(self.data, np.asarray(x, dtype=float) / t)


class WaveDerivatives(NamedTuple):
    """Analytic derivatives of (rho, u1, theta); each entry stacks the fields."""

    d_x: np.ndarray
    d_xx: np.ndarray
    d_t: np.ndarray


def _lift(profile: WaveProfile, w):
    if profile.degenerate:
        shape = np.shape(w)
        left = profile.data.left
        return GasState(
            np.full(shape, float(left.rho)),
            (np.full(shape, float(left.u1)), np.zeros(shape), np.zeros(shape)),
            np.full(shape, float(left.theta)),
        )
    return euler_waves.state_from_lambda3(profile.r31, profile.entropy, w)


def smooth_wave_state(profile: WaveProfile, t: float, x) -> GasState:
    w = solve_characteristics(profile.w_minus, profile.w_plus, profile.delta, t, x)
    if np.ndim(w) == 0:
        return _lift(profile, np.atleast_1d(w)).at(0)
    return _lift(profile, w)


def wave_derivatives(profile: WaveProfile, t: float, x) -> WaveDerivatives:
    """x-derivatives up to second order and the t-derivative of the wave."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if profile.degenerate:
        zero = np.zeros((3,) + x.shape)
        return WaveDerivatives(zero, zero.copy(), zero.copy())
    x0 = characteristic_foot(profile.w_minus, profile.w_plus, profile.delta, t, x)
    return _derivatives_at_foot(profile, t, x0)


def _derivatives_at_foot(profile: WaveProfile, t: float, x0) -> WaveDerivatives:
    w = initial_profile(profile.w_minus, profile.w_plus, profile.delta, x0)
    a, b = initial_profile_derivatives(profile.w_minus, profile.w_plus, profile.delta, x0)
    w_x = a / (1.0 + a * t)
    w_xx = b / (1.0 + a * t) ** 3
    w_t = -w * w_x

    S = profile.entropy
    C = 4.0 * math.sqrt(5.0 * euler_waves.K / 3.0) * math.exp(S / 2.0)
    c_theta = 1.5 * euler_waves.K * math.exp(S)
    s = (w - profile.r31) / C

    def lift(dw, dww=None):
        ds = dw / C
        if dww is None:
            return np.stack([3 * s**2 * ds, 0.75 * dw, 2 * c_theta * s * ds])
        dss = dww / C
        return np.stack(
            [
                6 * s * ds**2 + 3 * s**2 * dss,
                0.75 * dww,
                2 * c_theta * (ds**2 + s * dss),
            ]
        )

    return WaveDerivatives(d_x=lift(w_x), d_xx=lift(w_x, w_xx), d_t=lift(w_t))


def scaled_state(profile: WaveProfile, eps: float, a: float, tau: float, y) -> GasState:
    """The wave in the variables (tau, y) = (t, x) / eps^a."""
    scale = eps**a
    return profile.state(scale * tau, scale * np.asarray(y, dtype=float))


def scaled_derivatives(profile: WaveProfile, eps: float, a: float, tau: float, y):
    """First and second y-derivatives, carrying the chain-rule factors eps^(a k)."""
    scale = eps**a
    d = wave_derivatives(profile, scale * tau, scale * np.asarray(y, dtype=float))
    return scale * d.d_x, scale**2 * d.d_xx


def lp_norm(
    profile: WaveProfile,
    t: float,
    p: float,
    order: int = 1,
    field: str = "u1",
    half_width: float = 40.0,
) -> float:
    """L^p norm in x of the ``order``-th x-derivative of one field.

    The integral is taken in the Lagrangian variable x0, where dx = (1 + w0' t) dx0
    and the integrand decays like sech^2(x0 / delta).  The trapezoid rule on a
    uniform x0 grid is refined until two levels agree.
    """
    if order not in (1, 2):
        raise DomainError(f"derivative order must be 1 or 2, got {order}")
    if field not in FIELDS:
        raise DomainError(f"unknown field {field!r}, expected one of {FIELDS}")
    if profile.degenerate:
        return 0.0
    index = FIELDS.index(field)
    delta = profile.delta
    L = half_width * delta

    def integrand(x0):
        d = _derivatives_at_foot(profile, t, x0)
        values = (d.d_x if order == 1 else d.d_xx)[index]
        a, _ = initial_profile_derivatives(profile.w_minus, profile.w_plus, delta, x0)
        return np.abs(values), 1.0 + a * t

    n = 401
    x0 = np.linspace(-L, L, n)
    values, jac = integrand(x0)
    peak = float(np.max(values))
    tail = max(values[0], values[-1])
    if peak > 0 and tail > TAIL_TOL * peak:
        msg = (
            f"quadrature window +-{half_width} delta too small: tail/peak = {tail / peak:.2e}"
        )
        logger.error(msg)
        raise QuadratureDomainError(msg)

    if math.isinf(p):
        # Refine the sampled maximum with a bounded scalar search.
        i = int(np.argmax(values))
        lo, hi = x0[max(i - 1, 0)], x0[min(i + 1, n - 1)]
        res = optimize.minimize_scalar(
            lambda z: -float(integrand(np.array([z]))[0][0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12 * delta},
        )
        return max(peak, -float(res.fun))

    previous = integrate.trapezoid(values**p * jac, x0)
    for _ in range(12):
        n = 2 * n - 1
        x0 = np.linspace(-L, L, n)
        values, jac = integrand(x0)
        current = integrate.trapezoid(values**p * jac, x0)
        if abs(current - previous) <= 1e-12 * abs(current):
            break
        previous = current
    norm = current ** (1.0 / p)
    logger.debug(f"L^{p} norm of d^{order}{field} at t={t}: {norm:.6e}")
    return float(norm)


def decay_bound_shape(profile: WaveProfile, t: float, p: float, order: int) -> float:
    """Time/strength shape of the decay bound with the constant set to 1."""
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    sigma, delta = profile.strength, profile.delta
    if order == 1:
        return sigma**inv_p * (delta / sigma + t) ** (-1.0 + inv_p)
    return delta ** (-order + 1.0 + inv_p) * (delta / sigma + t) ** (-1.0)


def expected_exponent(p: float, order: int) -> float:
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    return -1.0 + inv_p if order == 1 else -1.0


class DecayReport(NamedTuple):
    table: pd.DataFrame
    exponents: pd.DataFrame


def decay_report(
    profile: WaveProfile,
    times: Iterable[float],
    p_list: Iterable[float],
    orders: Iterable[int] = (1, 2),
    fields: Iterable[str] = FIELDS,
    fit_decades: float = 1.0,
    tolerance: float = 0.05,
) -> DecayReport:
    """Measured L^p norms of wave derivatives against the decay bounds.

    The constant of each bound is fitted as the largest ratio norm / shape over
    the sampled times.  Exponents are fitted over the last ``fit_decades`` of
    the sampled times, where the wave is in its self-similar regime.
    """
    times = sorted(float(t) for t in times)
    if not times or times[0] <= 0:
        raise DomainError("decay times must be positive")
    p_list = [float(p) for p in p_list]

    rows = []
    for field in fields:
        for order in orders:
            for p in p_list:
                norms = [lp_norm(profile, t, p, order, field) for t in times]
                shapes = [decay_bound_shape(profile, t, p, order) for t in times]
                c_fit = max(n / s for n, s in zip(norms, shapes))
                for t, n, s in zip(times, norms, shapes):
                    rows.append(
                        {
                            "t": t,
                            "p": p,
                            "order": order,
                            "field": field,
                            "norm": n,
                            "bound": c_fit * s,
                            "c_fit": c_fit,
                        }
                    )
    table = pd.DataFrame(rows, columns=["t", "p", "order", "field", "norm", "bound", "c_fit"])

    t_start = times[-1] / 10.0**fit_decades
    fits = []
    for (field, order, p), group in table.groupby(["field", "order", "p"], sort=False):
        window = group[group["t"] >= t_start * (1 - 1e-12)]
        expected = expected_exponent(p, order)
        if len(window) < 2 or np.all(window["norm"] == window["norm"].iloc[0]):
            exponent, r2 = 0.0, float("nan")
        else:
            fit = rate_fit(window["t"].to_numpy(), window["norm"].to_numpy(), min_points=2)
            exponent, r2 = fit.exponent, fit.r2
        fits.append(
            {
                "field": field,
                "order": order,
                "p": p,
                "exponent": exponent,
                "expected": expected,
                "r2": r2,
                "t_start": t_start,
                "passed": bool(abs(exponent - expected) <= tolerance),
            }
        )
    exponents = pd.DataFrame(fits)
    logger.info(
        f"Decay report: {int(exponents['passed'].sum())}/{len(exponents)} exponents within {tolerance}"
    )
    return DecayReport(table=table, exponents=exponents)


def fan_distance(profile: WaveProfile, t: float, samples_per_delta: int = 40) -> float:
    """Sup-norm distance (max over rho, u1, theta) to the exact fan at time t."""
    if t <= 0:
        raise DomainError(f"fan distance needs t > 0, got {t}")
    if profile.degenerate:
        return 0.0
    delta = profile.delta
    lo = profile.w_minus * t - 40.0 * delta
    hi = profile.w_plus * t + 40.0 * delta
    n = int(min(400_000, max(2001, samples_per_delta * (hi - lo) / min(delta, 1.0))))
    x = np.linspace(lo, hi, n)
    fan = profile.with_kind(EXACT_FAN)

    def gap(xs):
        a = smooth_wave_state(profile, t, xs)
        b = fan.state(t, xs)
        return np.max(
            np.abs(
                np.stack([a.rho - b.rho, a.u1 - b.u1, a.theta - b.theta])
            ),
            axis=0,
        )

    values = gap(x)
    i = int(np.argmax(values))
    best = float(values[i])
    res = optimize.minimize_scalar(
        lambda z: -float(gap(np.array([z]))[0]),
        bounds=(x[max(i - 1, 0)], x[min(i + 1, n - 1)]),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return max(best, -float(res.fun))


def fan_rate_constant(profile: WaveProfile, t: float) -> float:
    """distance * t / (delta (ln(1+t) + |ln delta|)); bounded above along t."""
    d = fan_distance(profile, t)
    delta = profile.delta
    return d * t / (delta * (math.log1p(t) + abs(math.log(delta))))
