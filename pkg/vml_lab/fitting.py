"""Log-log regressions used for decay laws, convergence rates and refinement."""
import logging
from typing import NamedTuple

import numpy as np
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score

from vml_lab.errors import DegenerateDataError

logger = logging.getLogger(__name__)


class RateFit(NamedTuple):
    exponent: float
    intercept: float
    r2: float
    informative: bool


def rate_fit(xs, ys, min_points: int = 4) -> RateFit:
    """Least squares of ln(ys) against ln(xs).

    Returns the slope, the intercept and R^2.  A flat series (zero variance in
    ln ys) has no explained variance; it is reported with R^2 = 1 when the fit
    is exact and flagged as uninformative.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise DegenerateDataError("rate fit needs two 1-D sequences of equal length")
    if len(xs) < min_points:
        msg = f"rate fit needs at least {min_points} points, got {len(xs)}"
        logger.error(msg)
        raise DegenerateDataError(msg)
    if np.any(xs <= 0) or np.any(ys <= 0):
        msg = "rate fit needs strictly positive data"
        logger.error(msg)
        raise DegenerateDataError(msg)
    log_x = np.log(xs)
    if np.ptp(log_x) == 0:
        msg = "rate fit needs at least two distinct abscissae"
        logger.error(msg)
        raise DegenerateDataError(msg)

    log_y = np.log(ys)
    model = LinearRegression().fit(log_x.reshape(-1, 1), log_y)
    exponent = float(model.coef_[0])
    intercept = float(model.intercept_)
    if np.ptp(log_y) == 0:
        logger.warning("rate fit on constant data is uninformative")
        return RateFit(0.0, float(log_y[0]), 1.0, False)
    r2 = float(r2_score(log_y, model.predict(log_x.reshape(-1, 1))))
    return RateFit(exponent, intercept, r2, True)


def refinement_order(hs, errors) -> float:
    """Observed order of convergence from (h, error) pairs."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(hs) == 2:
        if np.any(errors <= 0):
            raise DegenerateDataError("errors must be positive to measure an order")
        return float(np.log(errors[0] / errors[1]) / np.log(hs[0] / hs[1]))
    return rate_fit(hs, errors, min_points=2).exponent
