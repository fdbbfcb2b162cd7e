import numpy as np
import pytest

from vml_lab.errors import DegenerateDataError
from vml_lab.fitting import rate_fit, refinement_order


def test_rate_fit_recovers_power_law():
    xs = np.geomspace(1e-3, 1e-1, 6)
    fit = rate_fit(xs, 3.0 * xs**0.4)

    assert fit.exponent == pytest.approx(0.4, abs=1e-10)
    assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-10)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.informative


def test_rate_fit_flat_series_is_uninformative():
    fit = rate_fit([1.0, 2.0, 4.0, 8.0], [5.0, 5.0, 5.0, 5.0])

    assert fit.exponent == 0.0
    assert fit.r2 == 1.0
    assert not fit.informative


def test_rate_fit_rejects_bad_data():
    with pytest.raises(DegenerateDataError):
        rate_fit([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateDataError):
        rate_fit([1.0, 2.0, 3.0, 4.0], [1.0, -2.0, 3.0, 4.0])
    with pytest.raises(DegenerateDataError):
        rate_fit([2.0, 2.0, 2.0, 2.0], [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(DegenerateDataError):
        rate_fit([1.0, 2.0], [1.0, 2.0, 3.0])


def test_refinement_order():
    assert refinement_order([0.2, 0.1], [4e-2, 1e-2]) == pytest.approx(2.0)
    hs = np.array([0.4, 0.2, 0.1])
    assert refinement_order(hs, 7.0 * hs) == pytest.approx(1.0)
