import numpy as np
import pytest

from stoqtraj.convergence import fitted_slope, measure_strong_order
from stoqtraj.ito_sse import EM, MILSTEIN, ItoModel
from stoqtraj.linops import KET0, SIGMA_X, SIGMA_Z

MODEL = ItoModel(0.5 * SIGMA_Z, 1j * SIGMA_X, 1.0)


def test_fitted_slope_recovers_power_law():
    x = np.array([1e-1, 1e-2, 1e-3])
    assert fitted_slope(x, 3 * x**1.5) == pytest.approx(1.5)


def test_quick_strong_orders():
    report = measure_strong_order(MODEL, KET0, 1.0, dts=(1e-2, 5e-3, 2e-3, 1e-3), n_paths=100, refine=8)
    assert abs(report.slopes[EM] - 0.5) <= 0.25
    assert abs(report.slopes[MILSTEIN] - 1.0) <= 0.25
    assert np.all(report.errors[MILSTEIN] < report.errors[EM])
    assert "slope milstein" in report.to_text()


def test_strong_errors_are_path_deterministic():
    a = measure_strong_order(MODEL, KET0, 0.5, dts=(1e-2, 5e-3), n_paths=10, seed=3, refine=4)
    b = measure_strong_order(MODEL, KET0, 0.5, dts=(5e-3, 1e-2), n_paths=10, seed=3, refine=4)
    for s in (EM, MILSTEIN):
        assert np.array_equal(a.errors[s], b.errors[s])


def test_milstein_beats_em_for_commuting_noise():
    # exact solution exp(i sigma W)|0>; Milstein matches it through dW^2
    model = ItoModel(0 * SIGMA_Z, 1j * SIGMA_Z, 0.3)
    report = measure_strong_order(model, KET0, 0.5, dts=(1e-2, 5e-3), n_paths=20, refine=4)
    assert np.all(report.errors[MILSTEIN] <= report.errors[EM])


def test_rejects_incommensurate_steps():
    with pytest.raises(ValueError):
        measure_strong_order(MODEL, KET0, 1.0, dts=(1e-2, 3e-3), n_paths=2)
