import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stoqtraj.convergence import rode_refinement_factor
from stoqtraj.errors import InvalidTimeStep, NonHermitianInput, ValidationError
from stoqtraj.linops import KET0, KET_PLUS, SIGMA_MINUS, SIGMA_X, SIGMA_Z, expm_generator, random_hermitian, random_ket
from stoqtraj.noise import OrnsteinUhlenbeck, RngStream, WhiteNoise
from stoqtraj.rode import HEUN, MIDPOINT, RodeModel, propagate_rode, rode_vs_redfield_report, run_rode_trajectory

seeds = st.integers(0, 2**32 - 1)
H = SIGMA_X + 0.5 * SIGMA_Z


def test_model_validation():
    with pytest.raises(ValidationError, match="OU-only"):
        RodeModel(SIGMA_Z, SIGMA_X, WhiteNoise(1.0))
    with pytest.raises(NonHermitianInput):
        RodeModel(SIGMA_Z, SIGMA_MINUS, OrnsteinUhlenbeck(1.0, 1.0))


def test_rejects_bad_dt_and_scheme():
    model = RodeModel(H, SIGMA_Z, OrnsteinUhlenbeck(1.0, 1.0))
    with pytest.raises(InvalidTimeStep):
        run_rode_trajectory(model, KET0, 0.0, 10, RngStream(0))
    with pytest.raises(ValueError):
        propagate_rode(model, KET0, 0.1, np.zeros((1, 5)), "euler")


@pytest.mark.parametrize("scheme, tol", [(MIDPOINT, 1e-8), (HEUN, 1e-3)])
def test_vanishing_noise_is_constant_H_evolution(scheme, tol):
    model = RodeModel(H, SIGMA_Z, OrnsteinUhlenbeck(1e-12, 1.0))
    states = run_rode_trajectory(model, KET0, 0.01, 200, RngStream(1), scheme)
    assert np.linalg.norm(states[-1] - expm_generator(H, 2.0) @ KET0) <= tol


@pytest.mark.parametrize("scheme, tol", [(MIDPOINT, 1e-8), (HEUN, 1e-3)])
def test_frozen_path_matches_constant_coefficient_exponential(scheme, tol):
    z = 0.7
    model = RodeModel(H, SIGMA_Z, OrnsteinUhlenbeck(1e-12, 1e9, z0=z))
    states = run_rode_trajectory(model, KET0, 0.01, 200, RngStream(2), scheme)
    assert np.linalg.norm(states[-1] - expm_generator(H + z * SIGMA_Z, 2.0) @ KET0) <= tol


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(2, 4))
def test_midpoint_norms(seed, dim):
    rng = np.random.default_rng(seed)
    model = RodeModel(random_hermitian(dim, rng), random_hermitian(dim, rng), OrnsteinUhlenbeck(1.5, 0.3))
    states = run_rode_trajectory(model, random_ket(dim, rng), 0.02, 100, RngStream(seed))
    assert np.max(np.abs(np.linalg.norm(states, axis=1) - 1)) <= 1e-9


def test_heun_norm_drift_is_small():
    model = RodeModel(H, SIGMA_Z, OrnsteinUhlenbeck(1.0, 1.0))
    states = run_rode_trajectory(model, KET0, 1e-3, 1000, RngStream(3), HEUN)
    assert np.max(np.abs(np.linalg.norm(states, axis=1) - 1)) <= 1e-4


def test_determinism():
    model = RodeModel(H, SIGMA_Z, OrnsteinUhlenbeck(1.0, 0.5))
    a = run_rode_trajectory(model, KET_PLUS, 0.01, 100, RngStream(6, 3))
    assert np.array_equal(a, run_rode_trajectory(model, KET_PLUS, 0.01, 100, RngStream(6, 3)))


def _smooth_factor(scheme, dt, T=2.0):
    model = RodeModel(SIGMA_X, SIGMA_Z, OrnsteinUhlenbeck(1.0, 1.0))

    def end(step):
        n = int(round(T / step))
        t = np.arange(2 * n + 1) * step / 2
        return propagate_rode(model, KET0, step, (np.cos(3 * t) + 0.5 * np.sin(t))[None], scheme)[0][0, -1]

    ref = end(dt / 8)
    return np.linalg.norm(end(dt) - ref) / np.linalg.norm(end(dt / 2) - ref)


@pytest.mark.parametrize("scheme", [MIDPOINT, HEUN])
@pytest.mark.parametrize("dt", [0.1, 0.02])
def test_second_order_on_smooth_coefficient_paths(scheme, dt):
    assert 3 <= _smooth_factor(scheme, dt) <= 5


def test_ou_path_refinement_factor_window():
    model = RodeModel(SIGMA_X, SIGMA_Z, OrnsteinUhlenbeck(1.0, 1.0))
    factor = rode_refinement_factor(model, KET0, 1.0, 0.05, n_paths=200, seed=0)
    assert 3 <= factor <= 5, f"measured refinement factor {factor:.3f}"


def test_ou_path_pathwise_order_is_one():
    # OU paths are only Hoelder-1/2, so the midpoint quadrature of int Z
    # leaves an O(dt) pathwise error
    model = RodeModel(SIGMA_X, SIGMA_Z, OrnsteinUhlenbeck(1.0, 1.0))
    factor = rode_refinement_factor(model, KET0, 1.0, 0.05, n_paths=200, seed=0)
    assert 1.5 <= factor <= 2.5


def test_report_without_noise_is_exact():
    model = RodeModel(SIGMA_Z, SIGMA_X, OrnsteinUhlenbeck(1e-9, 0.5))
    report = rode_vs_redfield_report(model, KET_PLUS, 2.0, 0.01, 20, seed=0)
    assert report.max_trace_distance <= 1e-6
    assert report.regime_ok


def test_report_flags_strong_coupling():
    model = RodeModel(SIGMA_Z, SIGMA_Z, OrnsteinUhlenbeck(2.0, 0.5))
    report = rode_vs_redfield_report(model, KET_PLUS, 1.0, 0.01, 200, seed=0)
    assert not report.regime_ok
    assert report.notes["coupling_ratio"] > 0.1
    assert "regime_ok false" in report.to_text()
