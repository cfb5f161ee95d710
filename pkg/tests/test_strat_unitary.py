import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import I2, SX, SZ, dephasing_lindblad, taylor_expm
from stoqtraj.ensemble import ItoEngine, StderrRule, StratEngine, compare, run_ensemble
from stoqtraj.errors import InvalidTimeStep, NonHermitianInput
from stoqtraj.ito_sse import ItoModel
from stoqtraj.linops import KET0, KET_PLUS, SIGMA_MINUS, expm_generator, random_hermitian, random_ket
from stoqtraj.noise import RngStream
from stoqtraj.strat_unitary import (
    StratModel,
    propagate_strat,
    run_strat_trajectory,
    strat_step_unitary,
    strat_to_ito_drift,
    unitarity_defect,
)

seeds = st.integers(0, 2**32 - 1)


def test_model_requires_hermitian_R():
    with pytest.raises(NonHermitianInput):
        StratModel(SZ, SIGMA_MINUS, 1.0)


def test_noiseless_step():
    model = StratModel(SZ + 0.3 * SX, SX, 1.0)
    assert np.allclose(strat_step_unitary(model, 0.1, 0.0), expm_generator(SZ + 0.3 * SX, 0.1))


@pytest.mark.parametrize("dw", [-0.4, 0.05, 0.9])
def test_pure_noise_step_closed_form(dw):
    sigma = 1.7
    theta = sigma * dw
    U = strat_step_unitary(StratModel(np.zeros((2, 2)), SX, sigma), 0.01, dw)
    assert np.allclose(U, math.cos(theta) * I2 - 1j * math.sin(theta) * SX, atol=1e-14)


def test_commuting_generators_factorise():
    model = StratModel(0.8 * SZ, SZ, 1.2)
    dt, dw = 0.05, 0.3
    U = strat_step_unitary(model, dt, dw)
    assert np.allclose(U, taylor_expm(-1j * 0.8 * dt * SZ) @ taylor_expm(-1j * 1.2 * dw * SZ), atol=1e-14)


def test_step_rejects_bad_dt():
    with pytest.raises(InvalidTimeStep):
        strat_step_unitary(StratModel(SZ, SX, 1.0), -0.1, 0.0)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 5), st.floats(-2, 2), st.floats(1e-4, 0.5))
def test_step_unitarity(seed, dim, dw, dt):
    rng = np.random.default_rng(seed)
    model = StratModel(random_hermitian(dim, rng), random_hermitian(dim, rng), 1.5)
    assert unitarity_defect(strat_step_unitary(model, dt, dw)) <= 1e-10


def test_noiseless_trajectory_is_exact():
    H = SZ + 0.4 * SX
    states = run_strat_trajectory(StratModel(H, SX, 0.0), KET0, 0.01, 200, RngStream(0))
    assert np.allclose(states[-1], expm_generator(H, 2.0) @ KET0, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(2, 4))
def test_trajectory_norms(seed, dim):
    rng = np.random.default_rng(seed)
    model = StratModel(random_hermitian(dim, rng), random_hermitian(dim, rng), 1.0)
    states = run_strat_trajectory(model, random_ket(dim, rng), 0.01, 100, RngStream(seed))
    assert np.max(np.abs(np.linalg.norm(states, axis=1) - 1)) <= 1e-9


def test_dephasing_preserves_populations():
    model = StratModel(SZ, SZ, 1.0)
    dW = np.random.default_rng(0).normal(0, 0.1, (20, 300))
    states = propagate_strat(model, KET_PLUS, 0.01, dW)
    assert np.allclose(np.abs(states[..., 0]), 1 / math.sqrt(2), atol=1e-12)


def test_batched_propagation_matches_step_unitaries():
    rng = np.random.default_rng(3)
    model = StratModel(random_hermitian(3, rng), random_hermitian(3, rng), 0.9)
    dW = rng.normal(0, 0.1, (2, 25))
    psi0 = random_ket(3, rng)
    states = propagate_strat(model, psi0, 0.01, dW)
    for b in range(2):
        psi = psi0
        for k in range(25):
            psi = strat_step_unitary(model, 0.01, dW[b, k]) @ psi
        assert np.allclose(states[b, -1], psi, atol=1e-12)


def test_ito_drift_for_sigma_z():
    H = random_hermitian(2, np.random.default_rng(5))
    drift, _ = strat_to_ito_drift(StratModel(H, SZ, 0.6))
    assert np.allclose(drift, -1j * H - 0.5 * 0.36 * I2, atol=1e-15)
    drift0, _ = strat_to_ito_drift(StratModel(H, SZ, 0.0))
    assert np.array_equal(drift0, -1j * H)


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 5), st.floats(0, 3))
def test_ito_drift_equivalence(seed, dim, sigma):
    rng = np.random.default_rng(seed)
    model = StratModel(random_hermitian(dim, rng), random_hermitian(dim, rng), sigma)
    drift, ito = strat_to_ito_drift(model)
    assert np.max(np.abs(drift - ItoModel(model.H, 1j * model.R, sigma).drift)) <= 1e-12
    assert np.max(np.abs(drift - ito.drift)) <= 1e-12


def test_strat_and_ito_ensembles_agree():
    rng = np.random.default_rng(9)
    H, R = random_hermitian(2, rng), random_hermitian(2, rng)
    sigma, dt, n = 0.6, 1e-3, 1000
    strat = run_ensemble(StratEngine(StratModel(H, R, sigma)), KET0, 10_000, dt, n, seed=1)
    ito = run_ensemble(ItoEngine(ItoModel(H, 1j * R, sigma)), KET0, 10_000, dt, n, seed=2)
    report = compare(strat, ito, StderrRule(3, 1e-2))
    assert report.pass_, report.to_text()


def test_strat_ensemble_matches_lindblad():
    sigma2 = 0.5
    res = run_ensemble(StratEngine(StratModel(SZ, SZ, math.sqrt(sigma2))), KET_PLUS, 10_000,
                       1e-3, 1000, seed=4)
    report = compare(res, dephasing_lindblad(1.0, sigma2, res.times), StderrRule(3, 1e-2))
    assert report.pass_, report.to_text()
