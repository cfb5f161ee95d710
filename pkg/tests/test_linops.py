import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import SX, SY, SZ, I2, taylor_expm
from stoqtraj.errors import DimensionMismatch, NonHermitianInput
from stoqtraj.linops import (
    KET0,
    KET1,
    commutator,
    expm_generator,
    hermitian_basis,
    matrix_from_literal,
    matrix_to_literal,
    projector,
    purity,
    random_density,
    random_hermitian,
    trace_distance,
    trace_distances,
    validate_density,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 5)
reals = st.floats(-5, 5, allow_nan=False)


def test_expm_zero_generator_is_identity():
    assert np.array_equal(expm_generator(np.zeros((2, 2)), 1.0), I2)


def test_expm_sigma_z_quarter_turn():
    U = expm_generator(SZ, math.pi / 2)
    assert np.allclose(U, np.diag([-1j, 1j]), atol=1e-15)


@pytest.mark.parametrize("t", [0.0, 0.3, 1.7, -2.5, 10.0])
def test_expm_sigma_x_closed_form(t):
    U = expm_generator(SX, t)
    assert np.allclose(U, math.cos(t) * I2 - 1j * math.sin(t) * SX, atol=1e-14)
    assert np.allclose(U, taylor_expm(-1j * t * SX), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 6), st.floats(-3, 3))
def test_expm_matches_taylor_series(seed, dim, s):
    M = random_hermitian(dim, np.random.default_rng(seed))
    assert np.allclose(expm_generator(M, s), taylor_expm(-1j * s * M), atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(seeds, dims, reals, reals)
def test_expm_group_law(seed, dim, s1, s2):
    M = random_hermitian(dim, np.random.default_rng(seed))
    I = np.eye(dim)
    assert np.allclose(expm_generator(M, s1) @ expm_generator(M, -s1), I, atol=1e-9)
    assert np.allclose(expm_generator(M, s1) @ expm_generator(M, s2), expm_generator(M, s1 + s2), atol=1e-9)
    U = expm_generator(M, s1)
    assert np.max(np.abs(U.conj().T @ U - I)) <= 1e-10


def test_expm_rejects_non_hermitian():
    with pytest.raises(NonHermitianInput):
        expm_generator(np.array([[0, 1], [0, 0]]), 1.0)


def test_expm_rejects_non_square():
    with pytest.raises(DimensionMismatch):
        expm_generator(np.zeros((2, 3)), 1.0)


def test_commutator_examples():
    assert np.array_equal(commutator(SX, SX), np.zeros((2, 2)))
    assert np.allclose(commutator(SZ, SX), 2j * SY)
    A = random_hermitian(3, np.random.default_rng(0)) + 1j
    assert np.allclose(commutator(np.eye(3), A), 0)
    with pytest.raises(DimensionMismatch):
        commutator(SX, np.eye(3))


def test_trace_distance_examples():
    rho = random_density(3, np.random.default_rng(1))
    assert trace_distance(rho, rho) == 0.0
    assert trace_distance(projector(KET0), projector(KET1)) == pytest.approx(1.0, abs=1e-15)
    assert trace_distance(projector(KET0), I2 / 2) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(DimensionMismatch):
        trace_distance(I2 / 2, np.eye(3) / 3)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(2, 4))
def test_trace_distance_metric(seed, dim):
    rng = np.random.default_rng(seed)
    a, b, c = (random_density(dim, rng) for _ in range(3))
    dab = trace_distance(a, b)
    assert dab == pytest.approx(trace_distance(b, a), abs=1e-14)
    assert dab <= trace_distance(a, c) + trace_distance(c, b) + 1e-12
    assert 0 <= dab <= 1 + 1e-9


def test_trace_distances_vectorised():
    rng = np.random.default_rng(2)
    a = np.array([random_density(3, rng) for _ in range(4)])
    b = np.array([random_density(3, rng) for _ in range(4)])
    assert np.allclose(trace_distances(a, b), [trace_distance(x, y) for x, y in zip(a, b)])


def test_purity_examples():
    assert purity(projector(KET0)) == pytest.approx(1.0)
    assert purity(I2 / 2) == pytest.approx(0.5)
    assert purity(np.diag([0.75, 0.25])) == pytest.approx(0.625, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(2, 4))
def test_purity_unitary_invariance(seed, dim):
    rng = np.random.default_rng(seed)
    rho = random_density(dim, rng)
    U = expm_generator(random_hermitian(dim, rng), 1.0)
    p = purity(rho)
    assert purity(U @ rho @ U.conj().T) == pytest.approx(p, abs=1e-10)
    assert 1 / dim - 1e-9 <= p <= 1 + 1e-9


def test_validate_density_rejects_bad_inputs():
    validate_density(I2 / 2)
    with pytest.raises(ValueError):
        validate_density(I2)
    with pytest.raises(ValueError):
        validate_density(np.diag([1.5, -0.5]))
    with pytest.raises(NonHermitianInput):
        validate_density(np.array([[0.5, 0.1], [0.0, 0.5]]))


@pytest.mark.parametrize("dim", [1, 2, 3, 4])
def test_hermitian_basis_is_orthonormal(dim):
    basis = hermitian_basis(dim)
    gram = np.einsum("aij,bij->ab", basis.conj(), basis)
    assert basis.shape == (dim * dim, dim, dim)
    assert np.allclose(gram, np.eye(dim * dim))
    assert all(np.allclose(b, b.conj().T) for b in basis)


def test_matrix_literal_round_trip():
    M = np.array([[1 + 2j, -0.5], [3j, 1e-17]])
    assert np.array_equal(matrix_from_literal(matrix_to_literal(M)), M)
    with pytest.raises(ValueError):
        matrix_from_literal([[1, 2], [3, 4]])
