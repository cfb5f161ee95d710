"""Dense complex linear algebra for small Hilbert spaces.

Operators, kets and density matrices are plain ``numpy`` arrays with complex
dtype; the functions here validate shapes and Hermiticity and never mutate
their inputs. Units are hbar = 1 throughout.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import DimensionMismatch, NonHermitianInput

#: Absolute elementwise tolerance used by Hermiticity checks.
HERMITIAN_ATOL = 1e-12

IDENTITY2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
#: Lowering operator |0><1| in the basis where sigma_z|0> = |0>.
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)


def as_operator(a, name: str = "operator") -> np.ndarray:
    """Return ``a`` as a finite square complex matrix."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise DimensionMismatch(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def as_ket(psi, name: str = "state") -> np.ndarray:
    v = np.asarray(psi, dtype=complex)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatch(f"{name} must be a non-empty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite amplitudes")
    return v


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def hermiticity_defect(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - dagger(a)))) if a.size else 0.0


def is_hermitian(a, atol: float = HERMITIAN_ATOL) -> bool:
    return hermiticity_defect(np.asarray(a, dtype=complex)) <= atol


def check_hermitian(a, name: str = "operator", atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Validate and return ``a`` as a Hermitian operator.

    Raises
    ------
    NonHermitianInput
        If ``max|a - a^dagger|`` exceeds ``atol``.
    """
    m = as_operator(a, name)
    defect = hermiticity_defect(m)
    if defect > atol:
        raise NonHermitianInput(f"{name} is not Hermitian (max|A - A^dagger| = {defect:.3e} > {atol:.1e})")
    return m


def check_same_dim(*ops: np.ndarray) -> int:
    dims = {op.shape[-1] for op in ops}
    if len(dims) != 1:
        raise DimensionMismatch(f"operand dimensions differ: {sorted(dims)}")
    return dims.pop()


def expm_generator(m, scale: float = 1.0, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Unitary ``exp(-i * scale * M)`` for Hermitian ``M``.

    Computed from the eigendecomposition ``M = V diag(w) V^dagger`` so the
    result is unitary up to rounding, whatever the norm of ``scale * M``.
    """
    m = check_hermitian(m, "generator", atol)
    return _expm_hermitian(m, scale)


def _expm_hermitian(m: np.ndarray, scale=1.0) -> np.ndarray:
    # Batched over leading axes; no validation.
    w, v = np.linalg.eigh(m)
    phase = np.exp(-1j * np.asarray(scale)[..., None] * w)
    return (v * phase[..., None, :]) @ dagger(v)


def commutator(a, b) -> np.ndarray:
    a = as_operator(a, "A")
    b = as_operator(b, "B")
    check_same_dim(a, b)
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    a = as_operator(a, "A")
    b = as_operator(b, "B")
    check_same_dim(a, b)
    return a @ b + b @ a


def projector(psi) -> np.ndarray:
    """Outer product ``|psi><psi|`` (no normalisation)."""
    v = as_ket(psi)
    return np.outer(v, np.conj(v))


def trace_distance(rho1, rho2) -> float:
    """Half the sum of absolute eigenvalues of ``rho1 - rho2``."""
    a = as_operator(rho1, "rho1")
    b = as_operator(rho2, "rho2")
    check_same_dim(a, b)
    diff = a - b
    # Tolerate the small anti-Hermitian residue left by finite averaging.
    diff = 0.5 * (diff + dagger(diff))
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def trace_distances(rhos1: np.ndarray, rhos2: np.ndarray) -> np.ndarray:
    """Vectorised :func:`trace_distance` over a leading time axis."""
    diff = np.asarray(rhos1, dtype=complex) - np.asarray(rhos2, dtype=complex)
    if diff.ndim != 3 or diff.shape[-1] != diff.shape[-2]:
        raise DimensionMismatch(f"expected a stack of square matrices, got shape {diff.shape}")
    diff = 0.5 * (diff + dagger(diff))
    return 0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff)), axis=-1)


def purity(rho) -> float:
    r = as_operator(rho, "rho")
    return float(np.real(np.einsum("ij,ji->", r, r)))


def validate_density(rho, atol_trace: float = 1e-9, atol_herm: float = 1e-10,
                     atol_psd: float = 1e-9) -> np.ndarray:
    """Check the density-matrix invariants and return ``rho`` as an array."""
    r = as_operator(rho, "rho")
    tr = np.trace(r)
    if abs(tr - 1) > atol_trace:
        raise ValueError(f"trace of rho is {tr:.12g}, expected 1")
    defect = hermiticity_defect(r)
    if defect > atol_herm:
        raise NonHermitianInput(f"rho is not Hermitian (defect {defect:.3e})")
    lo = float(np.min(np.linalg.eigvalsh(0.5 * (r + dagger(r)))))
    if lo < -atol_psd:
        raise ValueError(f"rho has negative eigenvalue {lo:.3e}")
    return r


def hermitian_basis(dim: int) -> np.ndarray:
    """Orthonormal basis of Hermitian ``dim x dim`` matrices (Frobenius product).

    Identity direction first, then symmetric, antisymmetric and diagonal
    generalised Gell-Mann directions.
    """
    basis = [np.eye(dim, dtype=complex) / np.sqrt(dim)]
    for j in range(dim):
        for k in range(j + 1, dim):
            s = np.zeros((dim, dim), dtype=complex)
            s[j, k] = s[k, j] = 1 / np.sqrt(2)
            a = np.zeros((dim, dim), dtype=complex)
            a[j, k] = -1j / np.sqrt(2)
            a[k, j] = 1j / np.sqrt(2)
            basis += [s, a]
    for l in range(1, dim):
        d = np.zeros((dim, dim), dtype=complex)
        d[np.arange(l), np.arange(l)] = 1
        d[l, l] = -l
        basis.append(d / np.sqrt(l * (l + 1)))
    return np.array(basis)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * 0.5 * (a + a.conj().T)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_ket(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


# Matrix literal format: row-major nested lists of [re, im] pairs.

def matrix_to_literal(a) -> list[list[list[float]]]:
    m = as_operator(a)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_literal(lit: Sequence, name: str = "matrix") -> np.ndarray:
    try:
        arr = np.asarray(lit, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name}: not a nested array of [re, im] pairs ({exc})") from None
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError(f"{name}: expected shape (dim, dim, 2), got {arr.shape}")
    return as_operator(arr[..., 0] + 1j * arr[..., 1], name)


def vector_to_literal(v) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in as_ket(v)]


def vector_from_literal(lit: Sequence, name: str = "vector") -> np.ndarray:
    try:
        arr = np.asarray(lit, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{name}: not an array of [re, im] pairs ({exc})") from None
    if arr.ndim != 2 or arr.shape[-1] != 2:
        raise ValueError(f"{name}: expected shape (dim, 2), got {arr.shape}")
    return as_ket(arr[:, 0] + 1j * arr[:, 1], name)
