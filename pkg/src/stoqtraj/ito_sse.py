"""Ito trajectories of the normalised linear stochastic Schrodinger equation

    d psi = (-i H - sigma^2/2 B^dagger B) psi dt + sigma B psi dW

integrated with Euler-Maruyama or Milstein. The noise operator ``B`` need not
be Hermitian. Trajectory norms are a martingale, so states are never
renormalised; ensemble averages of the raw outer products give the Lindblad
evolution with the single channel ``(B, sigma^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidTimeStep, NumericalBlowup
from .linops import as_ket, as_operator, check_hermitian, check_same_dim, dagger
from .noise import RngStream, sample_wiener_increments

EM = "em"
MILSTEIN = "milstein"
SCHEMES = (EM, MILSTEIN)

#: Trajectories whose norm exceeds this are reported as blown up.
BLOWUP_NORM = 1e3


@dataclass(frozen=True, eq=False)
class ItoModel:
    H: np.ndarray
    B: np.ndarray
    sigma: float

    def __post_init__(self):
        H = check_hermitian(self.H, "H")
        B = as_operator(self.B, "B")
        check_same_dim(H, B)
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be non-negative and finite, got {self.sigma!r}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "B", B)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def drift(self) -> np.ndarray:
        """``A = -iH - sigma^2/2 B^dagger B``."""
        return -1j * self.H - 0.5 * self.sigma**2 * (dagger(self.B) @ self.B)

    def normalization_defect(self) -> float:
        """``max|A + A^dagger + sigma^2 B^dagger B|``; zero up to rounding."""
        A = self.drift
        return float(np.max(np.abs(A + dagger(A) + self.sigma**2 * dagger(self.B) @ self.B)))

    def stability_hint(self) -> str:
        bnorm = np.linalg.norm(self.B, 2)
        if self.sigma * bnorm == 0:
            return "noise term vanishes"
        return f"keep dt well below 1/(sigma^2 ||B||^2) = {1 / (self.sigma * bnorm) ** 2:.3g}"


def _check_dt(dt: float) -> None:
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidTimeStep(f"time step must be positive and finite, got {dt!r}")


def em_step(model: ItoModel, psi, dt: float, dW) -> np.ndarray:
    """One Euler-Maruyama step; ``psi`` may carry leading batch axes."""
    _check_dt(dt)
    psi = np.asarray(psi, dtype=complex)
    dW = np.asarray(dW, dtype=float)[..., None]
    return psi + dt * (psi @ model.drift.T) + model.sigma * dW * (psi @ model.B.T)


def milstein_step(model: ItoModel, psi, dt: float, dW) -> np.ndarray:
    """Euler-Maruyama plus ``sigma^2/2 B^2 psi (dW^2 - dt)``."""
    psi = np.asarray(psi, dtype=complex)
    dw = np.asarray(dW, dtype=float)
    corr = (0.5 * model.sigma**2 * (dw**2 - dt))[..., None] * (psi @ (model.B @ model.B).T)
    return em_step(model, psi, dt, dW) + corr


def propagate_ito(model: ItoModel, psi0, dt: float, dW: np.ndarray, scheme: str = MILSTEIN):
    """Integrate a batch of trajectories driven by the increments ``dW``.

    Parameters
    ----------
    psi0 : array, shape (d,) or (batch, d)
    dW : array, shape (batch, n_steps)

    Returns
    -------
    states : array, shape (batch, n_steps + 1, d)
        Trajectories that blew up are frozen at their last finite state.
    blown : bool array, shape (batch,)
    """
    _check_dt(dt)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown Ito scheme {scheme!r}; choose from {SCHEMES}")
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    batch, n_steps = dW.shape
    d = model.dim
    psi = np.broadcast_to(np.asarray(psi0, dtype=complex), (batch, d)).copy()
    # row-vector convention: psi_{k+1} = psi_k @ M.T
    step_t = (np.eye(d) + dt * model.drift).T
    noise_t = (model.sigma * model.B).T
    mil_t = (0.5 * model.sigma**2 * model.B @ model.B).T
    out = np.empty((batch, n_steps + 1, d), dtype=complex)
    out[:, 0] = psi
    blown = np.zeros(batch, dtype=bool)
    for k in range(n_steps):
        w = dW[:, k, None]
        new = psi @ step_t + w * (psi @ noise_t)
        if scheme == MILSTEIN:
            new += (w * w - dt) * (psi @ mil_t)
        norm2 = np.einsum("bi,bi->b", new.real, new.real) + np.einsum("bi,bi->b", new.imag, new.imag)
        bad = ~(norm2 <= BLOWUP_NORM**2)
        if bad.any():
            blown |= bad
            new[bad] = psi[bad]
        psi = new
        out[:, k + 1] = psi
    return out, blown


def run_ito_trajectory(model: ItoModel, psi0, dt: float, n_steps: int,
                       scheme: str, stream: RngStream) -> np.ndarray:
    """States ``psi_0 .. psi_n`` of one trajectory, shape ``(n_steps + 1, d)``.

    Raises
    ------
    NumericalBlowup
        If the norm exceeds ``BLOWUP_NORM``; the step is too large for the noise.
    """
    psi0 = as_ket(psi0, "psi0")
    check_same_dim(model.H, psi0)
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise ValueError("psi0 must be normalised")
    path = sample_wiener_increments(dt, n_steps, stream)
    states, blown = propagate_ito(model, psi0, dt, path.increments[None], scheme)
    if blown[0]:
        raise NumericalBlowup(f"trajectory norm exceeded {BLOWUP_NORM:g} at dt={dt:g}; "
                              + model.stability_hint())
    return states[0]


def trajectory_density(states) -> np.ndarray:
    """Outer products ``psi psi^dagger`` along the last axis."""
    psi = np.asarray(states, dtype=complex)
    return np.einsum("...i,...j->...ij", psi, psi.conj())
