"""Stratonovich trajectories propagated by exact per-step unitaries.

Each step applies ``U = exp(-i (H dt + sigma R dW))`` (first-order Magnus for
constant ``H`` and ``R``), so every trajectory stays normalised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidTimeStep
from .ito_sse import ItoModel
from .linops import _expm_hermitian, as_ket, check_hermitian, check_same_dim, dagger
from .noise import RngStream, sample_wiener_increments


@dataclass(frozen=True, eq=False)
class StratModel:
    H: np.ndarray
    R: np.ndarray
    sigma: float

    def __post_init__(self):
        H = check_hermitian(self.H, "H")
        R = check_hermitian(self.R, "R")
        check_same_dim(H, R)
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be non-negative and finite, got {self.sigma!r}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)

    @property
    def dim(self) -> int:
        return self.H.shape[0]


def _check_dt(dt: float) -> None:
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidTimeStep(f"time step must be positive and finite, got {dt!r}")


def strat_step_unitary(model: StratModel, dt: float, dW) -> np.ndarray:
    """Step propagator(s) ``exp(-i (H dt + sigma R dW))``; ``dW`` may be an array."""
    _check_dt(dt)
    dW = np.asarray(dW, dtype=float)
    gen = model.H * dt + (model.sigma * dW)[..., None, None] * model.R
    return _expm_hermitian(gen)


def propagate_strat(model: StratModel, psi0, dt: float, dW: np.ndarray) -> np.ndarray:
    """Batch propagation; ``dW`` has shape (batch, n_steps), result (batch, n_steps + 1, d)."""
    _check_dt(dt)
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    batch, n_steps = dW.shape
    psi = np.broadcast_to(np.asarray(psi0, dtype=complex), (batch, model.dim)).copy()
    out = np.empty((batch, n_steps + 1, model.dim), dtype=complex)
    out[:, 0] = psi
    H_dt = model.H * dt
    for k in range(n_steps):
        gen = H_dt + (model.sigma * dW[:, k])[:, None, None] * model.R
        # apply V exp(-i w) V^dagger without forming U
        w, v = np.linalg.eigh(gen)
        coeff = np.einsum("bji,bj->bi", v.conj(), psi) * np.exp(-1j * w)
        psi = np.einsum("bij,bj->bi", v, coeff)
        out[:, k + 1] = psi
    return out


def run_strat_trajectory(model: StratModel, psi0, dt: float, n_steps: int,
                         stream: RngStream) -> np.ndarray:
    """States ``psi_0 .. psi_n`` of one trajectory, shape ``(n_steps + 1, d)``."""
    psi0 = as_ket(psi0, "psi0")
    check_same_dim(model.H, psi0)
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise ValueError("psi0 must be normalised")
    path = sample_wiener_increments(dt, n_steps, stream)
    return propagate_strat(model, psi0, dt, path.increments[None])[0]


def strat_to_ito_drift(model: StratModel) -> tuple[np.ndarray, ItoModel]:
    """Ito drift ``-iH - sigma^2/2 R^2`` and the equivalent model with ``B = iR``."""
    drift = -1j * model.H - 0.5 * model.sigma**2 * (model.R @ model.R)
    return drift, ItoModel(model.H, 1j * model.R, model.sigma)


def unitarity_defect(U: np.ndarray) -> float:
    d = U.shape[-1]
    return float(np.max(np.abs(dagger(U) @ U - np.eye(d))))
