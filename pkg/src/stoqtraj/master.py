"""Deterministic master-equation oracles.

* Lindblad evolution with any number of channels ``(L, rate)``.
* The white-noise limit of the stochastic Liouville equation,
  ``-i[H, rho] - gamma [R, [R, rho]]``; for white noise of intensity sigma
  the matching rate is ``gamma = sigma**2 / 2`` (see :func:`white_noise_gamma`).
* The time-local second-order (Redfield/TCL2) equation for a coloured
  Gaussian drive ``Z_t R`` with stationary covariance ``C(t - s)``::

      d rho/dt = -i[H, rho] - int_0^t C(t - s) [R, [R(t - s), rho]] ds,
      R(tau) = exp(-iH tau) R exp(iH tau).

* The trajectory-level Liouville right-hand side with extra dissipators.

All right-hand sides accept a leading batch axis on ``rho``.
"""

from __future__ import annotations

import logging
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import InvalidTimeStep, PositivityWarning
from .linops import as_operator, check_hermitian, check_same_dim, dagger
from .noise import CovarianceForm, DeltaForm, ExponentialForm

log = logging.getLogger(__name__)

Channel = tuple[np.ndarray, float]


@dataclass(frozen=True, eq=False)
class LindbladModel:
    H: np.ndarray
    channels: tuple[Channel, ...] = field(default_factory=tuple)

    def __post_init__(self):
        H = check_hermitian(self.H, "H")
        chans = []
        for i, (L, rate) in enumerate(self.channels):
            L = as_operator(L, f"channel {i} operator")
            check_same_dim(H, L)
            if not (np.isfinite(rate) and rate >= 0):
                raise ValueError(f"channel {i} rate must be non-negative, got {rate!r}")
            chans.append((L, float(rate)))
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "channels", tuple(chans))


def _comm(a, b):
    return a @ b - b @ a


def dissipator(channels: Sequence[Channel], rho: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rho)
    for L, rate in channels:
        LdL = dagger(L) @ L
        out += rate * (L @ rho @ dagger(L) - 0.5 * (LdL @ rho + rho @ LdL))
    return out


def lindblad_rhs(model: LindbladModel, rho) -> np.ndarray:
    """``-i[H, rho] + sum_k rate_k (L rho L^dagger - {L^dagger L, rho}/2)``."""
    rho = np.asarray(rho, dtype=complex)
    check_same_dim(model.H, rho)
    return -1j * _comm(model.H, rho) + dissipator(model.channels, rho)


def white_noise_gamma(sigma: float) -> float:
    """Double-commutator rate reproducing the Lindblad channel ``(R, sigma**2)``."""
    return 0.5 * sigma**2


def white_noise_sle_rhs(H, R, gamma: float, rho) -> np.ndarray:
    """``-i[H, rho] - gamma [R, [R, rho]]`` for Hermitian ``R``."""
    H = as_operator(H, "H")
    R = check_hermitian(R, "R")
    rho = np.asarray(rho, dtype=complex)
    check_same_dim(H, R, rho)
    return -1j * _comm(H, rho) - gamma * _comm(R, _comm(R, rho))


def sle_trajectory_rhs(H_eff, channels: Sequence[Channel], rho) -> np.ndarray:
    """``-i[H_eff, rho] + D[rho]`` for one noise realisation of ``H_eff``."""
    H_eff = check_hermitian(H_eff, "H_eff")
    rho = np.asarray(rho, dtype=complex)
    check_same_dim(H_eff, rho)
    return -1j * _comm(H_eff, rho) + dissipator(channels, rho)


def rk4_evolve(rhs: Callable[[float, np.ndarray], np.ndarray], rho0, dt: float,
               n_steps: int, t0: float = 0.0) -> np.ndarray:
    """Classical fourth-order Runge-Kutta for ``d rho/dt = rhs(t, rho)``.

    The state is symmetrised to ``(rho + rho^dagger)/2`` after every step.
    A :class:`PositivityWarning` is emitted (once) if an eigenvalue drops
    below ``-1e-6``; the evolution is never clipped.

    Returns
    -------
    array, shape (n_steps + 1, d, d)
    """
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidTimeStep(f"time step must be positive and finite, got {dt!r}")
    rho = as_operator(rho0, "rho0").copy()
    out = np.empty((n_steps + 1,) + rho.shape, dtype=complex)
    out[0] = rho
    worst_sym = 0.0
    worst_eig = 0.0
    warned = False
    for k in range(n_steps):
        t = t0 + k * dt
        k1 = rhs(t, rho)
        k2 = rhs(t + dt / 2, rho + dt / 2 * k1)
        k3 = rhs(t + dt / 2, rho + dt / 2 * k2)
        k4 = rhs(t + dt, rho + dt * k3)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        sym = 0.5 * (rho + dagger(rho))
        worst_sym = max(worst_sym, float(np.max(np.abs(sym - rho))))
        rho = sym
        lo = float(np.linalg.eigvalsh(rho)[0])
        if lo < worst_eig:
            worst_eig = lo
            if lo < -1e-6 and not warned:
                warnings.warn(f"density matrix lost positivity at t={t + dt:.6g}: "
                              f"min eigenvalue {lo:.3e}", PositivityWarning, stacklevel=2)
                warned = True
        out[k + 1] = rho
    log.debug("rk4_evolve: max symmetrisation correction %.3e, min eigenvalue %.3e",
              worst_sym, worst_eig)
    return out


def lindblad_evolve(model: LindbladModel, rho0, dt: float, n_steps: int) -> np.ndarray:
    return rk4_evolve(lambda t, r: lindblad_rhs(model, r), rho0, dt, n_steps)


def white_noise_sle_evolve(H, R, gamma: float, rho0, dt: float, n_steps: int) -> np.ndarray:
    H = check_hermitian(H, "H")
    R = check_hermitian(R, "R")
    return rk4_evolve(lambda t, r: white_noise_sle_rhs(H, R, gamma, r), rho0, dt, n_steps)


@dataclass(frozen=True, eq=False)
class RedfieldModel:
    H: np.ndarray
    R: np.ndarray
    cov: CovarianceForm

    def __post_init__(self):
        H = check_hermitian(self.H, "H")
        R = check_hermitian(self.R, "R")
        check_same_dim(H, R)
        if isinstance(self.cov, ExponentialForm):
            if not (np.isfinite(self.cov.variance) and self.cov.variance >= 0
                    and np.isfinite(self.cov.tau_c) and self.cov.tau_c > 0):
                raise ValueError(f"invalid covariance {self.cov!r}")
        elif not isinstance(self.cov, DeltaForm):
            raise TypeError(f"unsupported covariance form {self.cov!r}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)


def memory_kernel(model: RedfieldModel, times: np.ndarray) -> np.ndarray:
    """``Lambda(t) = int_0^t C(tau) R(tau) dtau`` at each of ``times`` (uniform, from 0).

    ``R(tau)`` is built in the eigenbasis of ``H``,
    ``R(tau)_ab = R_ab exp(-i (E_a - E_b) tau)``, and the integral uses the
    cumulative trapezoid rule on the supplied grid.
    """
    energies, V = np.linalg.eigh(model.H)
    R_eig = dagger(V) @ model.R @ V
    gaps = energies[:, None] - energies[None, :]
    integrand = model.cov(times)[:, None, None] * R_eig * np.exp(-1j * gaps * times[:, None, None])
    lam_eig = cumulative_trapezoid(integrand, times, axis=0, initial=0.0)
    lam = V @ lam_eig @ dagger(V)
    return 0.5 * (lam + dagger(lam))


def redfield_rhs(H, R, kernel: np.ndarray, rho) -> np.ndarray:
    """``-i[H, rho] - [R, [Lambda, rho]]`` for a precomputed kernel ``Lambda``."""
    return -1j * _comm(H, rho) - _comm(R, _comm(kernel, rho))


def redfield_evolve(model: RedfieldModel, rho0, dt: float, n_steps: int) -> np.ndarray:
    """TCL2 evolution on the grid ``k * dt``, shape ``(n_steps + 1, d, d)``.

    The kernel is tabulated on the half-step grid so that the Runge-Kutta
    stages at ``t + dt/2`` read exact quadrature nodes. A white-noise
    covariance is routed to :func:`white_noise_sle_evolve` with
    ``gamma = weight / 2`` (half the delta lies inside ``[0, t]``).
    """
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidTimeStep(f"time step must be positive and finite, got {dt!r}")
    if isinstance(model.cov, DeltaForm):
        return white_noise_sle_evolve(model.H, model.R, 0.5 * model.cov.weight, rho0, dt, n_steps)
    half = dt / 2
    nodes = half * np.arange(2 * n_steps + 1)
    kernel = memory_kernel(model, nodes)
    H, R = model.H, model.R

    def rhs(t, rho):
        return redfield_rhs(H, R, kernel[int(round(t / half))], rho)

    return rk4_evolve(rhs, rho0, dt, n_steps)
