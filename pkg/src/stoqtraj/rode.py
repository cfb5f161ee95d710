"""Random-ODE trajectories for ``H + Z_t R`` with an Ornstein-Uhlenbeck ``Z_t``.

Along one realisation ``Z_t`` is a continuous function, so the Schrodinger
equation is an ordinary ODE with a fluctuating coefficient. The OU path is
sampled on the half-step grid ``k * dt / 2``: the midpoint-unitary scheme uses
the odd nodes, Heun uses the even ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidTimeStep, NumericalBlowup, ValidationError
from .ito_sse import BLOWUP_NORM
from .linops import as_ket, check_hermitian, check_same_dim
from .noise import OrnsteinUhlenbeck, RngStream, sample_ou_path

MIDPOINT = "midpoint"
HEUN = "heun"
SCHEMES = (MIDPOINT, HEUN)


@dataclass(frozen=True, eq=False)
class RodeModel:
    H: np.ndarray
    R: np.ndarray
    noise: OrnsteinUhlenbeck

    def __post_init__(self):
        H = check_hermitian(self.H, "H")
        R = check_hermitian(self.R, "R")
        check_same_dim(H, R)
        if not isinstance(self.noise, OrnsteinUhlenbeck):
            raise ValidationError("rode engine is OU-only; use strat or ito for white noise")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)

    @property
    def dim(self) -> int:
        return self.H.shape[0]


def _check_dt(dt: float) -> None:
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidTimeStep(f"time step must be positive and finite, got {dt!r}")


def sample_half_grid(model: RodeModel, dt: float, n_steps: int, stream: RngStream) -> np.ndarray:
    """OU values at ``j * dt / 2`` for ``j = 0 .. 2 n_steps``."""
    _check_dt(dt)
    return sample_ou_path(model.noise, dt / 2, 2 * n_steps, stream)


def propagate_rode(model: RodeModel, psi0, dt: float, z_half: np.ndarray, scheme: str = MIDPOINT):
    """Batch propagation along given half-grid OU paths.

    Parameters
    ----------
    z_half : array, shape (batch, 2 * n_steps + 1)

    Returns
    -------
    states : array, shape (batch, n_steps + 1, d)
    blown : bool array, shape (batch,); always False for the midpoint scheme
    """
    _check_dt(dt)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown RODE scheme {scheme!r}; choose from {SCHEMES}")
    z_half = np.atleast_2d(np.asarray(z_half, dtype=float))
    batch, m = z_half.shape
    if m % 2 != 1:
        raise ValueError("half-grid path must have an odd number of nodes")
    n_steps = (m - 1) // 2
    d = model.dim
    psi = np.broadcast_to(np.asarray(psi0, dtype=complex), (batch, d)).copy()
    out = np.empty((batch, n_steps + 1, d), dtype=complex)
    out[:, 0] = psi
    blown = np.zeros(batch, dtype=bool)
    H, R = model.H, model.R
    for k in range(n_steps):
        if scheme == MIDPOINT:
            gen = dt * (H + z_half[:, 2 * k + 1, None, None] * R)
            w, v = np.linalg.eigh(gen)
            coeff = np.einsum("bji,bj->bi", v.conj(), psi) * np.exp(-1j * w)
            psi = np.einsum("bij,bj->bi", v, coeff)
        else:
            z0 = z_half[:, 2 * k, None]
            z1 = z_half[:, 2 * k + 2, None]
            f0 = -1j * (psi @ H.T + z0 * (psi @ R.T))
            pred = psi + dt * f0
            f1 = -1j * (pred @ H.T + z1 * (pred @ R.T))
            new = psi + 0.5 * dt * (f0 + f1)
            bad = ~(np.linalg.norm(new, axis=1) <= BLOWUP_NORM)
            if bad.any():
                blown |= bad
                new[bad] = psi[bad]
            psi = new
        out[:, k + 1] = psi
    return out, blown


def run_rode_trajectory(model: RodeModel, psi0, dt: float, n_steps: int,
                        stream: RngStream, scheme: str = MIDPOINT) -> np.ndarray:
    """States ``psi_0 .. psi_n`` of one realisation, shape ``(n_steps + 1, d)``."""
    psi0 = as_ket(psi0, "psi0")
    check_same_dim(model.H, psi0)
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise ValueError("psi0 must be normalised")
    z = sample_half_grid(model, dt, n_steps, stream)
    states, blown = propagate_rode(model, psi0, dt, z[None], scheme)
    if blown[0]:
        raise NumericalBlowup(f"Heun trajectory norm exceeded {BLOWUP_NORM:g}; reduce dt={dt:g}")
    return states[0]


def coupling_ratio(model: RodeModel) -> float:
    """``std^2 tau_c ||R||^2`` relative to the largest level spacing of ``H``.

    Small values mean the second-order (Redfield) closure is expected to hold.
    Without level spacing (degenerate ``H``) the scale falls back to ``1/tau_c``.
    """
    e = np.linalg.eigvalsh(model.H)
    scale = max(float(e[-1] - e[0]), 1.0 / model.noise.tau_c)
    rnorm = float(np.linalg.norm(model.R, 2))
    return model.noise.std**2 * model.noise.tau_c * rnorm**2 / scale


#: Above this :func:`coupling_ratio` the Redfield comparison is flagged.
WEAK_COUPLING_LIMIT = 0.1


def rode_vs_redfield_report(model: RodeModel, psi0, T: float, dt: float, N: int, seed: int,
                            workers: int = 1, floor: float = 1e-2, k: float = 3.0):
    """Compare the RODE ensemble mean with :func:`master.redfield_evolve`.

    Returns a :class:`ensemble.ComparisonReport`; ``report.regime_ok`` is
    False when the coupling is too strong for the second-order closure, in
    which case ``pass_`` carries no meaning.
    """
    from .ensemble import RodeEngine, StderrRule, compare, run_ensemble
    from .master import RedfieldModel, redfield_evolve
    from .noise import covariance_form

    n_steps = int(round(T / dt))
    psi0 = as_ket(psi0, "psi0")
    result = run_ensemble(RodeEngine(model), psi0, N, dt, n_steps, seed, workers=workers)
    rho0 = np.outer(psi0, psi0.conj())
    reference = redfield_evolve(RedfieldModel(model.H, model.R, covariance_form(model.noise)),
                                rho0, dt, n_steps)
    report = compare(result, reference, StderrRule(k, floor))
    ratio = coupling_ratio(model)
    report.notes["coupling_ratio"] = ratio
    report.regime_ok = ratio <= WEAK_COUPLING_LIMIT
    return report
