"""Measured convergence orders on shared noise paths.

Strong order of the Ito schemes: every path is sampled once at the coarsest
step, filled in by Brownian bridges down to ``min(dts) / refine``, and every
step size integrates block sums of that same fine path. The reference solution
is Milstein on the finest grid. The bridge draws are consumed one coarse step
at a time, which reproduces :func:`noise.refine_wiener_path` exactly while
keeping memory flat.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .ito_sse import EM, MILSTEIN, ItoModel, propagate_ito
from .noise import _BRIDGE, RngStream, bridge_from_normals, sample_wiener_increments
from .rode import MIDPOINT, RodeModel, propagate_rode, sample_half_grid

DEFAULT_DTS = (1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4)


@dataclass
class StrongOrderReport:
    dts: np.ndarray
    errors: dict[str, np.ndarray]
    slopes: dict[str, float]
    n_paths: int
    reference_dt: float

    def to_text(self) -> str:
        lines = [f"n_paths {self.n_paths}", f"reference_dt {self.reference_dt:.6g}"]
        for scheme, slope in self.slopes.items():
            lines.append(f"slope {scheme} {slope:.4f}")
        lines.append("dt," + ",".join(f"error_{s}" for s in self.errors))
        for i, dt in enumerate(self.dts):
            lines.append(f"{dt:.6g}," + ",".join(f"{self.errors[s][i]:.6e}" for s in self.errors))
        return "\n".join(lines) + "\n"


def fitted_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def _ratio(big: float, small: float) -> int:
    r = big / small
    m = int(round(r))
    if m < 1 or abs(r - m) > 1e-9 * r:
        raise ValueError(f"step {small:g} does not divide {big:g}")
    return m


def measure_strong_order(model: ItoModel, psi0, T: float, dts: Sequence[float] = DEFAULT_DTS,
                         n_paths: int = 200, seed: int = 0, refine: int = 16,
                         schemes: Sequence[str] = (EM, MILSTEIN)) -> StrongOrderReport:
    """Mean endpoint error ``E||psi_dt(T) - psi_ref(T)||`` per scheme and step size."""
    dts = np.sort(np.asarray(dts, dtype=float))[::-1]
    dt_max = float(dts[0])
    n_coarse = _ratio(T, dt_max)
    per_coarse = [_ratio(dt_max, dt) for dt in dts]
    fine_per_coarse = per_coarse[-1] * refine
    dt_ref = dt_max / fine_per_coarse

    streams = [RngStream(seed, p) for p in range(n_paths)]
    coarse = np.stack([sample_wiener_increments(dt_max, n_coarse, s).increments for s in streams])
    bridges = [s.generator(_BRIDGE) for s in streams]

    psi = np.asarray(psi0, dtype=complex)
    state = {(s, i): np.broadcast_to(psi, (n_paths, model.dim)).copy()
             for s in schemes for i in range(len(dts))}
    ref = np.broadcast_to(psi, (n_paths, model.dim)).copy()
    for k in range(n_coarse):
        z = np.stack([g.standard_normal(fine_per_coarse) for g in bridges])
        fine = bridge_from_normals(coarse[:, k], dt_max, z)
        ref = propagate_ito(model, ref, dt_ref, fine, MILSTEIN)[0][:, -1]
        for i, m in enumerate(per_coarse):
            block = fine.reshape(n_paths, m, -1).sum(axis=-1)
            for s in schemes:
                state[s, i] = propagate_ito(model, state[s, i], float(dts[i]), block, s)[0][:, -1]

    errors = {s: np.array([np.mean(np.linalg.norm(state[s, i] - ref, axis=1))
                           for i in range(len(dts))]) for s in schemes}
    slopes = {s: fitted_slope(dts, errors[s]) for s in schemes}
    return StrongOrderReport(dts, errors, slopes, n_paths, dt_ref)


def rode_refinement_factor(model: RodeModel, psi0, T: float, dt: float, n_paths: int = 50,
                           seed: int = 0, scheme: str = MIDPOINT) -> float:
    """Ratio of endpoint errors at ``dt`` and ``dt/2`` against a ``dt/8`` reference.

    All three runs read the same OU path, sampled on the ``dt/16`` grid so that
    every run's evaluation nodes are actual samples. Errors are averaged over
    ``n_paths`` realisations before taking the ratio.
    """
    n_steps = _ratio(T, dt)
    fine_steps = 8 * n_steps
    z = np.stack([sample_half_grid(model, dt / 8, fine_steps, RngStream(seed, p))
                  for p in range(n_paths)])
    ends = {}
    for div in (1, 2, 8):
        stride = 8 // div
        states, _ = propagate_rode(model, psi0, dt / div, z[:, ::stride], scheme)
        ends[div] = states[:, -1]
    err = {div: np.mean(np.linalg.norm(ends[div] - ends[8], axis=1)) for div in (1, 2)}
    return float(err[1] / err[2])
