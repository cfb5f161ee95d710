"""Monte Carlo ensembles of trajectories and cross-method comparisons.

Trajectory ``i`` always draws its noise from ``RngStream(seed, i)``.
Trajectories are processed in fixed-size chunks whose partial sums are
combined by a pairwise tree over chunk index, so the result is bit-identical
for any number of worker threads.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import GridMismatch, NumericalBlowup
from .ito_sse import MILSTEIN, ItoModel, propagate_ito, trajectory_density
from .linops import _expm_hermitian, as_operator, check_hermitian, check_same_dim, dagger, trace_distances
from .master import dissipator
from .noise import NoiseSpec, RngStream, WhiteNoise, sample_ou_path, sample_wiener_increments
from .rode import MIDPOINT, RodeModel, propagate_rode, sample_half_grid
from .strat_unitary import StratModel, propagate_strat

#: Trajectories per work unit. Fixed so that results never depend on threads.
CHUNK_SIZE = 128
#: Maximum tolerated fraction of blown-up trajectories.
MAX_BLOWUP_FRACTION = 0.01


def _wiener_matrix(streams: Sequence[RngStream], dt: float, n_steps: int) -> np.ndarray:
    return np.stack([sample_wiener_increments(dt, n_steps, s).increments for s in streams])


# -- engines -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ItoEngine:
    model: ItoModel
    scheme: str = MILSTEIN
    kind = "ket"

    @property
    def dim(self) -> int:
        return self.model.dim

    def run_batch(self, initial, dt, n_steps, streams):
        dW = _wiener_matrix(streams, dt, n_steps)
        return propagate_ito(self.model, initial, dt, dW, self.scheme)


@dataclass(frozen=True, eq=False)
class StratEngine:
    model: StratModel
    kind = "ket"

    @property
    def dim(self) -> int:
        return self.model.dim

    def run_batch(self, initial, dt, n_steps, streams):
        dW = _wiener_matrix(streams, dt, n_steps)
        return propagate_strat(self.model, initial, dt, dW), np.zeros(len(streams), dtype=bool)


@dataclass(frozen=True, eq=False)
class RodeEngine:
    model: RodeModel
    scheme: str = MIDPOINT
    kind = "ket"

    @property
    def dim(self) -> int:
        return self.model.dim

    def run_batch(self, initial, dt, n_steps, streams):
        z = np.stack([sample_half_grid(self.model, dt, n_steps, s) for s in streams])
        return propagate_rode(self.model, initial, dt, z, self.scheme)


@dataclass(frozen=True, eq=False)
class SleEngine:
    """Trajectory Liouville equation ``-i[H + Z_t R, rho] + D[rho]``.

    White noise: each step applies the Stratonovich unitary
    ``rho -> U rho U^dagger`` between two RK4 half-steps of the extra
    dissipator ``D`` (Strang splitting). OU noise: RK4 on the full
    right-hand side with ``Z`` read from the half-step grid.
    """

    H: np.ndarray
    R: np.ndarray
    noise: NoiseSpec
    channels: tuple = ()
    kind = "density"

    def __post_init__(self):
        H = check_hermitian(self.H, "H")
        R = check_hermitian(self.R, "R")
        check_same_dim(H, R)
        chans = []
        for L, rate in self.channels:
            L = as_operator(L, "channel operator")
            check_same_dim(H, L)
            if not rate >= 0:
                raise ValueError("channel rates must be non-negative")
            chans.append((L, float(rate)))
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "channels", tuple(chans))

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def _dissipate(self, rho, dt):
        if not self.channels:
            return rho
        k1 = dissipator(self.channels, rho)
        k2 = dissipator(self.channels, rho + dt / 2 * k1)
        k3 = dissipator(self.channels, rho + dt / 2 * k2)
        k4 = dissipator(self.channels, rho + dt * k3)
        return rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    def run_batch(self, initial, dt, n_steps, streams):
        batch = len(streams)
        rho0 = np.asarray(initial, dtype=complex)
        if rho0.ndim == 1:
            rho0 = np.outer(rho0, rho0.conj())
        d = self.dim
        rho = np.broadcast_to(rho0, (batch, d, d)).copy()
        out = np.empty((batch, n_steps + 1, d, d), dtype=complex)
        out[:, 0] = rho
        H, R = self.H, self.R
        if isinstance(self.noise, WhiteNoise):
            dW = _wiener_matrix(streams, dt, n_steps)
            for k in range(n_steps):
                U = _expm_hermitian(H * dt + (self.noise.sigma * dW[:, k])[:, None, None] * R)
                rho = self._dissipate(U @ self._dissipate(rho, dt / 2) @ dagger(U), dt / 2)
                out[:, k + 1] = rho
        else:
            z = np.stack([sample_ou_path(self.noise, dt / 2, 2 * n_steps, s) for s in streams])

            def rhs(j, r):
                Heff = H + z[:, j, None, None] * R
                return -1j * (Heff @ r - r @ Heff) + dissipator(self.channels, r)

            for k in range(n_steps):
                k1 = rhs(2 * k, rho)
                k2 = rhs(2 * k + 1, rho + dt / 2 * k1)
                k3 = rhs(2 * k + 1, rho + dt / 2 * k2)
                k4 = rhs(2 * k + 2, rho + dt * k3)
                rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
                out[:, k + 1] = rho
        return out, np.zeros(batch, dtype=bool)


Engine = Union[ItoEngine, StratEngine, RodeEngine, SleEngine]


# -- ensemble statistics ----------------------------------------------------------

@dataclass
class _Partial:
    count: int
    blown: int
    sum_rho: np.ndarray  # (T, d, d)
    sum_fro2: np.ndarray  # (T,)
    sum_obs: np.ndarray  # (n_obs, T)
    sum_obs2: np.ndarray  # (n_obs, T)

    def __add__(self, other: _Partial) -> _Partial:
        return _Partial(self.count + other.count, self.blown + other.blown,
                        self.sum_rho + other.sum_rho, self.sum_fro2 + other.sum_fro2,
                        self.sum_obs + other.sum_obs, self.sum_obs2 + other.sum_obs2)


def _tree_sum(items: list):
    while len(items) > 1:
        paired = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            paired.append(items[-1])
        items = paired
    return items[0]


@dataclass
class EnsembleResult:
    """Ensemble averages on the output grid.

    ``stderr`` is a trace-distance-scale Monte Carlo error per time,
    ``sqrt(d)/2`` times the standard error of the mean density matrix in
    Frobenius norm (exact for qubits, an upper bound otherwise).
    """

    times: np.ndarray
    mean_rho: np.ndarray
    stderr: np.ndarray
    purity: np.ndarray
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    observable_stderr: dict[str, np.ndarray] = field(default_factory=dict)
    n_trajectories: int = 0
    n_blown: int = 0

    @property
    def trace(self) -> np.ndarray:
        return np.real(np.trace(self.mean_rho, axis1=-2, axis2=-1))


def _normalize_observables(observables) -> dict[str, np.ndarray]:
    if observables is None:
        return {}
    if isinstance(observables, Mapping):
        items = observables.items()
    else:
        items = ((f"O{i}", op) for i, op in enumerate(observables))
    return {name: check_hermitian(op, f"observable {name}") for name, op in items}


def _run_chunk(engine, initial, dt, n_steps, seed, start, count, obs_ops) -> _Partial:
    streams = [RngStream(seed, i) for i in range(start, start + count)]
    states, blown = engine.run_batch(initial, dt, n_steps, streams)
    ok = ~blown
    states = states[ok]
    rho = trajectory_density(states) if engine.kind == "ket" else states
    T = n_steps + 1
    d = engine.dim
    if engine.kind == "ket":
        fro2 = np.sum(np.abs(states) ** 2, axis=-1) ** 2
    else:
        fro2 = np.sum(np.abs(rho) ** 2, axis=(-2, -1))
    if obs_ops.shape[0]:
        vals = np.real(np.einsum("oij,btji->obt", obs_ops, rho))
    else:
        vals = np.zeros((0, states.shape[0], T))
    return _Partial(int(ok.sum()), int(blown.sum()),
                    rho.sum(axis=0) if rho.shape[0] else np.zeros((T, d, d), complex),
                    fro2.sum(axis=0) if rho.shape[0] else np.zeros(T),
                    vals.sum(axis=1), (vals**2).sum(axis=1))


def run_ensemble(engine: Engine, initial, N: int, dt: float, n_steps: int, seed: int = 0,
                 observables=None, workers: int = 1, chunk_size: int = CHUNK_SIZE) -> EnsembleResult:
    """Average ``N`` trajectories of ``engine`` started from ``initial``.

    ``initial`` is a ket (or, for :class:`SleEngine`, a ket or density
    matrix). ``observables`` is a mapping name -> Hermitian operator or a
    plain sequence. ``workers`` only changes wall time.

    Raises
    ------
    NumericalBlowup
        If more than 1% of the trajectories blew up.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    obs = _normalize_observables(observables)
    d = engine.dim
    obs_ops = np.array(list(obs.values()), dtype=complex).reshape(-1, d, d)
    chunks = [(s, min(chunk_size, N - s)) for s in range(0, N, chunk_size)]

    def work(chunk):
        return _run_chunk(engine, initial, dt, n_steps, seed, chunk[0], chunk[1], obs_ops)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(work, chunks))
    else:
        partials = [work(c) for c in chunks]
    total = _tree_sum(partials)
    if total.blown > MAX_BLOWUP_FRACTION * N or total.count == 0:
        raise NumericalBlowup(f"{total.blown} of {N} trajectories blew up; reduce dt={dt:g}")

    n = total.count
    mean = total.sum_rho / n
    mean = 0.5 * (mean + dagger(mean))
    if n > 1:
        spread = np.maximum(total.sum_fro2 - n * np.sum(np.abs(mean) ** 2, axis=(-2, -1)), 0.0)
        stderr = 0.5 * math.sqrt(d) * np.sqrt(spread / (n * (n - 1)))
        obs_var = np.maximum(total.sum_obs2 - total.sum_obs**2 / n, 0.0) / (n - 1)
        obs_se = np.sqrt(obs_var / n)
    else:
        stderr = np.zeros(n_steps + 1)
        obs_se = np.zeros_like(total.sum_obs)
    purity = np.real(np.einsum("tij,tji->t", mean, mean))
    names = list(obs)
    return EnsembleResult(
        times=dt * np.arange(n_steps + 1),
        mean_rho=mean,
        stderr=stderr,
        purity=purity,
        observables={k: total.sum_obs[i] / n for i, k in enumerate(names)},
        observable_stderr={k: obs_se[i] for i, k in enumerate(names)},
        n_trajectories=n,
        n_blown=total.blown,
    )


# -- comparisons -------------------------------------------------------------------

@dataclass(frozen=True)
class AbsRule:
    eps: float

    def bound(self, stderr: np.ndarray) -> np.ndarray:
        return np.full_like(stderr, self.eps, dtype=float)

    def describe(self) -> str:
        return f"distance <= {self.eps:g}"


@dataclass(frozen=True)
class StderrRule:
    """Per-time bound ``max(k * stderr, floor)``."""

    k: float
    floor: float = 0.0

    def bound(self, stderr: np.ndarray) -> np.ndarray:
        return np.maximum(self.k * stderr, self.floor)

    def describe(self) -> str:
        return f"distance <= max({self.k:g} * stderr, {self.floor:g})"


ToleranceRule = Union[AbsRule, StderrRule]


@dataclass
class ComparisonReport:
    max_trace_distance: float
    time_of_max: float
    per_time_distance: np.ndarray
    per_time_stderr: np.ndarray
    per_time_bound: np.ndarray
    pass_: bool
    rule: str
    regime_ok: bool = True
    notes: dict = field(default_factory=dict)

    def worst_margin(self) -> float:
        """Largest ``distance - bound``; negative when passing."""
        return float(np.max(self.per_time_distance - self.per_time_bound))

    def to_text(self) -> str:
        lines = [
            f"result {'PASS' if self.pass_ else 'FAIL'}",
            f"rule {self.rule}",
            f"max_trace_distance {self.max_trace_distance:.6e}",
            f"time_of_max {self.time_of_max:.6g}",
            f"worst_margin {self.worst_margin():.6e}",
            f"regime_ok {str(self.regime_ok).lower()}",
        ]
        lines += [f"{k} {v:.6g}" if isinstance(v, float) else f"{k} {v}" for k, v in self.notes.items()]
        return "\n".join(lines) + "\n"


def compare(result: EnsembleResult, reference, rule: ToleranceRule) -> ComparisonReport:
    """Per-time trace distance between ``result`` and ``reference``.

    ``reference`` is a stack of density matrices on the same grid or another
    :class:`EnsembleResult`, in which case the two standard errors are
    combined in quadrature.
    """
    stderr = np.asarray(result.stderr, dtype=float)
    if isinstance(reference, EnsembleResult):
        if len(reference.times) != len(result.times) or not np.allclose(reference.times, result.times):
            raise GridMismatch("ensembles are on different time grids")
        stderr = np.hypot(stderr, reference.stderr)
        ref = reference.mean_rho
    else:
        ref = np.asarray(reference, dtype=complex)
    if ref.shape != result.mean_rho.shape:
        raise GridMismatch(f"reference shape {ref.shape} does not match result {result.mean_rho.shape}")
    dist = trace_distances(result.mean_rho, ref)
    bound = rule.bound(stderr)
    i = int(np.argmax(dist))
    return ComparisonReport(
        max_trace_distance=float(dist[i]),
        time_of_max=float(result.times[i]),
        per_time_distance=dist,
        per_time_stderr=stderr,
        per_time_bound=bound,
        pass_=bool(np.all(dist <= bound)),
        rule=rule.describe(),
    )
