"""Reproducible noise: Wiener increments, Ornstein-Uhlenbeck paths, covariances.

Randomness is organised in counter-based streams. A :class:`RngStream` is a
value ``(master_seed, trajectory_index)``; every draw it makes comes from a
Philox generator keyed by that pair plus a purpose tag, so the numbers seen
by a trajectory never depend on which worker ran it or in what order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import BinaryIO, Union

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidTimeStep, ValidationError

# purpose tags mixed into the stream key
_WIENER, _BRIDGE, _OU = 0, 1, 2


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    trajectory_index: int = 0
    key: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.trajectory_index < 0:
            raise ValueError("trajectory_index must be non-negative")

    def substream(self, *key: int) -> RngStream:
        """Independent child stream, e.g. for a second refinement pass."""
        return RngStream(self.master_seed, self.trajectory_index, self.key + tuple(key))

    def generator(self, purpose: int = _WIENER) -> np.random.Generator:
        seq = np.random.SeedSequence(
            self.master_seed, spawn_key=(self.trajectory_index, purpose, *self.key)
        )
        return np.random.Generator(np.random.Philox(seq))


def streams(master_seed: int, n: int, start: int = 0) -> list[RngStream]:
    return [RngStream(master_seed, i) for i in range(start, start + n)]


# -- noise specifications -----------------------------------------------------

@dataclass(frozen=True)
class WhiteNoise:
    """White noise ``sigma * dW/dt``."""

    sigma: float

    def __post_init__(self):
        _check_positive(sigma=self.sigma)


@dataclass(frozen=True)
class OrnsteinUhlenbeck:
    """Stationary OU process with covariance ``std**2 * exp(-|t-s| / tau_c)``.

    ``z0`` is either ``"stationary"`` (draw Z_0 from N(0, std**2)) or a fixed
    real starting value.
    """

    std: float
    tau_c: float
    z0: Union[str, float] = "stationary"

    def __post_init__(self):
        _check_positive(std=self.std, tau_c=self.tau_c)
        if isinstance(self.z0, str):
            if self.z0 != "stationary":
                raise ValidationError(f"z0 must be 'stationary' or a number, got {self.z0!r}")
        elif not math.isfinite(self.z0):
            raise ValidationError("fixed z0 must be finite")


NoiseSpec = Union[WhiteNoise, OrnsteinUhlenbeck]


def _check_positive(**values: float) -> None:
    for name, v in values.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ValidationError(f"{name} must be positive and finite, got {v!r}")


@dataclass(frozen=True)
class DeltaForm:
    """Covariance ``weight * delta(t - s)``; only ever consumed analytically."""

    weight: float


@dataclass(frozen=True)
class ExponentialForm:
    """Covariance ``variance * exp(-|t - s| / tau_c)``."""

    variance: float
    tau_c: float

    def __call__(self, lag):
        return self.variance * np.exp(-np.abs(lag) / self.tau_c)


CovarianceForm = Union[DeltaForm, ExponentialForm]


def covariance_form(spec: NoiseSpec) -> CovarianceForm:
    if isinstance(spec, WhiteNoise):
        return DeltaForm(spec.sigma**2)
    return ExponentialForm(spec.std**2, spec.tau_c)


def covariance(spec: NoiseSpec, t: float, s: float):
    """``E[Z_t Z_s]``: a float for OU, a :class:`DeltaForm` for white noise."""
    form = covariance_form(spec)
    if isinstance(form, DeltaForm):
        return form
    return float(form(t - s))


# -- Wiener paths -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WienerPath:
    """Increments ``W((k+1) dt) - W(k dt)`` on a uniform grid."""

    dt: float
    increments: np.ndarray
    seed: int = 0
    index: int = 0

    @property
    def n_steps(self) -> int:
        return len(self.increments)


def _check_dt(dt: float) -> None:
    if not (math.isfinite(dt) and dt > 0):
        raise InvalidTimeStep(f"time step must be positive and finite, got {dt!r}")


def sample_wiener_increments(dt: float, n_steps: int, stream: RngStream) -> WienerPath:
    """``n_steps`` i.i.d. N(0, dt) increments, a pure function of ``stream``."""
    _check_dt(dt)
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    dw = math.sqrt(dt) * stream.generator(_WIENER).standard_normal(n_steps)
    return WienerPath(dt, dw, stream.master_seed, stream.trajectory_index)


def bridge_fill(coarse: np.ndarray, dt: float, factor: int, rng: np.random.Generator) -> np.ndarray:
    """Split each coarse increment into ``factor`` Brownian-bridge sub-increments.

    Given their sum ``S``, i.i.d. N(0, h) variables are distributed as
    ``S/m + sqrt(h) (z_i - mean(z))`` with ``z`` standard normal. The last
    sub-increment absorbs the rounding so block sums reproduce ``S``.
    Draws are consumed row by row, so filling in chunks gives the same result
    as filling the whole path at once.
    """
    coarse = np.asarray(coarse, dtype=float)
    return bridge_from_normals(coarse, dt, rng.standard_normal(coarse.shape + (factor,)))


def bridge_from_normals(coarse: np.ndarray, dt: float, z: np.ndarray) -> np.ndarray:
    """:func:`bridge_fill` with the standard normals ``z`` (shape ``coarse.shape + (factor,)``) given."""
    factor = z.shape[-1]
    fine = coarse[..., None] / factor + math.sqrt(dt / factor) * (z - z.mean(axis=-1, keepdims=True))
    fine[..., -1] = coarse - fine[..., :-1].sum(axis=-1)
    return fine


def refine_wiener_path(path: WienerPath, factor: int, stream: RngStream) -> WienerPath:
    """Path on the grid ``dt / factor`` consistent with ``path``.

    Each consecutive block of ``factor`` fine increments sums to the original
    coarse increment.
    """
    if factor < 2:
        raise ValueError("refinement factor must be at least 2")
    fine = bridge_fill(path.increments, path.dt, factor, stream.generator(_BRIDGE))
    return WienerPath(path.dt / factor, fine.reshape(-1), path.seed, path.index)


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` increments (last axis)."""
    inc = np.asarray(increments)
    if inc.shape[-1] % factor:
        raise ValueError(f"{inc.shape[-1]} increments do not split into blocks of {factor}")
    return inc.reshape(inc.shape[:-1] + (-1, factor)).sum(axis=-1)


_HEADER = struct.Struct("<dQQQ")


def write_wiener_path(path: WienerPath, fh: BinaryIO) -> None:
    """Binary audit dump: header (dt, n_steps, seed, index) then float64 LE data."""
    fh.write(_HEADER.pack(path.dt, path.n_steps, path.seed, path.index))
    fh.write(np.asarray(path.increments, dtype="<f8").tobytes())


def read_wiener_path(fh: BinaryIO) -> WienerPath:
    dt, n, seed, index = _HEADER.unpack(fh.read(_HEADER.size))
    data = np.frombuffer(fh.read(8 * n), dtype="<f8")
    if data.size != n:
        raise ValueError(f"truncated Wiener dump: expected {n} increments, got {data.size}")
    return WienerPath(dt, data.astype(float), seed, index)


# -- Ornstein-Uhlenbeck --------------------------------------------------------

def sample_ou_path(spec: OrnsteinUhlenbeck, dt: float, n_steps: int, stream: RngStream) -> np.ndarray:
    """Values ``Z_0 .. Z_n`` of an OU path on a grid of spacing ``dt``.

    Uses the exact transition kernel
    ``Z_{k+1} = Z_k e^{-dt/tau_c} + std sqrt(1 - e^{-2 dt/tau_c}) N(0, 1)``.
    """
    if not isinstance(spec, OrnsteinUhlenbeck):
        raise ValidationError("sample_ou_path needs an Ornstein-Uhlenbeck noise spec")
    _check_dt(dt)
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    rng = stream.generator(_OU)
    xi = rng.standard_normal(n_steps + 1)
    z0 = spec.std * xi[0] if spec.z0 == "stationary" else float(spec.z0)
    decay = math.exp(-dt / spec.tau_c)
    kick = spec.std * math.sqrt(-math.expm1(-2 * dt / spec.tau_c))
    drive = kick * xi
    drive[0] = z0
    return lfilter([1.0], [1.0, -decay], drive)
