"""Randomised single-qubit gate sequences for ``H = eps sz + omega sx`` with
white noise on ``sx``.

Each time step is the Trotterised block ``RZ(2 eps dt) RX(2 omega dt)
RX(2 sigma dW_k)`` (applied in that order), with the rotation convention
``RA(phi) = exp(-i phi/2 sigma_A)``. The two RX gates commute, so their order
inside a block is immaterial.
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import NamedTuple, TextIO

import numpy as np

from .errors import InvalidTimeStep, MetadataMissing, ParseError
from .linops import IDENTITY2, SIGMA_X, SIGMA_Z, _expm_hermitian
from .noise import RngStream, sample_wiener_increments

FORMAT_TAG = "# stoqtraj v1"
_PAULI = {"RX": SIGMA_X, "RZ": SIGMA_Z}
_REQUIRED_META = ("dt", "n_steps", "eps", "omega", "sigma")


class Gate(NamedTuple):
    kind: str
    qubit: int
    angle: float


@dataclass(frozen=True)
class GateSequence:
    n_qubits: int
    gates: tuple[Gate, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for g in self.gates:
            if g.kind not in _PAULI:
                raise ValueError(f"unsupported gate {g.kind!r}")
            if not 0 <= g.qubit < self.n_qubits:
                raise ValueError(f"gate qubit {g.qubit} out of range")
            if not math.isfinite(g.angle):
                raise ValueError("gate angles must be finite")


def rotation(kind: str, angle) -> np.ndarray:
    """``exp(-i angle/2 sigma_kind)``; ``angle`` may be an array."""
    a = np.asarray(angle, dtype=float)[..., None, None]
    return np.cos(a / 2) * IDENTITY2 - 1j * np.sin(a / 2) * _PAULI[kind]


def rotation_angle(kind: str, U) -> float:
    """Inverse of :func:`rotation` on ``(-2 pi, 2 pi]``."""
    U = np.asarray(U, dtype=complex)
    c = 0.5 * np.real(np.trace(U))
    s = 0.5 * np.real(1j * np.trace(_PAULI[kind] @ U))
    phi = 2 * math.atan2(s, c)
    return 2 * math.pi if phi == -2 * math.pi else phi


def emit_trajectory_circuit(eps: float, omega: float, sigma: float, dt: float,
                            n_steps: int, stream: RngStream) -> GateSequence:
    """Gate sequence for one noise realisation, ``3 * n_steps`` gates."""
    if not (math.isfinite(dt) and dt > 0):
        raise InvalidTimeStep(f"time step must be positive and finite, got {dt!r}")
    dw = sample_wiener_increments(dt, n_steps, stream).increments
    gates = []
    for w in dw:
        gates += [Gate("RZ", 0, 2 * eps * dt), Gate("RX", 0, 2 * omega * dt),
                  Gate("RX", 0, float(2 * sigma * w))]
    meta = dict(seed=stream.master_seed, trajectory_index=stream.trajectory_index,
                dt=dt, n_steps=n_steps, eps=eps, omega=omega, sigma=sigma)
    return GateSequence(1, tuple(gates), meta)


def gate_sequence_unitary(seq: GateSequence) -> np.ndarray:
    """Ordered product of the gate matrices (first gate acts first)."""
    U = IDENTITY2.copy()
    for g in seq.gates:
        U = rotation(g.kind, g.angle) @ U
    return U


@dataclass(frozen=True)
class MagnusCheck:
    max_step_defect: float
    endpoint_defect: float
    #: ``max_step_defect / dt**2``
    defect_constant: float
    step_defects: np.ndarray = field(repr=False, compare=False)


def _magnus_steps(seq: GateSequence):
    missing = [k for k in _REQUIRED_META if k not in seq.metadata]
    if missing:
        raise MetadataMissing(f"gate sequence metadata lacks {', '.join(missing)}")
    m = seq.metadata
    dt, n, eps, omega = float(m["dt"]), int(m["n_steps"]), float(m["eps"]), float(m["omega"])
    if len(seq.gates) != 3 * n:
        raise ValueError(f"expected {3 * n} gates for {n} steps, found {len(seq.gates)}")
    noise_half_angles = np.array([g.angle for g in seq.gates[2::3]]) / 2
    gens = (eps * dt * SIGMA_Z + omega * dt * SIGMA_X
            + noise_half_angles[:, None, None] * SIGMA_X)
    return dt, _expm_hermitian(gens)


def verify_against_magnus(seq: GateSequence) -> MagnusCheck:
    """Operator-norm distance between each Trotter block and its Magnus step."""
    dt, magnus = _magnus_steps(seq)
    blocks = []
    for k in range(len(magnus)):
        g = seq.gates[3 * k: 3 * k + 3]
        blocks.append(rotation(g[2].kind, g[2].angle) @ rotation(g[1].kind, g[1].angle)
                      @ rotation(g[0].kind, g[0].angle))
    blocks = np.array(blocks).reshape(-1, 2, 2)
    step = np.linalg.norm(blocks - magnus, ord=2, axis=(-2, -1)) if len(blocks) else np.zeros(0)
    trotter_total = gate_sequence_unitary(seq)
    magnus_total = IDENTITY2.copy()
    for U in magnus:
        magnus_total = U @ magnus_total
    worst = float(step.max()) if step.size else 0.0
    return MagnusCheck(worst, float(np.linalg.norm(trotter_total - magnus_total, 2)),
                       worst / dt**2, step)


@dataclass(frozen=True, eq=False)
class CircuitEngine:
    """Ensemble engine executing emitted circuits as a state-vector simulator.

    The state after block ``k`` is reported at time ``k * dt``, i.e. the
    circuit truncated after ``k`` Magnus-Trotter blocks.
    """

    eps: float
    omega: float
    sigma: float
    kind = "ket"
    dim = 2

    def run_batch(self, initial, dt, n_steps, streams):
        seqs = [emit_trajectory_circuit(self.eps, self.omega, self.sigma, dt, n_steps, s)
                for s in streams]
        angles = np.array([[g.angle for g in s.gates] for s in seqs]).reshape(len(seqs), n_steps, 3)
        psi = np.broadcast_to(np.asarray(initial, dtype=complex), (len(seqs), 2)).copy()
        out = np.empty((len(seqs), n_steps + 1, 2), dtype=complex)
        out[:, 0] = psi
        kinds = [g.kind for g in seqs[0].gates[:3]] if seqs else []
        for k in range(n_steps):
            for j, kind in enumerate(kinds):
                psi = np.einsum("bij,bj->bi", rotation(kind, angles[:, k, j]), psi)
            out[:, k + 1] = psi
        return out, np.zeros(len(seqs), dtype=bool)


# -- text format ----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_gate_file(seq: GateSequence, fh: TextIO, extra_meta: dict | None = None) -> None:
    meta = dict(seq.metadata)
    meta.update(extra_meta or {})
    fh.write(FORMAT_TAG + "\n")
    fh.write("# meta " + " ".join(f"{k}={_fmt(v)}" for k, v in meta.items()) + "\n")
    for g in seq.gates:
        fh.write(f"{g.kind} {g.qubit} {format(g.angle, '.17g')}\n")


def _meta_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_gate_file(lines: Iterable[str]) -> GateSequence:
    meta: dict = {}
    gates = []
    seen_tag = False
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line == FORMAT_TAG:
                seen_tag = True
            elif line.startswith("# meta"):
                for item in line[len("# meta"):].split():
                    key, sep, value = item.partition("=")
                    if not sep:
                        raise ParseError(f"malformed meta item {item!r}", lineno)
                    meta[key] = _meta_value(value)
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] not in _PAULI:
            raise ParseError(f"expected '<RZ|RX> <qubit> <angle>', got {line!r}", lineno)
        try:
            gates.append(Gate(parts[0], int(parts[1]), float(parts[2])))
        except ValueError:
            raise ParseError(f"bad qubit index or angle in {line!r}", lineno) from None
    if not seen_tag:
        raise ParseError(f"missing '{FORMAT_TAG}' header")
    n_qubits = max((g.qubit for g in gates), default=0) + 1
    return GateSequence(n_qubits, tuple(gates), meta)
