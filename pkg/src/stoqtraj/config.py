"""Run configuration: a JSON document with complex numbers as ``[re, im]``.

Example (white-noise dephasing, compared with the Lindblad oracle)::

    {
      "mode": "compare",
      "system": {"dim": 2,
                 "H": [[[1, 0], [0, 0]], [[0, 0], [-1, 0]]],
                 "R": [[[1, 0], [0, 0]], [[0, 0], [-1, 0]]],
                 "psi0": [[0.7071067811865476, 0], [0.7071067811865476, 0]]},
      "noise": {"type": "white", "sigma": 0.7071067811865476},
      "integrator": {"engine": "strat", "dt": 0.001, "n_steps": 2000},
      "ensemble": {"N": 10000, "seed": 1},
      "oracle": "lindblad"
    }
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import InvalidTimeStep, ParseError, ValidationError
from .linops import (
    SIGMA_X,
    is_hermitian,
    matrix_from_literal,
    matrix_to_literal,
    vector_from_literal,
    vector_to_literal,
)
from .noise import NoiseSpec, OrnsteinUhlenbeck, WhiteNoise

MODES = ("trajectory", "ensemble", "master", "compare", "emit-circuit", "convergence")
ENGINES = ("ito-em", "ito-milstein", "strat", "rode-midpoint", "rode-heun", "sle")
ORACLES = ("lindblad", "redfield", "white-sle", "none")

# engine -> admissible noise types
_NOISE_FOR_ENGINE = {
    "ito-em": ("white",), "ito-milstein": ("white",), "strat": ("white",),
    "rode-midpoint": ("ou",), "rode-heun": ("ou",), "sle": ("white", "ou"),
}
_ENGINE_NOISE_HINT = {
    "ito-em": "ito engine is white-noise only; use rode",
    "ito-milstein": "ito engine is white-noise only; use rode",
    "strat": "strat engine is white-noise only; use rode",
    "rode-midpoint": "rode engine is OU-only; use strat or ito for white noise",
    "rode-heun": "rode engine is OU-only; use strat or ito for white noise",
}


@dataclass(eq=False)
class SystemConfig:
    dim: int
    H: np.ndarray
    R: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    B_is_iR: bool = False
    psi0: Optional[np.ndarray] = None
    rho0: Optional[np.ndarray] = None
    channels: list = field(default_factory=list)  # [(L, rate)]

    @property
    def noise_operator_B(self) -> np.ndarray:
        """Ito noise operator: ``iR`` when ``B_is_iR`` else ``B``."""
        return 1j * self.R if self.B_is_iR else self.B

    @property
    def initial_ket(self) -> np.ndarray:
        if self.psi0 is not None:
            return self.psi0
        e0 = np.zeros(self.dim, dtype=complex)
        e0[0] = 1
        return e0

    @property
    def initial_rho(self) -> np.ndarray:
        if self.rho0 is not None:
            return self.rho0
        psi = self.initial_ket
        return np.outer(psi, psi.conj())


@dataclass(eq=False)
class RunConfig:
    mode: str
    system: SystemConfig
    noise: NoiseSpec
    engine: str
    dt: float
    n_steps: int
    N: int = 1
    seed: int = 0
    oracle: str = "none"
    observables: dict = field(default_factory=dict)
    dump_wiener: bool = False
    tolerance: dict = field(default_factory=lambda: {"rule": "stderr", "k": 3.0, "floor": 1e-2})
    convergence: dict = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        s = self.system
        system: dict[str, Any] = {"dim": s.dim, "H": matrix_to_literal(s.H)}
        if s.R is not None:
            system["R"] = matrix_to_literal(s.R)
        if s.B is not None:
            system["B"] = matrix_to_literal(s.B)
        system["B_is_iR"] = s.B_is_iR
        if s.psi0 is not None:
            system["psi0"] = vector_to_literal(s.psi0)
        if s.rho0 is not None:
            system["rho0"] = matrix_to_literal(s.rho0)
        system["channels"] = [{"L": matrix_to_literal(L), "rate": rate} for L, rate in s.channels]
        if isinstance(self.noise, WhiteNoise):
            noise = {"type": "white", "sigma": self.noise.sigma}
        else:
            noise = {"type": "ou", "std": self.noise.std, "tau_c": self.noise.tau_c,
                     "z0": self.noise.z0}
        return {
            "mode": self.mode,
            "system": system,
            "noise": noise,
            "integrator": {"engine": self.engine, "dt": self.dt, "n_steps": self.n_steps},
            "ensemble": {"N": self.N, "seed": self.seed},
            "oracle": self.oracle,
            "outputs": {
                "observables": {k: matrix_to_literal(v) for k, v in self.observables.items()},
                "dump_wiener": self.dump_wiener,
            },
            "tolerance": dict(self.tolerance),
            "convergence": dict(self.convergence),
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def sha256(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def serialize(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2) + "\n"


# -- parsing -------------------------------------------------------------------------

def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ValidationError(f"{where}: missing required field '{key}'")
    return d[key]


def _number(value, name: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(f"{name} must be a finite number, got {value!r}")
    if positive and value <= 0:
        raise ValidationError(f"{name} must be positive, got {value!r}")
    return float(value)


def _integer(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def _matrix(lit, name: str, dim: int) -> np.ndarray:
    try:
        m = matrix_from_literal(lit, name)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    if m.shape != (dim, dim):
        raise ValidationError(f"{name} must be {dim}x{dim}, got {m.shape[0]}x{m.shape[1]}")
    return m


def _parse_noise(d) -> NoiseSpec:
    if not isinstance(d, dict):
        raise ValidationError("noise must be an object")
    kind = _require(d, "type", "noise")
    if kind == "white":
        return WhiteNoise(_number(_require(d, "sigma", "noise"), "noise.sigma", positive=True))
    if kind == "ou":
        z0 = d.get("z0", "stationary")
        if not isinstance(z0, str):
            z0 = _number(z0, "noise.z0")
        return OrnsteinUhlenbeck(_number(_require(d, "std", "noise"), "noise.std", positive=True),
                                 _number(_require(d, "tau_c", "noise"), "noise.tau_c", positive=True),
                                 z0)
    raise ValidationError(f"noise type {kind!r} is not supported; only Gaussian 'white' and 'ou' "
                          "drives close the mean dynamics")


def _parse_system(d, engine: str) -> SystemConfig:
    if not isinstance(d, dict):
        raise ValidationError("system must be an object")
    dim = _integer(_require(d, "dim", "system"), "system.dim", minimum=1)
    H = _matrix(_require(d, "H", "system"), "H", dim)
    if not is_hermitian(H):
        raise ValidationError("H must be Hermitian")
    R = _matrix(d["R"], "R", dim) if "R" in d else None
    B = _matrix(d["B"], "B", dim) if "B" in d else None
    B_is_iR = d.get("B_is_iR", False)
    if not isinstance(B_is_iR, bool):
        raise ValidationError("B_is_iR must be true or false")
    psi0 = rho0 = None
    if "psi0" in d:
        try:
            psi0 = vector_from_literal(d["psi0"], "psi0")
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        if psi0.shape != (dim,):
            raise ValidationError(f"psi0 must have {dim} entries")
        if abs(np.linalg.norm(psi0) - 1) > 1e-10:
            raise ValidationError("psi0 must be normalised")
    if "rho0" in d:
        rho0 = _matrix(d["rho0"], "rho0", dim)
        if not is_hermitian(rho0, 1e-10) or abs(np.trace(rho0) - 1) > 1e-9:
            raise ValidationError("rho0 must be Hermitian with unit trace")
        if np.linalg.eigvalsh(rho0)[0] < -1e-9:
            raise ValidationError("rho0 must be positive semidefinite")
    channels = []
    for i, ch in enumerate(d.get("channels", [])):
        if not isinstance(ch, dict):
            raise ValidationError(f"channel {i} must be an object with 'L' and 'rate'")
        L = _matrix(_require(ch, "L", f"channel {i}"), f"channel {i} L", dim)
        rate = _number(_require(ch, "rate", f"channel {i}"), f"channel {i} rate")
        if rate < 0:
            raise ValidationError(f"channel {i} rate must be non-negative")
        channels.append((L, rate))

    if engine in ("strat", "rode-midpoint", "rode-heun", "sle"):
        if R is None:
            raise ValidationError(f"{engine.split('-')[0]} engine requires R")
        if not is_hermitian(R):
            raise ValidationError(f"{engine.split('-')[0]} engine requires Hermitian R")
    if engine.startswith("ito"):
        if B_is_iR:
            if R is None or not is_hermitian(R):
                raise ValidationError("B_is_iR requires a Hermitian R")
        elif B is None:
            raise ValidationError("ito engine requires B (or R with B_is_iR)")
    if rho0 is not None and engine != "sle":
        raise ValidationError(f"{engine} engine propagates kets; rho0 is only accepted by sle")
    if channels and engine != "sle":
        raise ValidationError("extra dissipator channels are only supported by the sle engine")
    return SystemConfig(dim, H, R, B, B_is_iR, psi0, rho0, channels)


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    mode = _require(doc, "mode", "config")
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    integ = _require(doc, "integrator", "config")
    engine = _require(integ, "engine", "integrator")
    if engine not in ENGINES:
        raise ValidationError(f"engine must be one of {ENGINES}, got {engine!r}")
    dt = integ.get("dt")
    if isinstance(dt, bool) or not isinstance(dt, (int, float)) or not math.isfinite(dt) or dt <= 0:
        raise InvalidTimeStep(f"integrator.dt must be a positive number, got {dt!r}")
    n_steps = _integer(_require(integ, "n_steps", "integrator"), "integrator.n_steps", minimum=1)

    noise = _parse_noise(_require(doc, "noise", "config"))
    kind = "white" if isinstance(noise, WhiteNoise) else "ou"
    if kind not in _NOISE_FOR_ENGINE[engine]:
        raise ValidationError(_ENGINE_NOISE_HINT[engine])
    system = _parse_system(_require(doc, "system", "config"), engine)

    ens = doc.get("ensemble", {})
    N = _integer(ens.get("N", 1), "ensemble.N", minimum=1)
    seed = _integer(ens.get("seed", 0), "ensemble.seed")
    if seed >= 2**64:
        raise ValidationError("ensemble.seed must fit in 64 bits")

    oracle = doc.get("oracle", "none")
    if oracle not in ORACLES:
        raise ValidationError(f"oracle must be one of {ORACLES}, got {oracle!r}")
    if mode in ("master", "compare") and oracle == "none":
        raise ValidationError(f"{mode} mode requires an oracle")
    if oracle == "lindblad" and kind != "white":
        raise ValidationError("lindblad oracle requires white noise; use redfield for OU")
    if oracle == "white-sle" and kind != "white":
        raise ValidationError("white-sle oracle requires white noise")
    if oracle in ("redfield", "white-sle") and (system.R is None or not is_hermitian(system.R)):
        raise ValidationError(f"{oracle} oracle requires a Hermitian R")
    if oracle in ("white-sle", "redfield") and system.channels:
        raise ValidationError(f"{oracle} oracle does not support extra channels; use lindblad")
    if oracle in ("white-sle", "redfield") and engine.startswith("ito") and not system.B_is_iR:
        raise ValidationError(f"{oracle} oracle needs B = iR; set B_is_iR")

    outputs = doc.get("outputs", {})
    observables = {}
    for name, lit in outputs.get("observables", {}).items():
        op = _matrix(lit, f"observable {name}", system.dim)
        if not is_hermitian(op):
            raise ValidationError(f"observable {name} must be Hermitian")
        observables[name] = op
    dump_wiener = outputs.get("dump_wiener", False)

    tolerance = dict(doc.get("tolerance", {"rule": "stderr", "k": 3.0, "floor": 1e-2}))
    rule = tolerance.get("rule")
    if rule == "stderr":
        tolerance["k"] = _number(tolerance.get("k", 3.0), "tolerance.k", positive=True)
        tolerance["floor"] = _number(tolerance.get("floor", 0.0), "tolerance.floor")
    elif rule == "abs":
        tolerance["eps"] = _number(_require(tolerance, "eps", "tolerance"), "tolerance.eps", positive=True)
    else:
        raise ValidationError("tolerance.rule must be 'stderr' or 'abs'")

    convergence = dict(doc.get("convergence", {}))
    if mode == "emit-circuit":
        _check_circuit_system(system, noise)
    if mode == "convergence":
        if not (engine.startswith("ito") or engine == "rode-midpoint"):
            raise ValidationError("convergence mode supports ito-* and rode-midpoint engines")
        if "dts" in convergence:
            convergence["dts"] = [_number(x, "convergence.dts", positive=True) for x in convergence["dts"]]
        for key in ("n_paths", "refine"):
            if key in convergence:
                convergence[key] = _integer(convergence[key], f"convergence.{key}", minimum=1)
    return RunConfig(mode, system, noise, engine, float(dt), n_steps, N, seed, oracle,
                     observables, bool(dump_wiener), tolerance, convergence)


def circuit_parameters(system: SystemConfig) -> tuple[float, float]:
    """``(eps, omega)`` from ``H = eps sz + omega sx``."""
    H = system.H
    return float(H[0, 0].real), float(H[0, 1].real)


def _check_circuit_system(system: SystemConfig, noise: NoiseSpec) -> None:
    if system.dim != 2:
        raise ValidationError("emit-circuit needs a qubit (dim 2)")
    eps, omega = circuit_parameters(system)
    expected = np.array([[eps, omega], [omega, -eps]], dtype=complex)
    if np.max(np.abs(system.H - expected)) > 1e-12:
        raise ValidationError("emit-circuit needs H = eps*sigma_z + omega*sigma_x")
    if system.R is None or np.max(np.abs(system.R - SIGMA_X)) > 1e-12:
        raise ValidationError("emit-circuit needs R = sigma_x")
    if not isinstance(noise, WhiteNoise):
        raise ValidationError("emit-circuit needs white noise")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Raises
    ------
    ParseError
        Malformed JSON; the message carries the line number.
    ValidationError, InvalidTimeStep
        Well-formed but inconsistent configuration.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    return config_from_dict(doc)
