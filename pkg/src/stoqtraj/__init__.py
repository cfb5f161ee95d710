"""Stochastic-Hamiltonian quantum trajectories: Ito and Stratonovich SSE
engines, OU-driven random ODEs, master-equation oracles, reproducible
ensembles and gate-sequence emission."""

__version__ = "0.1.0"

from .circuit import GateSequence, emit_trajectory_circuit, read_gate_file, verify_against_magnus, write_gate_file
from .config import RunConfig, parse_config, serialize
from .ensemble import AbsRule, EnsembleResult, StderrRule, compare, run_ensemble
from .errors import (
    DimensionMismatch,
    GridMismatch,
    InvalidTimeStep,
    MetadataMissing,
    NonHermitianInput,
    NumericalBlowup,
    ParseError,
    PositivityWarning,
    StoqtrajError,
    ValidationError,
)
from .ito_sse import ItoModel, propagate_ito, run_ito_trajectory
from .master import LindbladModel, RedfieldModel, lindblad_evolve, redfield_evolve, white_noise_sle_evolve
from .noise import OrnsteinUhlenbeck, RngStream, WhiteNoise, sample_ou_path, sample_wiener_increments
from .rode import RodeModel, propagate_rode, run_rode_trajectory
from .strat_unitary import StratModel, propagate_strat, run_strat_trajectory, strat_to_ito_drift
