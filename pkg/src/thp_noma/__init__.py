"""
Tomlinson-Harashima precoding for clustered downlink NOMA: symbol-level
precoding, scheduling, rate evaluation, SCA beam/power design on a small
conic solver, a zero-forcing baseline and a Monte-Carlo harness.
"""

from .channel import SystemConfig, UserPopulation, complement_basis, generate_population, qr_lower
from .errors import (
    AmbiguousDecodeError,
    ConfigurationError,
    DecompositionError,
    DegenerateGainError,
    DegenerateInitializationError,
    DimensionError,
    InfeasibleError,
    PreconditionError,
    SolverError,
    ThpNomaError,
)
from .rates import RateReport, rate_report
from .sca import BeamPowerSolution, ScaConfig, ScaPoint, design_cluster, init_alpha, solve_joint, verify_original_feasibility
from .scheduling import ClusterAssignment, schedule, sus_select
from .thp import Constellation, make_qam, mods, thp_encode
from .zf import ZfSolution, zf_beams, zf_noma_rates

__version__ = "0.1.0"
