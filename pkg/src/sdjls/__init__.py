"""Continuous-time state-dependent jump linear systems.

Linear modes switched by a jump process whose transition rates depend on the
region of state space the trajectory currently occupies. The package models
such systems, simulates exact sample paths event by event, certifies
stochastic stability through coupled Lyapunov LMIs, and synthesizes
stabilizing mode-dependent state feedback.
"""

__version__ = "0.1.0"

from .analysis import (
    StabilityCertificate,
    build_analysis_lmis,
    certify_stability,
    check_certificate,
    default_margin,
)
from .errors import (
    ModelValidationError,
    NoInputError,
    OverflowDivergence,
    SdjlsError,
    SingularXError,
    Violation,
)
from .model import (
    ModeDynamics,
    RegionPartition,
    SdjlsModel,
    load_model,
    make_model,
    model_from_dict,
    model_to_dict,
    region_of,
    save_model,
    validate_model,
)
from .sdpcore import SdpProblem, check_assignment, solve_feasibility
from .simulate import (
    Trajectory,
    estimate_energy,
    estimate_lyapunov_decay,
    first_exit_time,
    simulate_path,
    simulate_path_thinning,
    write_events_csv,
    write_trajectory_csv,
)
from .synthesis import (
    ControllerGains,
    build_synthesis_lmis,
    gains_from,
    synthesize,
)

__all__ = [
    "__version__",
    "SdjlsModel",
    "ModeDynamics",
    "RegionPartition",
    "validate_model",
    "region_of",
    "make_model",
    "load_model",
    "save_model",
    "model_from_dict",
    "model_to_dict",
    "SdpProblem",
    "solve_feasibility",
    "check_assignment",
    "StabilityCertificate",
    "build_analysis_lmis",
    "certify_stability",
    "check_certificate",
    "default_margin",
    "ControllerGains",
    "build_synthesis_lmis",
    "synthesize",
    "gains_from",
    "Trajectory",
    "simulate_path",
    "simulate_path_thinning",
    "first_exit_time",
    "estimate_energy",
    "estimate_lyapunov_decay",
    "write_trajectory_csv",
    "write_events_csv",
    "SdjlsError",
    "ModelValidationError",
    "Violation",
    "NoInputError",
    "SingularXError",
    "OverflowDivergence",
]
