"""Split-step simulation of interacting-particle / McKean-Vlasov SDEs."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, DivergenceError, FitError, MVSDEError,
                     SolverError)
from .models import (BUILTIN_NAMES, ModelConstants, ModelSpec, compute_zeta,
                     get_model, linear_shift, make_builtin, max_stepsize,
                     register_model, spot_check)
from .interaction import drift_V, drift_v, pairwise_convolution
from .newton import NewtonConfig, NewtonReport, assemble_jacobian, solve_implicit
from .noise import CoarseNoise, NoisePlan
from .schemes import (ParticleState, SchemeParams, SimResult, euler_step,
                      simulate, ssm_step, taming_step)
from .harness import (ErrorRow, ErrorTable, export_density, export_phase_means,
                      fit_rate, path_strong_error, poc_error, strong_error)

__all__ = [
    "BUILTIN_NAMES", "CoarseNoise", "ConfigurationError", "DivergenceError",
    "ErrorRow", "ErrorTable", "FitError", "MVSDEError", "ModelConstants",
    "ModelSpec", "NewtonConfig", "NewtonReport", "NoisePlan", "ParticleState",
    "SchemeParams", "SimResult", "SolverError", "assemble_jacobian",
    "compute_zeta", "drift_V", "drift_v", "euler_step", "export_density",
    "export_phase_means", "fit_rate", "get_model", "linear_shift",
    "make_builtin", "max_stepsize", "pairwise_convolution", "path_strong_error",
    "poc_error", "register_model", "simulate", "solve_implicit", "spot_check",
    "ssm_step", "strong_error", "taming_step",
]
