"""Viscoelastic parameter identification of landing impacts.

A spring-mass-damper impulse model, a log-lattice grid search with a
peak-weighted error, signal conditioning for drop-test force records and
the nonparametric tests used to compare conditions.
"""

from .errors import ImpactIdError, ValidationError
from .signal import ConditionKey, TimeSeries, TrialRecord, load_manifest, load_trial
from .smd import SmdParams, SolverConfig, analytic_response, simulate_response
from .ident import GridSpec, IdentConfig, IdentResult, aggregate, grid_params, identify
from .synth import SynthSpec, generate_dataset

__all__ = [
    "ImpactIdError", "ValidationError",
    "ConditionKey", "TimeSeries", "TrialRecord", "load_manifest", "load_trial",
    "SmdParams", "SolverConfig", "analytic_response", "simulate_response",
    "GridSpec", "IdentConfig", "IdentResult", "aggregate", "grid_params", "identify",
    "SynthSpec", "generate_dataset",
]
