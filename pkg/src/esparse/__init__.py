"""Evolutionary sparse identification of nonlinear oscillator dynamics.

The package alternates two stages: a genetic-programming search proposes a
library of candidate terms, and an elastic-net sparse regression selects the
few that explain the measured acceleration.  ``dynamics`` supplies a forced
Duffing-type oscillator as the test system and data generator.
"""

from .dynamics import (
    DuffingParams,
    SignalSet,
    TrackDesign,
    chirp_input,
    nominal_params,
    read_csv,
    simulate,
    simulate_chirp,
    true_terms,
    write_csv,
)
from .evolve import EsparseResult, GPConfig, esparse_run, gp_only_run
from .expr import ExpressionTree, PrimitiveSet, default_primitives, parse_expression
from .sparsereg import (
    RegressionConfig,
    SparseModel,
    build_library,
    elastic_net,
    percent_error,
    sweep_and_select,
)

__version__ = "0.1.0"

__all__ = [
    "DuffingParams",
    "SignalSet",
    "TrackDesign",
    "chirp_input",
    "nominal_params",
    "read_csv",
    "simulate",
    "simulate_chirp",
    "true_terms",
    "write_csv",
    "EsparseResult",
    "GPConfig",
    "esparse_run",
    "gp_only_run",
    "ExpressionTree",
    "PrimitiveSet",
    "default_primitives",
    "parse_expression",
    "RegressionConfig",
    "SparseModel",
    "build_library",
    "elastic_net",
    "percent_error",
    "sweep_and_select",
    "__version__",
]
