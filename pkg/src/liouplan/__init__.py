"""Planning for Liouvillian control systems.

A flat subsystem is planned from its flat output; the remaining states are
recovered by quadratures and checked against direct integration of the
original dynamics.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .expr import (  # noqa: E402
    Binary, Constant, Expr, Unary, Variable, evaluate, parse_expression,
    partial_derivative, simplify, to_string,
)
from .cartan import CartanField, JetSpec, embed_integral_as_pv, first_integral_residual, total_derivative  # noqa: E402
from .structure import (  # noqa: E402
    Classification, ExtensionChain, ExtensionStep, Partition, PVForm, StepKind, SystemModel,
    check_chain_structure, classify_matrix, extract_pv_form,
)
from .table import TrajectoryTable  # noqa: E402
from .trajectory import FlatnessMap, PolyTrajectory, eval_jet, fit_polynomial_boundary, synthesize_base  # noqa: E402
from .quadrature import (  # noqa: E402
    PlanMode, ReconstructionPlan, cumulative_integral, exponential_extension, integral_extension,
    reconstruct_chain, reconstruct_pv,
)
from .verify import ErrorReport, compare, integrate_ode, transform_consistency_plateball  # noqa: E402
from .scenarios import (  # noqa: E402
    ScenarioConfig, builtin_academic, builtin_plateball, builtin_plateball_rational,
    builtin_rolling, liouvillian_outputs_plateball, run_scenario,
)
