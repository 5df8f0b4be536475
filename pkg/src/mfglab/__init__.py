"""Finite-difference mean field games on the flat torus.

Layers, bottom up: grids and fields, the model catalog, time-stepping
kernels, coupled solvers, experiment drivers and the ``mfglab`` command line.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CFLError,
    ConfigError,
    ConvergenceError,
    GridError,
    MassConservationError,
    MFGLabError,
    NumericalBlowupError,
    PositivityError,
    SingularSystemError,
)
from .expressions import Expr, constant, mode, parse_expr, zero  # noqa: E402
from .fitting import ExpFit, fit_exponential  # noqa: E402
from .grid import (  # noqa: E402
    Field,
    Grid,
    VectorField,
    build_grid,
    divergence,
    gradient_pair,
    inner,
    integrate,
    laplacian,
    norm,
)
from .kernels import (  # noqa: E402
    PathField,
    TimeGrid,
    adjointness_check,
    fit_decay,
    fp_forward_path,
    hjb_backward_path,
    linear_fp_forward,
    linear_parabolic_backward,
    numerical_hamiltonian,
)
from .models import (  # noqa: E402
    FAMILIES,
    CouplingSpec,
    HamiltonianSpec,
    TerminalSpec,
    convexity_bounds,
    eval_coupling,
    eval_hamiltonian,
    monotonicity_margin,
)
from .problem import MFGProblem  # noqa: E402
from .solvers import (  # noqa: E402
    ErgodicSolution,
    FiniteHorizonSolution,
    SolverConfig,
    default_truncation,
    distance_profile,
    estimate_decay_rate,
    solve_discounted_evolution,
    solve_discounted_stationary,
    solve_ergodic,
    solve_finite_horizon,
    solve_infinite_horizon,
    solve_theta,
    theta_identity,
)
from .lab import (  # noqa: E402
    LemmaReport,
    StudyReport,
    TurnpikeReport,
    commutation_check,
    duality_gap,
    grid_convergence_study,
    horizon_limit_study,
    lemma_decay_suite,
    multiplicity_probe,
    turnpike_report,
    turnpike_solve,
    vanishing_discount_study,
)
from .config import ExperimentPlan, parse_config, resolve_config  # noqa: E402
from .io import emit_series, load_series  # noqa: E402
from .runner import RunManifest, run_plan  # noqa: E402
