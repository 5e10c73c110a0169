"""quantpath: cost-sensitive linear SVM with an exact quantile solution path.

Train once, then recover the classifier for any asymmetric
misclassification cost in O(n) time: the dual solution is piecewise
linear in the quantile parameter tau = C_fp / (C_fp + C_fn), and the
tracer records every breakpoint of that path.
"""

from .dataset import Dataset, ParseError, augment_bias, fingerprint, parse_libsvm, serialize_libsvm
from .dualpath import (
    BudgetExhaustedError,
    CostSchedule,
    DegenerateCyclingError,
    DualState,
    Kink,
    KinkPath,
    PathError,
    TraceOptions,
    classify_indices,
    costs_at,
    delta_cost,
    eps_to_left,
    eps_to_margin,
    eps_to_right,
    gradient,
    segment_slope,
    trace_path,
    upper_bounds,
)
from .evaluate import (
    KKTReport,
    SweepMetrics,
    SyntheticSpec,
    asym_risk,
    conditional_risk,
    cost_to_tau,
    dual_objective,
    generate_synthetic,
    kkt_check,
    primal_objective,
    sweep,
)
from .qoperator import QOperator
from .recover import PrimalModel, alpha_at, decision_values, predict, primal_at
from .solver import (
    BoxQPError,
    BoxQPResult,
    LinSolveError,
    LinSolveResult,
    cg_solve,
    solve_box_qp,
)

__version__ = "0.1.0"
