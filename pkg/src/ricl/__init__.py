"""Prefix reweighting for softmax-regression in-context learning."""

from .errors import (
    DivergenceDetected,
    EmptySeries,
    NegativeWeight,
    PreconditionViolation,
    RiclError,
    SchemaError,
    ShapeMismatch,
    SingularSystem,
)
from .linalg import RngStream, gauss_matrix, kron, least_squares, operator_norm, vec
from .softmax import BoundReport, SrInstance, softmax_predict, sr_gradient, sr_loss, theoretical_bounds
from .inner import (
    Example,
    InnerConfig,
    SolveResult,
    icl_predict,
    solve_weighted_linear,
    solve_weighted_softmax,
)
from .reweight import (
    Prefix,
    RegConfig,
    ReweightParams,
    apply_reweight,
    assemble_prefix,
    decompose_prefix,
    lift_scalar_weights,
    reg_term,
    transformer_loss,
)
from .ricl import (
    ConvergenceStats,
    FiniteDifference,
    OneStepLookahead,
    RiclConfig,
    RiclResult,
    TrainTrace,
    Unrolled,
    convergence_stats,
    lr_rule,
    meta_gradient,
    ricl_train,
    validation_loss,
)
from .laricl import LariclConfig, LariclResult, laricl_grad, laricl_train, laricl_val_loss
from .datagen import (
    PRESETS,
    PrefixKind,
    TaskSpec,
    gen_eval_set,
    gen_examples,
    gen_task,
    get_preset,
    load_dataset,
    robustness_grid,
    save_dataset,
)
from .bench import (
    BenchRow,
    BenchSpec,
    load_rows,
    minmax_scale,
    mse,
    robustness_sweep,
    run_benchmark,
    summarize,
    write_csv,
)
from .plotting import PlotSpec, emit_plot
from .checks import CheckResult, check_names, run_all, run_check

__version__ = "0.1.0"
