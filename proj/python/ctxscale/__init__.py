"""Context-aware downstream scaling laws.

Thin Python face of the C++ core: evaluate the law, load the embedded
observation tables, fit, and run the holdout and ablation studies.
"""

from ._ctxscale import (
    AggregatedPoint,
    DomainError,
    EvalRecord,
    FitConfig,
    FitResult,
    IntegrityError,
    IoError,
    ParseError,
    PenaltyConfig,
    ScalingParams,
    UnderdeterminedFitError,
    ValidationError,
    aggregate,
    builtin_dataset,
    context_generalization_study,
    contour_grid,
    eval_scaling_law,
    extension_tokens,
    fit,
    format_points,
    holdout_split,
    mean_abs_error,
    parse_points,
    parse_records,
    penalty_ablation,
    penalty_factor,
    published_params,
    reconstruct_prompt_length,
    run_cli,
    saturating_term,
    synthetic_generate,
    training_compute,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
