"""Adaptive step selection and policy optimization for a toy masked denoiser."""

from ._atpo import (
    AtpoError,
    EvalResult,
    TrainConfig,
    Trainer,
    commit_schedule,
    confidence_margin,
    curve_stats,
    generate_tasks,
    group_advantages,
    inverse_margin,
    kl_divergence,
    roec_curve,
    select_cm_only,
    select_hybrid,
    select_roec_only,
    select_uniform,
    shannon_entropy,
    token_objective,
)

__all__ = [
    "AtpoError",
    "EvalResult",
    "TrainConfig",
    "Trainer",
    "commit_schedule",
    "confidence_margin",
    "curve_stats",
    "generate_tasks",
    "group_advantages",
    "inverse_margin",
    "kl_divergence",
    "roec_curve",
    "select_cm_only",
    "select_hybrid",
    "select_roec_only",
    "select_uniform",
    "shannon_entropy",
    "token_objective",
]

__version__ = "0.1.0"
