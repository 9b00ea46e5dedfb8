"""Distributionally robust multi-agent chute-mapping toolkit."""

from .induction import (
    GroupSet,
    MultinomialSpec,
    TruncatedNormalSpec,
    build_group_set,
    estimate_saa,
    mixture_distribution,
    multinomial_pmf,
    sample_induction,
    truncated_normal_probs,
)
from .warehouse import (
    EnvConfig,
    EpisodeMetrics,
    StepOutcome,
    WarehouseState,
    episode_metrics,
    observe,
    reset,
    step,
)

__all__ = [
    "GroupSet",
    "MultinomialSpec",
    "TruncatedNormalSpec",
    "build_group_set",
    "estimate_saa",
    "mixture_distribution",
    "multinomial_pmf",
    "sample_induction",
    "truncated_normal_probs",
    "EnvConfig",
    "EpisodeMetrics",
    "StepOutcome",
    "WarehouseState",
    "episode_metrics",
    "observe",
    "reset",
    "step",
]

__version__ = "0.1.0"
