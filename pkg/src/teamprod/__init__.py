"""Team production toolkit.

Estimates individual skill from solo runs via multi-way fixed effects,
residualizes team outcomes, recovers latent team-task efficiency by kernel
conditional-CDF inversion under constant returns to scale, and computes
production elasticities from a quadratic surface. A seeded synthetic
generator with full planted truth backs the validation suite.
"""

from .affinity import (
    EfficiencyEstimate,
    KernelConfig,
    TeamTaskObservation,
    conditional_rank,
    recover_efficiency,
    reference_quantile,
    normalize_efficiency,
    summarize_efficiency,
)
from .elasticity import ElasticityPoint, PolyFit, elasticity_at, fit_production_polynomial
from .fe import (
    FixedEffectFit,
    FixedEffectSpec,
    SkillProfile,
    athlete_skill,
    estimate_fixed_effects,
    residualize_team,
)
from .ingest import link_athletes, parse_results, truncate_attempts
from .pipeline import run_pipeline
from .records import RunRecord
from .synth import DGPConfig, Law, generate, oracle_conditional_rank
from .transform import ShiftedSeries, positive_shift, tercile_bins

__version__ = "0.1.0"

__all__ = [
    "DGPConfig",
    "EfficiencyEstimate",
    "ElasticityPoint",
    "FixedEffectFit",
    "FixedEffectSpec",
    "KernelConfig",
    "Law",
    "PolyFit",
    "RunRecord",
    "ShiftedSeries",
    "SkillProfile",
    "TeamTaskObservation",
    "athlete_skill",
    "conditional_rank",
    "elasticity_at",
    "estimate_fixed_effects",
    "fit_production_polynomial",
    "generate",
    "link_athletes",
    "normalize_efficiency",
    "oracle_conditional_rank",
    "parse_results",
    "positive_shift",
    "recover_efficiency",
    "reference_quantile",
    "residualize_team",
    "run_pipeline",
    "summarize_efficiency",
    "tercile_bins",
    "truncate_attempts",
]
