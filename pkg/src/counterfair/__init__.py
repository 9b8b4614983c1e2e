"""Counterpart matching across protected groups and fairness auditing.

The pipeline in reading order: ingest a typed table (`tabular`), score group
membership and build the caliper candidate sets (`propensity`), learn a
Mahalanobis dissimilarity and match 1-1 counterparts (`metric`, `matching`),
then evaluate prediction gaps on the matched pairs alongside the headline
population gaps (`fairness`).  `synth` holds the two-group simulation showing
why the counterpart view matters and `stats` the self-contained test
machinery everything reports through.
"""

from .errors import (
    AllUnmatchedError,
    ConfigError,
    CounterfairError,
    DataError,
    NumericalError,
)
from .fairness import (
    AuditResult,
    CdpResult,
    RateGapReport,
    audit_fairness,
    cdp_gap,
    dp_gap,
    group_rate_gaps,
)
from .matching import (
    CounterpartPairs,
    balance_report,
    delta_groups,
    exact_match,
    greedy_match,
    pairs_to_table_rows,
)
from .metric import (
    MetricConfig,
    MetricLearnResult,
    MetricMatrix,
    learn_metric,
    mahalanobis_sq,
    matching_probabilities,
    metric_from_json,
    metric_to_json,
)
from .models import TrainConfig, macro_f1, smote_oversample, train_classifier
from .propensity import (
    CandidateSet,
    PropensityScores,
    build_candidates,
    delta_threshold,
    propensity_scores,
)
from .stats import (
    FoldedNormal,
    TTestResult,
    folded_normal_stats,
    norm_cdf,
    paired_ttest,
    percentile,
    t_cdf,
    two_sample_ttest,
)
from .synth import SynthConfig, SynthSummary, run_synthetic_experiment
from .tabular import (
    FoldPlan,
    GroupSplit,
    ScalingParams,
    Table,
    load_compas,
    load_table,
    make_folds,
    preprocess,
    split_by_group,
)

__version__ = "0.1.0"

__all__ = [
    "AllUnmatchedError",
    "AuditResult",
    "CandidateSet",
    "CdpResult",
    "ConfigError",
    "CounterfairError",
    "CounterpartPairs",
    "DataError",
    "FoldPlan",
    "FoldedNormal",
    "GroupSplit",
    "MetricConfig",
    "MetricLearnResult",
    "MetricMatrix",
    "NumericalError",
    "PropensityScores",
    "RateGapReport",
    "ScalingParams",
    "SynthConfig",
    "SynthSummary",
    "TTestResult",
    "Table",
    "TrainConfig",
    "audit_fairness",
    "balance_report",
    "build_candidates",
    "cdp_gap",
    "delta_groups",
    "delta_threshold",
    "dp_gap",
    "exact_match",
    "folded_normal_stats",
    "greedy_match",
    "group_rate_gaps",
    "learn_metric",
    "load_compas",
    "load_table",
    "macro_f1",
    "mahalanobis_sq",
    "make_folds",
    "matching_probabilities",
    "metric_from_json",
    "metric_to_json",
    "norm_cdf",
    "paired_ttest",
    "pairs_to_table_rows",
    "percentile",
    "preprocess",
    "propensity_scores",
    "smote_oversample",
    "split_by_group",
    "t_cdf",
    "train_classifier",
    "two_sample_ttest",
]
