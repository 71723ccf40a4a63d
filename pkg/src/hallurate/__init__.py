"""Estimate true hallucination rates from imperfect token-level detectors.

The pipeline: parse inline span markup into annotated documents, project
spans to token labels, score detectors and annotator agreement, then correct
raw detection counts by measured precision/recall,

    HR_est = 100 * P * H_det / (R * N),

and analyze the resulting rates (correlations, t-tests, random-intercept
mixed models). A synthetic-corpus generator with exact ground truth
validates the whole chain end to end.
"""

from .errors import DataError, HallurateError
from .markup import (
    AnnotatedText,
    HallucinationType,
    InvalidSpansError,
    MarkupError,
    NestedTagError,
    Span,
    TYPE_ORDER,
    UnbalancedTagError,
    UnknownTagError,
    ZeroLengthSpanWarning,
    check_spans,
    parse_markup,
    render_markup,
)
from .labeling import (
    BINARY,
    BINARY_POSITIVE,
    CATEGORY,
    OUTSIDE,
    PER_CODEPOINT,
    TOKENIZER_MODES,
    WHITESPACE,
    OffsetMismatchError,
    Token,
    TokenLabels,
    labels_to_spans,
    project_labels,
    tokenize,
)
from .metrics import (
    AdjudicationResult,
    AgreementResult,
    ConfusionCounts,
    LIKERT_LEVELS,
    ScoreReport,
    adjudicate,
    cohen_kappa,
    concatenate_labels,
    likert_distribution,
    pairwise_iaa,
    score_corpus,
    score_tokens,
    span_stats,
)
from .estimator import (
    DetectionRun,
    DetectorPerformance,
    RateEstimate,
    RateResult,
    RunEstimate,
    ZeroCorpusError,
    ZeroRecallError,
    aggregate_runs,
    count_detections,
    estimate_rate,
    estimate_run,
)
from .stats import (
    AnalysisFrame,
    ModelFit,
    TestResult,
    build_design,
    dist_cdf,
    fit_lmm,
    fit_ols,
    lr_test,
    pearson,
    ttest_two_sample,
    two_way_interactions,
)
from .synth import (
    BaselineConfig,
    InjectionPlan,
    NoiseSpec,
    RecoveryResult,
    baseline_detect,
    inject,
    make_label_corpus,
    recovery_experiment,
    simulate_detector,
)
from .corpus import (
    AnnotatedRecord,
    ArticleRecord,
    FilterReport,
    LabelsRecord,
    QueryRecord,
    ResponseRecord,
    filter_articles,
    load_jsonl,
    store_jsonl,
    verify_references,
)

__version__ = "0.1.0"

__all__ = [
    "AdjudicationResult",
    "AgreementResult",
    "AnalysisFrame",
    "AnnotatedRecord",
    "AnnotatedText",
    "ArticleRecord",
    "BINARY",
    "BINARY_POSITIVE",
    "BaselineConfig",
    "CATEGORY",
    "ConfusionCounts",
    "DataError",
    "DetectionRun",
    "DetectorPerformance",
    "FilterReport",
    "HallucinationType",
    "HallurateError",
    "InjectionPlan",
    "InvalidSpansError",
    "LIKERT_LEVELS",
    "LabelsRecord",
    "MarkupError",
    "ModelFit",
    "NestedTagError",
    "NoiseSpec",
    "OffsetMismatchError",
    "OUTSIDE",
    "PER_CODEPOINT",
    "QueryRecord",
    "RateEstimate",
    "RateResult",
    "RecoveryResult",
    "ResponseRecord",
    "RunEstimate",
    "ScoreReport",
    "Span",
    "TestResult",
    "TOKENIZER_MODES",
    "Token",
    "TokenLabels",
    "TYPE_ORDER",
    "UnbalancedTagError",
    "UnknownTagError",
    "WHITESPACE",
    "ZeroCorpusError",
    "ZeroLengthSpanWarning",
    "ZeroRecallError",
    "adjudicate",
    "aggregate_runs",
    "baseline_detect",
    "build_design",
    "check_spans",
    "cohen_kappa",
    "concatenate_labels",
    "count_detections",
    "dist_cdf",
    "estimate_rate",
    "estimate_run",
    "filter_articles",
    "fit_lmm",
    "fit_ols",
    "inject",
    "labels_to_spans",
    "likert_distribution",
    "load_jsonl",
    "lr_test",
    "make_label_corpus",
    "pairwise_iaa",
    "parse_markup",
    "pearson",
    "project_labels",
    "recovery_experiment",
    "render_markup",
    "score_corpus",
    "score_tokens",
    "simulate_detector",
    "span_stats",
    "store_jsonl",
    "tokenize",
    "ttest_two_sample",
    "two_way_interactions",
    "verify_references",
]
