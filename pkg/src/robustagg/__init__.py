"""Byzantine-robust aggregation with nearest neighbor mixing, and a seeded
simulator of robust distributed gradient descent and heavy-ball momentum."""

from .aggregators import AggregatorSpec, aggregate, cwmed, cwtm, geometric_median, krum, mean
from .core import RngStream, coordinate_std, subset_mean, subset_variance
from .preagg import Pipeline, PreAggSpec, bucketing, compose, nnm, parse_pipeline
from .robustness import estimate_kappa, nnm_boosted_kappa, pipeline_kappa, theoretical_kappa

__all__ = [
    "AggregatorSpec",
    "Pipeline",
    "PreAggSpec",
    "RngStream",
    "aggregate",
    "bucketing",
    "compose",
    "coordinate_std",
    "cwmed",
    "cwtm",
    "estimate_kappa",
    "geometric_median",
    "krum",
    "mean",
    "nnm",
    "nnm_boosted_kappa",
    "parse_pipeline",
    "pipeline_kappa",
    "subset_mean",
    "subset_variance",
    "theoretical_kappa",
]
