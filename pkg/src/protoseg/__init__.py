"""Mixed-type (numeric + categorical) clustering and trip segmentation."""

from .core import (
    UNKNOWN,
    ClusterCostBreakdown,
    ClusterModel,
    DatasetSchema,
    FitMeta,
    MixedDataset,
    MixedRecord,
    Prototype,
    Standardization,
    categorical_mismatch,
    cluster_categorical_cost,
    load_model,
    mixed_distance,
    model_from_document,
    model_to_document,
    numeric_sqdist,
    save_model,
)
from .fit import FitConfig, estimate_gamma, fit, fit_with_trace, predict
from .select import ElbowCurve, detect_elbow, elbow_scan
from .profiling import (
    ClusterProfile,
    LocationShare,
    derive_trip_metrics,
    pooled_percentile,
    profile_clusters,
    top_locations,
)
from .ingest import FeatureSpec, TripFilter, TripRecord, to_mixed_dataset

__all__ = [
    "UNKNOWN",
    "ClusterCostBreakdown",
    "ClusterModel",
    "ClusterProfile",
    "DatasetSchema",
    "ElbowCurve",
    "FeatureSpec",
    "FitConfig",
    "FitMeta",
    "LocationShare",
    "MixedDataset",
    "MixedRecord",
    "Prototype",
    "Standardization",
    "TripFilter",
    "TripRecord",
    "categorical_mismatch",
    "cluster_categorical_cost",
    "derive_trip_metrics",
    "detect_elbow",
    "elbow_scan",
    "estimate_gamma",
    "fit",
    "fit_with_trace",
    "load_model",
    "mixed_distance",
    "model_from_document",
    "model_to_document",
    "numeric_sqdist",
    "pooled_percentile",
    "predict",
    "profile_clusters",
    "save_model",
    "to_mixed_dataset",
    "top_locations",
]
