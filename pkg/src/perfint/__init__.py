"""Accuracy prediction with calibrated prediction intervals under covariate shift."""

from .drift import LinearSkewConfig, NearestNeighborsConfig, linear_skew, nearest_neighbors_drift
from .features import FEATURE_NAMES, FEATURE_SCHEMA, extract_features, histogram_distance
from .predictors import PerformancePrediction, train_predictor
from .scenario import ModelSettings, build_scenario
from .tabular import Dataset, SplitTriple, build_histogram, load_dataset, random_split
from .uncertainty import (
    UncertaintyModel, build_um_pipeline, cost, predict_interval, tl_calibrate, train_um, z_calibrate,
)

__version__ = "0.1.0"

__all__ = [
    "LinearSkewConfig", "NearestNeighborsConfig", "linear_skew", "nearest_neighbors_drift",
    "FEATURE_NAMES", "FEATURE_SCHEMA", "extract_features", "histogram_distance",
    "PerformancePrediction", "train_predictor", "ModelSettings", "build_scenario", "Dataset",
    "SplitTriple", "build_histogram", "load_dataset", "random_split", "UncertaintyModel",
    "build_um_pipeline", "cost", "predict_interval", "tl_calibrate", "train_um", "z_calibrate",
]
