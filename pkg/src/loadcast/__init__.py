"""Two-stage probabilistic hour-ahead load forecasting.

Stage 1 trains a gradient-boosted point forecaster and ranks features by
split-gain importance; stage 2 trains a multi-quantile model on the
selected features plus the stage-1 point forecast. Forecasts are scored
with pinball loss, the Winkler score, and interval coverage.
"""

from .data import HourlyRecord, Series, SplitSpec, SynthProfile, load_csv, split, synth_series, write_csv
from .features import FeatureMatrix, FeatureSpec, append_column, build_matrix, project, relative_humidity
from .gbt import BoostedEnsemble, GbtConfig, importance_ranking, rank_importances
from .metrics import EvalReport, IntervalSpec, evaluate_forecast, mean_pinball, picp, point_metrics, winkler
from .pipeline import (
    BenchmarkRow,
    PipelineConfig,
    SelectionPolicy,
    TrainedPipeline,
    benchmark,
    forecast,
    load_pipeline,
    save_pipeline,
    select_features,
    structure_sweep,
    train,
)
from .qrnn import QrnnConfig, QuantileForecast, QuantileNet, grad_check, pinball

__version__ = "0.1.0"

__all__ = [
    "HourlyRecord",
    "Series",
    "SplitSpec",
    "SynthProfile",
    "load_csv",
    "split",
    "synth_series",
    "write_csv",
    "FeatureMatrix",
    "FeatureSpec",
    "append_column",
    "build_matrix",
    "project",
    "relative_humidity",
    "BoostedEnsemble",
    "GbtConfig",
    "importance_ranking",
    "rank_importances",
    "EvalReport",
    "IntervalSpec",
    "evaluate_forecast",
    "mean_pinball",
    "picp",
    "point_metrics",
    "winkler",
    "BenchmarkRow",
    "PipelineConfig",
    "SelectionPolicy",
    "TrainedPipeline",
    "benchmark",
    "forecast",
    "load_pipeline",
    "save_pipeline",
    "select_features",
    "structure_sweep",
    "train",
    "QrnnConfig",
    "QuantileForecast",
    "QuantileNet",
    "grad_check",
    "pinball",
]
