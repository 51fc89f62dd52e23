"""End-to-end orchestration of the two-stage method and its benchmarks.

Two-stage training: a squared-loss boosted ensemble is fit on the first
partition, its split-gain importances rank the features, the top of the
ranking (by cumulative cut point) plus the ensemble's own point forecast
become the inputs of the second-stage quantile model, trained on the
second partition. Direct baselines skip stage 1 and fit one quantile
model on both partitions with every feature.

Nothing here ever trains on test-range targets; the partition plumbing
asserts the instant ranges it hands to each fit.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import json

import numpy as np

from . import gbt, qrnn
from .data import Series, SplitSpec, TIMESTAMP_FMT
from .errors import RangeOutOfSeries
from .features import FeatureMatrix, FeatureSpec, append_column, build_matrix, project
from .gbt import BoostedEnsemble, GbtConfig, ImportanceEntry
from .metrics import DEFAULT_INTERVAL, EvalReport, evaluate_forecast
from .qrnn import QrnnConfig, QuantileForecast, QuantileNet

MODEL_KINDS = ("direct_qgbr", "direct_qrnn", "gbr_qgbr", "gbr_qrnn")
POINT_FORECAST_COLUMN = "point_forecast"
MANIFEST_FORMAT = "loadcast-pipeline"
MANIFEST_VERSION = 1

# fraction of stage-1 rows held back for per-round loss monitoring
STAGE1_HOLDOUT = 0.1

_DEFAULT_WORKERS = min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class SelectionPolicy:
    """Cumulative-importance cut point with a hard cap on the feature count."""

    cumulative_cutoff: float = 98.7
    max_features: int = 20

    def __post_init__(self):
        if not 0.0 < self.cumulative_cutoff <= 100.0:
            raise ValueError("cumulative_cutoff must lie in (0, 100]")
        if self.max_features < 1:
            raise ValueError("max_features must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    feature_spec: FeatureSpec
    gbt: GbtConfig
    qrnn: QrnnConfig
    selection: SelectionPolicy
    split: SplitSpec
    model_kind: str

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(
                f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}"
            )

    @property
    def is_two_stage(self) -> bool:
        return self.model_kind.startswith("gbr_")


@dataclass
class TrainedPipeline:
    stage1: BoostedEnsemble | None
    selected_features: list[str]
    stage2: "QuantileNet | dict[float, BoostedEnsemble]"
    config: PipelineConfig
    stage1_ranking: list[ImportanceEntry] = field(default_factory=list)
    stage2_seconds: float = 0.0

    def __post_init__(self):
        if self.config.is_two_stage and self.stage1 is None:
            raise ValueError("two-stage pipelines require a stage-1 model")
        if not self.config.is_two_stage and self.stage1 is not None:
            raise ValueError("direct pipelines must not carry a stage-1 model")

    @property
    def stage2_feature_names(self) -> list[str]:
        if isinstance(self.stage2, QuantileNet):
            return self.stage2.feature_names
        return next(iter(self.stage2.values())).feature_names


def select_features(
    ranking: Sequence[ImportanceEntry], policy: SelectionPolicy
) -> list[str]:
    """Shortest ranking prefix whose cumulative share reaches the cut point.

    Always keeps at least the top feature; never more than the cap. When
    no prefix reaches the cut point the whole ranking is taken (then
    capped).
    """
    if not ranking:
        raise ValueError("ranking must not be empty")
    chosen = len(ranking)
    for i, entry in enumerate(ranking):
        if entry.cumulative >= policy.cumulative_cutoff - 1e-9:
            chosen = i + 1
            break
    chosen = max(1, min(chosen, policy.max_features))
    return [entry.name for entry in ranking[:chosen]]


def improvement_rate(baseline_pinball: float, pinball: float) -> float:
    """Percent pinball reduction relative to the baseline model."""
    return 100.0 * (1.0 - pinball / baseline_pinball)


def model_name(config: PipelineConfig) -> str:
    if config.model_kind == "direct_qgbr":
        return "Direct QGBR"
    if config.model_kind == "direct_qrnn":
        return "Direct QRNN"
    if config.model_kind == "gbr_qgbr":
        return "GBR+QGBR"
    structure = ",".join(str(h) for h in config.qrnn.hidden_layers)
    return f"GBR+QRNN({structure})"


def _instant_mask(instants, lo: datetime | None, hi: datetime | None) -> np.ndarray:
    return np.array(
        [(lo is None or t >= lo) and (hi is None or t < hi) for t in instants],
        dtype=bool,
    )


def _fit_quantile_set(
    matrix: FeatureMatrix,
    config: GbtConfig,
    levels: Sequence[float],
    workers: int,
) -> dict[float, BoostedEnsemble]:
    """One pinball ensemble per level; independent fits, deterministic seeds."""

    def fit_level(i: int) -> BoostedEnsemble:
        cfg = GbtConfig(
            n_trees=config.n_trees,
            max_depth=config.max_depth,
            learning_rate=config.learning_rate,
            min_samples_leaf=config.min_samples_leaf,
            subsample=config.subsample,
            seed=config.seed + 1 + i,
        )
        return gbt.fit(matrix, cfg, loss="pinball", quantile=levels[i])

    if workers > 1 and len(levels) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(fit_level, range(len(levels))))
    else:
        models = [fit_level(i) for i in range(len(levels))]
    return dict(zip(levels, models))


def _predict_quantile_set(
    models: dict[float, BoostedEnsemble], matrix: FeatureMatrix
) -> QuantileForecast:
    levels = tuple(models.keys())
    values = np.column_stack([gbt.predict(models[q], matrix) for q in levels])
    return QuantileForecast(matrix.instants, levels, np.sort(values, axis=1))


def _stage1_key(config: PipelineConfig):
    return (config.feature_spec, config.gbt, config.split.stage1_end)


def _full_matrix(series: Series, spec: FeatureSpec, cache: dict | None) -> FeatureMatrix:
    if cache is None:
        return build_matrix(series, spec)
    key = ("matrix", spec)
    if key not in cache:
        cache[key] = build_matrix(series, spec)
    return cache[key]


def _train_stage1(
    series: Series, config: PipelineConfig, fm: FeatureMatrix, cache: dict | None
):
    key = ("stage1", _stage1_key(config))
    if cache is not None and key in cache:
        return cache[key]

    mask1 = _instant_mask(fm.instants, None, config.split.stage1_end)
    m1 = fm.select_rows(mask1)
    assert all(t < config.split.stage1_end for t in m1.instants)
    cut = max(1, int(round((1.0 - STAGE1_HOLDOUT) * m1.n_rows)))
    m1_fit = m1.select_rows(np.arange(cut))
    validation = None
    if cut < m1.n_rows:
        m1_val = m1.select_rows(np.arange(cut, m1.n_rows))
        validation = (m1_val, m1_val.targets)
    model = gbt.fit(m1_fit, config.gbt, loss="squared", validation=validation)
    ranking = gbt.importance_ranking(model)
    result = (model, ranking)
    if cache is not None:
        cache[key] = result
    return result


def train(
    series: Series,
    config: PipelineConfig,
    workers: int | None = None,
    _cache: dict | None = None,
) -> TrainedPipeline:
    """Fit the configured model kind on the series' training partitions."""
    workers = workers or _DEFAULT_WORKERS
    levels = list(config.qrnn.quantiles)
    fm = _full_matrix(series, config.feature_spec, _cache)

    if config.is_two_stage:
        stage1, ranking = _train_stage1(series, config, fm, _cache)
        selected = select_features(ranking, config.selection)

        mask2 = _instant_mask(
            fm.instants, config.split.stage1_end, config.split.stage2_end
        )
        m2_full = fm.select_rows(mask2)
        assert all(
            config.split.stage1_end <= t < config.split.stage2_end
            for t in m2_full.instants
        )
        point = gbt.predict(stage1, m2_full)
        m2 = append_column(project(m2_full, selected), POINT_FORECAST_COLUMN, point)

        t0 = time.perf_counter()
        if config.model_kind == "gbr_qrnn":
            stage2 = qrnn.fit(m2, config.qrnn)
        else:
            stage2 = _fit_quantile_set(m2, config.gbt, levels, workers)
        seconds = time.perf_counter() - t0
        return TrainedPipeline(
            stage1, selected, stage2, config, ranking, stage2_seconds=seconds
        )

    mask = _instant_mask(fm.instants, None, config.split.stage2_end)
    m_direct = fm.select_rows(mask)
    assert all(t < config.split.stage2_end for t in m_direct.instants)
    t0 = time.perf_counter()
    if config.model_kind == "direct_qrnn":
        stage2 = qrnn.fit(m_direct, config.qrnn)
    else:
        stage2 = _fit_quantile_set(m_direct, config.gbt, levels, workers)
    seconds = time.perf_counter() - t0
    return TrainedPipeline(
        None, list(fm.column_names), stage2, config, [], stage2_seconds=seconds
    )


def forecast(
    pipeline: TrainedPipeline,
    series: Series,
    start: datetime,
    end: datetime,
    _cache: dict | None = None,
) -> QuantileForecast:
    """Quantile forecast for every hour in [start, end)."""
    spec = pipeline.config.feature_spec
    earliest = series.start + timedelta(hours=spec.max_lag)
    if not (earliest <= start < end <= series.end):
        raise RangeOutOfSeries(
            f"[{start}, {end}) must lie inside [{earliest}, {series.end})"
        )
    fm = _full_matrix(series, spec, _cache)
    mask = _instant_mask(fm.instants, start, end)
    subset = fm.select_rows(mask)
    expected = int((end - start).total_seconds() // 3600)
    if subset.n_rows != expected:
        raise RangeOutOfSeries(
            f"found {subset.n_rows} instants in range, expected {expected}"
        )

    if pipeline.config.is_two_stage:
        point = gbt.predict(pipeline.stage1, subset)
        subset = append_column(
            project(subset, pipeline.selected_features), POINT_FORECAST_COLUMN, point
        )
    if isinstance(pipeline.stage2, QuantileNet):
        return qrnn.predict(pipeline.stage2, subset)
    return _predict_quantile_set(pipeline.stage2, subset)


@dataclass
class BenchmarkRow:
    name: str
    report: EvalReport
    improvement: float
    forecast: QuantileForecast
    actuals: np.ndarray
    pipeline: TrainedPipeline


def benchmark(
    series: Series,
    configs: Sequence[PipelineConfig],
    workers: int | None = None,
) -> list[BenchmarkRow]:
    """Train and score each config on the first config's test range.

    The first config is the baseline: improvement is the percent pinball
    reduction relative to it.
    """
    if not configs:
        raise ValueError("benchmark needs at least one config")
    test_start = configs[0].split.stage2_end
    test_end = configs[0].split.test_end
    cache: dict = {}
    rows: list[BenchmarkRow] = []
    for cfg in configs:
        pl = train(series, cfg, workers=workers, _cache=cache)
        fc = forecast(pl, series, test_start, test_end, _cache=cache)
        lo = series.index_of(test_start)
        actuals = series.demand[lo : lo + fc.n_instants]
        report = evaluate_forecast(fc, actuals, DEFAULT_INTERVAL)
        rows.append(BenchmarkRow(model_name(cfg), report, 0.0, fc, actuals, pl))
    base = rows[0].report.pinball
    for row in rows[1:]:
        row.improvement = improvement_rate(base, row.report.pinball)
    return rows


@dataclass
class SweepRow:
    structure: tuple[int, ...]
    report: EvalReport
    train_seconds: float


def structure_sweep(
    series: Series,
    base: PipelineConfig,
    structures: Sequence[Sequence[int]],
    workers: int | None = None,
) -> list[SweepRow]:
    """Train one two-stage QRNN per hidden structure, reusing stage 1."""
    if not structures:
        raise ValueError("structure sweep needs at least one structure")
    cache: dict = {}
    test_start = base.split.stage2_end
    test_end = base.split.test_end
    rows: list[SweepRow] = []
    for structure in structures:
        cfg = PipelineConfig(
            feature_spec=base.feature_spec,
            gbt=base.gbt,
            qrnn=QrnnConfig(
                hidden_layers=tuple(structure),
                quantiles=base.qrnn.quantiles,
                epochs=base.qrnn.epochs,
                batch_size=base.qrnn.batch_size,
                learning_rate=base.qrnn.learning_rate,
                seed=base.qrnn.seed,
                activation=base.qrnn.activation,
            ),
            selection=base.selection,
            split=base.split,
            model_kind="gbr_qrnn",
        )
        pl = train(series, cfg, workers=workers, _cache=cache)
        fc = forecast(pl, series, test_start, test_end, _cache=cache)
        lo = series.index_of(test_start)
        actuals = series.demand[lo : lo + fc.n_instants]
        report = evaluate_forecast(fc, actuals, DEFAULT_INTERVAL)
        rows.append(SweepRow(tuple(structure), report, pl.stage2_seconds))
    return rows


def _level_tag(level: float) -> str:
    return f"{int(round(level * 100)):02d}"


def config_to_dict(config: PipelineConfig) -> dict:
    return {
        "model": config.model_kind,
        "features": {
            "demand_lags": list(config.feature_spec.demand_lags),
            "weather_lags": list(config.feature_spec.weather_lags),
            "calendar": list(config.feature_spec.calendar),
        },
        "gbt": {
            "n_trees": config.gbt.n_trees,
            "max_depth": config.gbt.max_depth,
            "learning_rate": config.gbt.learning_rate,
            "min_samples_leaf": config.gbt.min_samples_leaf,
            "subsample": config.gbt.subsample,
            "seed": config.gbt.seed,
        },
        "qrnn": {
            "hidden_layers": list(config.qrnn.hidden_layers),
            "quantiles": list(config.qrnn.quantiles),
            "epochs": config.qrnn.epochs,
            "batch_size": config.qrnn.batch_size,
            "learning_rate": config.qrnn.learning_rate,
            "seed": config.qrnn.seed,
            "activation": config.qrnn.activation,
        },
        "selection": {
            "cumulative_cutoff": config.selection.cumulative_cutoff,
            "max_features": config.selection.max_features,
        },
        "split": {
            "stage1_end": config.split.stage1_end.strftime(TIMESTAMP_FMT),
            "stage2_end": config.split.stage2_end.strftime(TIMESTAMP_FMT),
            "test_end": config.split.test_end.strftime(TIMESTAMP_FMT),
        },
    }


def config_from_dict(doc: dict) -> PipelineConfig:
    return PipelineConfig(
        feature_spec=FeatureSpec(
            demand_lags=tuple(doc["features"]["demand_lags"]),
            weather_lags=tuple(doc["features"]["weather_lags"]),
            calendar=tuple(doc["features"]["calendar"]),
        ),
        gbt=GbtConfig(**doc["gbt"]),
        qrnn=QrnnConfig(
            hidden_layers=tuple(doc["qrnn"]["hidden_layers"]),
            quantiles=tuple(doc["qrnn"]["quantiles"]),
            epochs=doc["qrnn"]["epochs"],
            batch_size=doc["qrnn"]["batch_size"],
            learning_rate=doc["qrnn"]["learning_rate"],
            seed=doc["qrnn"]["seed"],
            activation=doc["qrnn"]["activation"],
        ),
        selection=SelectionPolicy(**doc["selection"]),
        split=SplitSpec(
            stage1_end=datetime.strptime(doc["split"]["stage1_end"], TIMESTAMP_FMT),
            stage2_end=datetime.strptime(doc["split"]["stage2_end"], TIMESTAMP_FMT),
            test_end=datetime.strptime(doc["split"]["test_end"], TIMESTAMP_FMT),
        ),
        model_kind=doc["model"],
    )


def save_pipeline(pipeline: TrainedPipeline, directory: str | Path) -> None:
    """Persist a trained pipeline as a directory of JSON documents."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stage2_files: list[str]
    if isinstance(pipeline.stage2, QuantileNet):
        qrnn.save_json(pipeline.stage2, directory / "stage2.json")
        stage2_files = ["stage2.json"]
    else:
        stage2_files = []
        for level, model in pipeline.stage2.items():
            fname = f"stage2_q{_level_tag(level)}.json"
            gbt.save_json(model, directory / fname)
            stage2_files.append(fname)
    if pipeline.stage1 is not None:
        gbt.save_json(pipeline.stage1, directory / "stage1.json")

    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "model_name": model_name(pipeline.config),
        "config": config_to_dict(pipeline.config),
        "selected_features": pipeline.selected_features,
        "stage2_inputs": pipeline.stage2_feature_names,
        "stage1_file": "stage1.json" if pipeline.stage1 is not None else None,
        "stage2_files": stage2_files,
        "stage1_ranking": [
            {"feature": e.name, "importance": e.importance, "cumulative": e.cumulative}
            for e in pipeline.stage1_ranking
        ],
        "stage1_validation_history": (
            pipeline.stage1.validation_history if pipeline.stage1 is not None else []
        ),
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2), encoding="utf-8"
    )


def load_pipeline(directory: str | Path) -> TrainedPipeline:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{directory} does not hold a {MANIFEST_FORMAT} manifest")
    config = config_from_dict(manifest["config"])
    stage1 = None
    if manifest["stage1_file"]:
        stage1 = gbt.load_json(directory / manifest["stage1_file"])
    files = manifest["stage2_files"]
    if files == ["stage2.json"]:
        stage2 = qrnn.load_json(directory / "stage2.json")
    else:
        stage2 = {}
        for fname in files:
            model = gbt.load_json(directory / fname)
            stage2[model.quantile] = model
    ranking = [
        ImportanceEntry(e["feature"], e["importance"], e["cumulative"])
        for e in manifest.get("stage1_ranking", [])
    ]
    return TrainedPipeline(
        stage1, manifest["selected_features"], stage2, config, ranking
    )
