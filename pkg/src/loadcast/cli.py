"""Command-line front end.

Commands: ``synth``, ``train``, ``forecast``, ``benchmark``, ``evaluate``.
Runs are driven by a YAML config file with explicit seeds; command-line
flags override config keys (flags > config > defaults) and the effective
configuration is echoed at startup unless ``--quiet`` is given. Every
command is deterministic given its inputs.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import yaml

from . import figures, gbt, pipeline as pl
from .data import (
    Series,
    SplitSpec,
    TIMESTAMP_FMT,
    load_csv,
    synth_series,
    write_csv,
)
from .errors import ConfigError, LoadcastError
from .features import FeatureSpec
from .gbt import GbtConfig
from .metrics import DEFAULT_INTERVAL, evaluate_forecast
from .pipeline import PipelineConfig, SelectionPolicy
from .qrnn import QrnnConfig, QuantileForecast

_SCHEMA = {
    "data": {"csv": None, "zone": None, "synth": {"seed": None, "hours": None, "start": None}},
    "split": {"stage1_end": None, "stage2_end": None, "test_end": None},
    "features": {"demand_lags": None, "weather_lags": None, "calendar": None},
    "gbt": {
        "n_trees": None,
        "max_depth": None,
        "learning_rate": None,
        "min_samples_leaf": None,
        "subsample": None,
        "seed": None,
    },
    "qrnn": {
        "hidden_layers": None,
        "quantiles": None,
        "epochs": None,
        "batch_size": None,
        "learning_rate": None,
        "seed": None,
        "activation": None,
    },
    "selection": {"cumulative_cutoff": None, "max_features": None},
    "model": None,
    "out_dir": None,
    "benchmark": {"models": None, "sweep": None, "figures": None},
}


def _check_keys(doc, schema, prefix=""):
    if not isinstance(doc, dict):
        raise ConfigError(f"section {prefix or '<root>'} must be a mapping")
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown config key {path!r}")
        sub = schema[key]
        if isinstance(sub, dict) and value is not None:
            _check_keys(value, sub, prefix=path + ".")


def _parse_instant(text, path: str) -> datetime:
    if isinstance(text, datetime):  # YAML may parse timestamps natively
        if text.minute or text.second or text.microsecond:
            raise ConfigError(f"{path}: instant must be on the hour, got {text}")
        return text
    try:
        return datetime.strptime(str(text), TIMESTAMP_FMT)
    except ValueError as exc:
        raise ConfigError(f"{path}: expected YYYY-MM-DDTHH:00, got {text!r}") from exc


def _require(doc: dict, key: str, path: str):
    if key not in doc or doc[key] is None:
        raise ConfigError(f"missing required config key {path!r}")
    return doc[key]


class RunConfig:
    """Parsed, validated run configuration."""

    def __init__(self, doc: dict, seed_override: int | None = None):
        _check_keys(doc, _SCHEMA)
        self.doc = doc
        data = _require(doc, "data", "data")
        self.zone = data.get("zone", "SYNTH")
        self.csv_path = data.get("csv")
        self.synth = data.get("synth")
        if (self.csv_path is None) == (self.synth is None):
            raise ConfigError("data must define exactly one of 'csv' or 'synth'")

        split_doc = _require(doc, "split", "split")
        self.split = SplitSpec(
            stage1_end=_parse_instant(_require(split_doc, "stage1_end", "split.stage1_end"), "split.stage1_end"),
            stage2_end=_parse_instant(_require(split_doc, "stage2_end", "split.stage2_end"), "split.stage2_end"),
            test_end=_parse_instant(_require(split_doc, "test_end", "split.test_end"), "split.test_end"),
        )

        feat = doc.get("features") or {}
        kwargs = {}
        if feat.get("demand_lags") is not None:
            kwargs["demand_lags"] = tuple(feat["demand_lags"])
        if feat.get("weather_lags") is not None:
            kwargs["weather_lags"] = tuple(feat["weather_lags"])
        if feat.get("calendar") is not None:
            kwargs["calendar"] = tuple(feat["calendar"])
        self.feature_spec = FeatureSpec(**kwargs)

        gbt_doc = _require(doc, "gbt", "gbt")
        if seed_override is None:
            _require(gbt_doc, "seed", "gbt.seed")
        self.gbt = GbtConfig(
            n_trees=gbt_doc.get("n_trees", 300),
            max_depth=gbt_doc.get("max_depth", 4),
            learning_rate=gbt_doc.get("learning_rate", 0.1),
            min_samples_leaf=gbt_doc.get("min_samples_leaf", 20),
            subsample=gbt_doc.get("subsample", 1.0),
            seed=seed_override if seed_override is not None else gbt_doc["seed"],
        )

        qrnn_doc = _require(doc, "qrnn", "qrnn")
        if seed_override is None:
            _require(qrnn_doc, "seed", "qrnn.seed")
        qkwargs = {"seed": seed_override if seed_override is not None else qrnn_doc["seed"]}
        if qrnn_doc.get("hidden_layers") is not None:
            qkwargs["hidden_layers"] = tuple(qrnn_doc["hidden_layers"])
        if qrnn_doc.get("quantiles") is not None:
            qkwargs["quantiles"] = tuple(qrnn_doc["quantiles"])
        for k in ("epochs", "batch_size", "learning_rate", "activation"):
            if qrnn_doc.get(k) is not None:
                qkwargs[k] = qrnn_doc[k]
        self.qrnn = QrnnConfig(**qkwargs)

        sel = doc.get("selection") or {}
        self.selection = SelectionPolicy(
            cumulative_cutoff=sel.get("cumulative_cutoff", 98.7),
            max_features=sel.get("max_features", 20),
        )

        self.model_kind = doc.get("model")
        self.out_dir = doc.get("out_dir")
        self.seed_override = seed_override

        bench = doc.get("benchmark") or {}
        self.bench_models = bench.get("models")
        self.bench_sweep = bench.get("sweep")
        self.bench_figures = bench.get("figures", True)
        if self.synth is not None:
            if seed_override is None:
                _require(self.synth, "seed", "data.synth.seed")
            _require(self.synth, "hours", "data.synth.hours")

    def load_series(self) -> Series:
        if self.csv_path is not None:
            return load_csv(self.csv_path, self.zone)
        seed = self.seed_override if self.seed_override is not None else self.synth["seed"]
        profile = None
        if self.synth.get("start"):
            from .data import SynthProfile

            profile = SynthProfile(
                start=_parse_instant(self.synth["start"], "data.synth.start")
            )
        return synth_series(seed, int(self.synth["hours"]), profile, zone=self.zone)

    def pipeline_config(
        self, model_kind: str, hidden_layers=None, gbt_over=None, qrnn_over=None
    ) -> PipelineConfig:
        if model_kind not in pl.MODEL_KINDS:
            raise ConfigError(
                f"unknown model kind {model_kind!r}; expected one of {pl.MODEL_KINDS}"
            )
        gcfg = self.gbt
        if gbt_over:
            _check_keys(gbt_over, _SCHEMA["gbt"], prefix="benchmark.models[].gbt.")
            merged = {
                "n_trees": gcfg.n_trees,
                "max_depth": gcfg.max_depth,
                "learning_rate": gcfg.learning_rate,
                "min_samples_leaf": gcfg.min_samples_leaf,
                "subsample": gcfg.subsample,
                "seed": gcfg.seed,
            }
            merged.update(gbt_over)
            if self.seed_override is not None:
                merged["seed"] = self.seed_override
            gcfg = GbtConfig(**merged)
        qcfg = self.qrnn
        if hidden_layers is not None or qrnn_over:
            qrnn_over = dict(qrnn_over or {})
            _check_keys(qrnn_over, _SCHEMA["qrnn"], prefix="benchmark.models[].qrnn.")
            merged = {
                "hidden_layers": qcfg.hidden_layers,
                "quantiles": qcfg.quantiles,
                "epochs": qcfg.epochs,
                "batch_size": qcfg.batch_size,
                "learning_rate": qcfg.learning_rate,
                "seed": qcfg.seed,
                "activation": qcfg.activation,
            }
            merged.update(qrnn_over)
            if hidden_layers is not None:
                merged["hidden_layers"] = tuple(hidden_layers)
            if self.seed_override is not None:
                merged["seed"] = self.seed_override
            qcfg = QrnnConfig(**merged)
        return PipelineConfig(
            feature_spec=self.feature_spec,
            gbt=gcfg,
            qrnn=qcfg,
            selection=self.selection,
            split=self.split,
            model_kind=model_kind,
        )

    def benchmark_configs(self) -> list[PipelineConfig]:
        if not self.bench_models:
            raise ConfigError("benchmark.models must list at least one model")
        configs = []
        for entry in self.bench_models:
            if isinstance(entry, str):
                configs.append(self.pipeline_config(entry))
            elif isinstance(entry, dict):
                unknown = set(entry) - {"kind", "hidden_layers", "gbt", "qrnn"}
                if unknown:
                    raise ConfigError(
                        f"unknown benchmark model key {sorted(unknown)[0]!r}"
                    )
                configs.append(
                    self.pipeline_config(
                        _require(entry, "kind", "benchmark.models[].kind"),
                        entry.get("hidden_layers"),
                        entry.get("gbt"),
                        entry.get("qrnn"),
                    )
                )
            else:
                raise ConfigError("benchmark.models entries must be names or mappings")
        return configs


def _load_config(path: str, seed_override: int | None) -> RunConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must contain a YAML mapping")
    return RunConfig(doc, seed_override)


def _echo_config(cfg: RunConfig, quiet: bool) -> None:
    if quiet:
        return
    effective = dict(cfg.doc)
    if cfg.seed_override is not None:
        effective = yaml.safe_load(yaml.safe_dump(effective))
        effective.setdefault("gbt", {})["seed"] = cfg.seed_override
        effective.setdefault("qrnn", {})["seed"] = cfg.seed_override
        if cfg.synth is not None:
            effective.setdefault("data", {}).setdefault("synth", {})["seed"] = cfg.seed_override
    print("# effective configuration")
    print(yaml.safe_dump(effective, sort_keys=True).rstrip())


def _level_header(levels) -> list[str]:
    return [f"q{int(round(q * 100)):02d}" for q in levels]


def _write_forecast_csv(path: Path, fc: QuantileForecast, actuals) -> None:
    header = ["instant", "actual"] + _level_header(fc.levels)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for i, ts in enumerate(fc.instants):
            row = [ts.strftime(TIMESTAMP_FMT), str(float(actuals[i]))]
            row += [str(float(v)) for v in fc.values[i]]
            fh.write(",".join(row) + "\n")


def _slug(name: str) -> str:
    out = name.lower()
    for ch in "+() ":
        out = out.replace(ch, "_")
    out = out.replace(",", "_")
    while "__" in out:
        out = out.replace("__", "_")
    return out.strip("_")


RESULTS_HEADER = "model,mae,rmse,pi_width,pinball,winkler,picp,improvement_rate"


def _results_lines(rows) -> list[str]:
    lines = [RESULTS_HEADER]
    for row in rows:
        lines.append(
            ",".join([row.name] + row.report.csv_values() + [str(row.improvement)])
        )
    return lines


def cmd_synth(args) -> int:
    series = synth_series(args.seed, args.hours, zone=args.zone)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(series, out)
    if not args.quiet:
        print(f"wrote {len(series)} hours to {out}")
    return 0


def _print_selected_table(pipeline_obj) -> None:
    selected = set(pipeline_obj.selected_features)
    print(f"{'Feature':<20} {'Importance':>10} {'Cumulative Rate':>16}")
    for entry in pipeline_obj.stage1_ranking:
        if entry.name not in selected:
            break
        print(f"{entry.name:<20} {entry.importance:>10.2f} {entry.cumulative:>15.2f}%")


def cmd_train(args) -> int:
    cfg = _load_config(args.config, args.seed)
    _echo_config(cfg, args.quiet)
    if not cfg.model_kind:
        raise ConfigError("train requires the 'model' config key")
    out_dir = Path(args.out or cfg.out_dir or "runs/latest")
    series = cfg.load_series()
    pcfg = cfg.pipeline_config(cfg.model_kind)
    trained = pl.train(series, pcfg)
    pl.save_pipeline(trained, out_dir)
    if trained.stage1 is not None:
        figures.importance_chart(
            trained.stage1_ranking, out_dir / "importance.png"
        )
        if not args.quiet:
            _print_selected_table(trained)
    if not args.quiet:
        print(f"saved {pl.model_name(pcfg)} pipeline to {out_dir}")
    return 0


def cmd_forecast(args) -> int:
    trained = pl.load_pipeline(args.model)
    series = load_csv(args.data, args.zone)
    start = _parse_instant(args.start, "--start")
    end = start + timedelta(hours=args.hours)
    fc = pl.forecast(trained, series, start, end)
    lo = series.index_of(start)
    actuals = series.demand[lo : lo + fc.n_instants]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_forecast_csv(out, fc, actuals)
    if not args.quiet:
        print(f"wrote {fc.n_instants}-hour forecast to {out}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_config(args.config, args.seed)
    _echo_config(cfg, args.quiet)
    out_dir = Path(args.out or cfg.out_dir or "runs/benchmark")
    out_dir.mkdir(parents=True, exist_ok=True)
    series = cfg.load_series()
    configs = cfg.benchmark_configs()
    render = cfg.bench_figures and not args.no_figures

    test_start = configs[0].split.stage2_end
    test_end = configs[0].split.test_end
    cache: dict = {}
    rows: list[pl.BenchmarkRow] = []
    results_path = out_dir / "results.csv"
    try:
        for pcfg in configs:
            trained = pl.train(series, pcfg, _cache=cache)
            fc = pl.forecast(trained, series, test_start, test_end, _cache=cache)
            lo = series.index_of(test_start)
            actuals = series.demand[lo : lo + fc.n_instants]
            report = evaluate_forecast(fc, actuals, DEFAULT_INTERVAL)
            rows.append(
                pl.BenchmarkRow(pl.model_name(pcfg), report, 0.0, fc, actuals, trained)
            )
            if not args.quiet:
                print(f"{rows[-1].name}: pinball {report.pinball:.4f}")
        base = rows[0].report.pinball
        for row in rows[1:]:
            row.improvement = pl.improvement_rate(base, row.report.pinball)
    except Exception:
        if rows:
            partial = results_path.with_suffix(".csv.partial")
            partial.write_text("\n".join(_results_lines(rows)) + "\n", encoding="utf-8")
            print(f"flushed {len(rows)} partial results to {partial}", file=sys.stderr)
        raise

    results_path.write_text("\n".join(_results_lines(rows)) + "\n", encoding="utf-8")
    for row in rows:
        _write_forecast_csv(out_dir / f"forecast_{_slug(row.name)}.csv", row.forecast, row.actuals)

    sweep_rows = None
    if cfg.bench_sweep:
        base_cfg = cfg.pipeline_config("gbr_qrnn")
        sweep_rows = pl.structure_sweep(series, base_cfg, cfg.bench_sweep)
        with (out_dir / "sweep.csv").open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("structure,mae,rmse,pi_width,pinball,winkler,picp,train_seconds\n")
            for srow in sweep_rows:
                label = "(" + ",".join(str(h) for h in srow.structure) + ")"
                fh.write(
                    ",".join(
                        ['"' + label + '"']
                        + srow.report.csv_values()
                        + [f"{srow.train_seconds:.3f}"]
                    )
                    + "\n"
                )

    if render:
        figures.score_bars(
            [r.name for r in rows], [r.report for r in rows], out_dir / "scores.png"
        )
        for row in rows:
            figures.fan_chart(
                row.forecast,
                row.actuals,
                out_dir / f"fanchart_{_slug(row.name)}.png",
                title=row.name,
            )
        if sweep_rows:
            figures.sweep_chart(sweep_rows, out_dir / "sweep.png")

    if not args.quiet:
        print(f"results in {results_path}")
    return 0


def _read_forecast_csv(path: Path):
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    qcols = [(i, c) for i, c in enumerate(header) if c.startswith("q") and c[1:].isdigit()]
    if header[0] != "instant" or not qcols:
        raise LoadcastError(f"{path} is not a forecast CSV (instant,q05,...)")
    levels = tuple(int(c[1:]) / 100.0 for _, c in qcols)
    instants = []
    values = []
    for raw in lines[1:]:
        if not raw.strip():
            continue
        parts = raw.split(",")
        instants.append(datetime.strptime(parts[0], TIMESTAMP_FMT))
        values.append([float(parts[i]) for i, _ in qcols])
    return QuantileForecast(instants, levels, np.array(values))


def cmd_evaluate(args) -> int:
    fc = _read_forecast_csv(Path(args.forecast))
    series = load_csv(args.actuals, args.zone)
    by_instant = {ts: float(series.demand[i]) for i, ts in enumerate(series.timestamps)}
    actuals = []
    for ts in fc.instants:
        if ts not in by_instant:
            print(f"no actual value for forecast instant {ts}", file=sys.stderr)
            return 1
        actuals.append(by_instant[ts])
    report = evaluate_forecast(fc, np.array(actuals), DEFAULT_INTERVAL)
    print(",".join(report.CSV_FIELDS))
    print(",".join(report.csv_values()))
    mape = "undefined" if report.mape is None else str(report.mape)
    print(f"mape,{mape}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loadcast",
        description="Two-stage probabilistic hour-ahead load forecasting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic demand/weather CSV")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--hours", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--zone", default="SYNTH")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides config out_dir)")
    p.add_argument("--seed", type=int, help="override every seed in the config")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="forecast a range with a saved pipeline")
    p.add_argument("--model", required=True, help="pipeline directory from train")
    p.add_argument("--data", required=True, help="series CSV with lag history")
    p.add_argument("--start", required=True, help="first forecast hour (YYYY-MM-DDTHH:00)")
    p.add_argument("--hours", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--zone", default="SYNTH")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("benchmark", help="run the model comparison table")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides config out_dir)")
    p.add_argument("--seed", type=int, help="override every seed in the config")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("evaluate", help="score a forecast CSV against actuals")
    p.add_argument("--forecast", required=True)
    p.add_argument("--actuals", required=True)
    p.add_argument("--zone", default="SYNTH")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LoadcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
