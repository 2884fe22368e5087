"""Batch command-line front-end wiring the pipeline stages through files.

Stages communicate only via the files they write, which keeps leakage
auditable: prepare -> train -> threshold -> detect -> eval, plus synth and
export-latent. Configuration is an INI file whose keys are all mirrored as
--section.key flags (flags win over the file, the file wins over defaults).

Exit codes: 0 success, 1 I/O, 2 validation/config, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import dataset, detector, evaluation, preprocess, synthplant, training
from .errors import NumericError, ValidationError
from .models import (
    DenseAutoencoder,
    LstmAutoencoder,
    ModelBundle,
    load_model,
    save_model,
)
from .preprocess import SplitPlan, WindowSpec

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

ARCHITECTURES = ("dense_ae", "lstm_ae")

# (section, key) -> RunConfig field
CONFIG_KEYS = {
    ("paths", "sensor_csv"): "sensor_csv",
    ("paths", "fault_csv"): "fault_csv",
    ("paths", "model_file"): "model_file",
    ("paths", "out_dir"): "out_dir",
    ("pipeline", "architecture"): "architecture",
    ("pipeline", "loss"): "loss",
    ("pipeline", "alpha"): "alpha",
    ("pipeline", "window_length"): "window_length",
    ("pipeline", "window_stride"): "window_stride",
    ("pipeline", "train_ratio"): "train_ratio",
    ("pipeline", "validation_ratio"): "validation_ratio",
    ("pipeline", "seed"): "seed",
    ("train", "max_epochs"): "max_epochs",
    ("train", "learning_rate"): "learning_rate",
    ("train", "batch_size"): "batch_size",
    ("train", "es_patience"): "es_patience",
    ("train", "plateau_patience"): "plateau_patience",
    ("train", "plateau_factor"): "plateau_factor",
    ("train", "warmup_epochs"): "warmup_epochs",
    ("synth", "n_channels"): "synth_channels",
    ("synth", "n_samples"): "synth_samples",
    ("synth", "gap_fraction"): "synth_gap_fraction",
}


@dataclass
class RunConfig:
    sensor_csv: str | None = None
    fault_csv: str | None = None
    model_file: str | None = None
    out_dir: str = "out"
    architecture: str = "dense_ae"
    loss: str = "mse"
    alpha: float = 95.0
    window_length: int = 5
    window_stride: int = 1
    train_ratio: float = 0.9
    validation_ratio: float = 0.2
    seed: int = 0
    max_epochs: int = 25
    learning_rate: float | None = None  # architecture default when unset
    batch_size: int = 256
    es_patience: int = 10
    plateau_patience: int = 5
    plateau_factor: float = 0.2
    warmup_epochs: int = 5
    synth_channels: int = 8
    synth_samples: int = 20_000
    synth_gap_fraction: float = 0.0

    def validate(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ValidationError(
                f"architecture must be one of {ARCHITECTURES}, "
                f"got {self.architecture!r}"
            )
        if self.loss not in training.LOSS_KINDS:
            raise ValidationError(f"loss must be one of {training.LOSS_KINDS}")
        if self.loss == "mahalanobis" and self.architecture != "dense_ae":
            raise ValidationError("the mahalanobis loss applies to dense_ae only")
        if not 0.0 < self.alpha <= 100.0:
            raise ValidationError(f"alpha must lie in (0, 100], got {self.alpha}")

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)

    @property
    def model_path(self) -> Path:
        return Path(self.model_file) if self.model_file else self.out_path / "model.json"

    def train_config(self) -> training.TrainConfig:
        lr = self.learning_rate
        if lr is None:
            lr = 3e-3 if self.architecture == "dense_ae" else 1e-3
        return training.TrainConfig(
            max_epochs=self.max_epochs,
            learning_rate=lr,
            batch_size=self.batch_size,
            es_patience=self.es_patience,
            plateau_patience=self.plateau_patience,
            plateau_factor=self.plateau_factor,
            loss=self.loss,
            warmup_epochs=self.warmup_epochs,
            seed=self.seed,
        )

    def window_spec(self) -> WindowSpec:
        return WindowSpec(self.window_length, self.window_stride)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(field_name: str, raw: str):
    kind = _FIELD_TYPES[field_name]
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float") or field_name == "learning_rate":
            return float(raw)
    except ValueError as exc:
        raise ValidationError(f"bad value {raw!r} for {field_name}") from exc
    return raw


def load_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        try:
            parser.read_file(fh)
        except configparser.Error as exc:
            raise ValidationError(f"bad config file: {exc}") from exc
    values = {}
    for section in parser.sections():
        for key, raw in parser[section].items():
            field_name = CONFIG_KEYS.get((section, key))
            if field_name is None:
                raise ValidationError(f"unknown config key [{section}] {key}")
            values[field_name] = _coerce(field_name, raw)
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aedetect",
        description="Autoencoder anomaly detection for minute-resolution sensor logs",
    )
    parser.add_argument("command", choices=[
        "prepare", "train", "threshold", "detect", "eval", "synth", "export-latent",
    ])
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--seed", type=int, help="override pipeline.seed")
    parser.add_argument("--out-dir", help="override paths.out_dir")
    for (section, key), field_name in CONFIG_KEYS.items():
        parser.add_argument(f"--{section}.{key}", dest=f"flag:{field_name}",
                            metavar=key.upper())
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        values.update(load_config_file(args.config))
    for field_name in _FIELD_TYPES:
        raw = getattr(args, f"flag:{field_name}", None)
        if raw is not None:
            values[field_name] = _coerce(field_name, raw)
    if args.out_dir is not None:
        values["out_dir"] = args.out_dir
    if args.seed is not None:
        values["seed"] = args.seed
    config = RunConfig(**values)
    config.validate()
    return config


def _require(value, name: str) -> str:
    if not value:
        raise ValidationError(f"{name} must be set (config [paths] or flag)")
    return value


def _write_labels(path, row_indices, timestamps, flags) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_index", "timestamp", "label"])
        for i, ts, flag in zip(row_indices, timestamps, flags):
            writer.writerow([int(i), dataset.format_timestamp(ts), int(flag)])


def _read_labels(path) -> tuple[np.ndarray, list[str]]:
    """Returns (flags over all rows, timestamp strings per row)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                rows.append((int(row[0]), row[1], bool(int(row[2]))))
    rows.sort()
    n = rows[-1][0] + 1 if rows else 0
    flags = np.zeros(n, dtype=bool)
    stamps = [""] * n
    for i, ts, flag in rows:
        flags[i] = flag
        stamps[i] = ts
    return flags, stamps


def cmd_prepare(config: RunConfig) -> int:
    sensor_csv = _require(config.sensor_csv, "paths.sensor_csv")
    log = dataset.load_sensor_csv(sensor_csv)
    missing_before = int(np.isnan(log.values).sum())
    log, dropped = preprocess.drop_empty_channels(log)
    log = preprocess.impute_cascade(log)

    if config.fault_csv:
        schedule = dataset.load_fault_intervals(config.fault_csv)
    else:
        schedule = dataset.FaultSchedule()
    labels = dataset.label_samples(log, schedule)

    plan = preprocess.plan_split(
        labels, config.train_ratio, config.validation_ratio, config.seed
    )
    scaler = preprocess.fit_scaler(log.values, plan.pool_indices, labels)
    scaled = preprocess.apply_scaler(log.values, scaler)

    out = config.out_path
    out.mkdir(parents=True, exist_ok=True)
    preprocess.write_matrix_csv(scaled[plan.train_indices], log.channel_names,
                                out / "train.csv")
    preprocess.write_matrix_csv(scaled[plan.validation_indices], log.channel_names,
                                out / "val.csv")
    preprocess.write_matrix_csv(scaled[plan.test_indices], log.channel_names,
                                out / "test.csv")
    preprocess.write_split_plan(plan, out / "split_plan.csv")
    _write_labels(out / "labels.csv", np.arange(log.n_samples), log.timestamps,
                  labels)
    with open(out / "scaler.json", "w", encoding="utf-8") as fh:
        json.dump({
            "min": scaler.minimum.tolist(),
            "max": scaler.maximum.tolist(),
            "fitted_on": scaler.fitted_on,
        }, fh, indent=1)
        fh.write("\n")

    summary = {
        "rows": log.n_samples,
        "channels_kept": log.n_channels,
        "dropped_channels": dropped,
        "missing_cells_before": missing_before,
        "missing_cells_after": int(np.isnan(scaled).sum()),
        "fault_rows": int(labels.sum()),
        "train_rows": int(plan.train_indices.size),
        "validation_rows": int(plan.validation_indices.size),
        "test_rows": int(plan.test_indices.size),
    }
    with open(out / "prep_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    print(f"prepared {log.n_samples} rows x {log.n_channels} channels "
          f"({summary['missing_cells_after']} missing cells remain); "
          f"train/val/test = {summary['train_rows']}/"
          f"{summary['validation_rows']}/{summary['test_rows']}")
    return EXIT_OK


def _load_prepared(config: RunConfig):
    out = config.out_path
    plan = preprocess.read_split_plan(out / "split_plan.csv",
                                      config.train_ratio, config.validation_ratio)
    train, names = preprocess.read_matrix_csv(out / "train.csv")
    val, _ = preprocess.read_matrix_csv(out / "val.csv")
    test, _ = preprocess.read_matrix_csv(out / "test.csv")
    labels, stamps = _read_labels(out / "labels.csv")
    with open(out / "scaler.json", encoding="utf-8") as fh:
        sdoc = json.load(fh)
    scaler = preprocess.ScalerParams(
        np.asarray(sdoc["min"], dtype=np.float64),
        np.asarray(sdoc["max"], dtype=np.float64),
        int(sdoc["fitted_on"]),
    )
    return plan, train, val, test, names, labels, stamps, scaler


def _assemble_rows(n: int, d: int, parts: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    full = np.full((n, d), np.nan)
    for rows, matrix in parts:
        full[rows] = matrix
    return full


def _pool_windows(config: RunConfig, plan: SplitPlan, train, val, labels):
    """Healthy training-pool windows plus the seeded window-level val split."""
    n, d = labels.size, train.shape[1]
    full = _assemble_rows(n, d, [(plan.train_indices, train),
                                 (plan.validation_indices, val)])
    windows, wlabels, ends = preprocess.partition_windows(
        full, labels, plan.pool_indices, config.window_spec()
    )
    if windows.shape[0] < 2:
        raise ValidationError("training pool is too short to window")
    rng = np.random.default_rng(config.seed)
    n_val = int(config.validation_ratio * windows.shape[0])
    val_pick = np.sort(rng.choice(windows.shape[0], size=n_val, replace=False))
    mask = np.zeros(windows.shape[0], dtype=bool)
    mask[val_pick] = True
    return (windows[~mask], wlabels[~mask], ends[~mask],
            windows[mask], wlabels[mask])


def cmd_train(config: RunConfig) -> int:
    plan, train_m, val_m, _test, names, labels, _stamps, scaler = _load_prepared(config)
    tconfig = config.train_config()
    if config.architecture == "dense_ae":
        model = DenseAutoencoder(d=train_m.shape[1], seed=config.seed)
        trained, report, cov = training.train(
            model, train_m, val_m, tconfig,
            train_labels=labels[plan.train_indices],
            val_labels=labels[plan.validation_indices],
        )
    else:
        wtrain, wtrain_labels, _ends, wval, wval_labels = _pool_windows(
            config, plan, train_m, val_m, labels
        )
        model = LstmAutoencoder(d=train_m.shape[1],
                                window_length=config.window_length,
                                seed=config.seed)
        trained, report, cov = training.train(
            model, wtrain, wval, tconfig,
            train_labels=wtrain_labels, val_labels=wval_labels,
        )

    out = config.out_path
    out.mkdir(parents=True, exist_ok=True)
    bundle = ModelBundle(trained, scaler, covariance=cov)
    save_model(bundle, config.model_path)
    report.write_csv(out / "train_report.csv")
    print(f"trained {config.architecture} for {report.epochs_run} epochs "
          f"({report.stop_reason}); best epoch {report.best_epoch}, "
          f"model -> {config.model_path}")
    return EXIT_OK


def _training_scores(config: RunConfig, bundle: ModelBundle):
    plan, train_m, val_m, _test, _names, labels, _stamps, _scaler = \
        _load_prepared(config)
    model = bundle.model
    if isinstance(model, LstmAutoencoder):
        wtrain, _wl, ends, _wv, _wvl = _pool_windows(config, plan, train_m, val_m,
                                                     labels)
        return detector.score_window_mse(model, wtrain, ends, from_training=True)
    if config.loss == "mahalanobis":
        if bundle.covariance is None:
            raise ValidationError(
                "model file has no covariance block; retrain with loss=mahalanobis"
            )
        return detector.score_mahalanobis(model, bundle.covariance, train_m,
                                          plan.train_indices, from_training=True)
    return detector.score_pointwise_mse(model, train_m, plan.train_indices,
                                        from_training=True)


def cmd_threshold(config: RunConfig) -> int:
    bundle = load_model(config.model_path)
    scores = _training_scores(config, bundle)
    bundle.threshold = detector.fit_threshold(scores, config.alpha)
    save_model(bundle, config.model_path)
    print(f"threshold tau={bundle.threshold.tau!r} "
          f"(alpha={config.alpha}, kind={bundle.threshold.kind}, "
          f"fitted on {bundle.threshold.fitted_on} scores)")
    return EXIT_OK


def _test_scores(config: RunConfig, bundle: ModelBundle):
    """Returns (ScoreSeries, timestamps per score row)."""
    plan, train_m, val_m, test_m, _names, labels, stamps, _scaler = \
        _load_prepared(config)
    if test_m.shape[0] == 0:
        raise ValidationError("test partition is empty")
    model = bundle.model
    if isinstance(model, LstmAutoencoder):
        full = _assemble_rows(labels.size, test_m.shape[1],
                              [(plan.test_indices, test_m)])
        windows, _wl, ends = preprocess.partition_windows(
            full, labels, plan.test_indices, config.window_spec()
        )
        if windows.shape[0] == 0:
            raise ValidationError("test partition is too short to window")
        series = detector.score_window_mse(model, windows, ends)
    else:
        # follow the fitted threshold's score kind; before a threshold
        # exists, the configured loss decides
        if bundle.threshold is not None:
            mahalanobis = bundle.threshold.kind == "mahalanobis"
        else:
            mahalanobis = config.loss == "mahalanobis"
        if mahalanobis:
            if bundle.covariance is None:
                raise ValidationError("model file has no covariance block")
            series = detector.score_mahalanobis(model, bundle.covariance, test_m,
                                                plan.test_indices)
        else:
            series = detector.score_pointwise_mse(model, test_m,
                                                  plan.test_indices)
    return series, [stamps[i] for i in series.indices]


def cmd_detect(config: RunConfig) -> int:
    bundle = load_model(config.model_path)
    if bundle.threshold is None:
        raise ValidationError("model has no fitted threshold; run `threshold` first")
    series, stamps = _test_scores(config, bundle)
    flags = detector.detect(series, bundle.threshold)
    out = config.out_path
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "scores.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "timestamp", "score", "flagged"])
        for i, ts, score, flag in zip(series.indices, stamps, series.scores, flags):
            writer.writerow([int(i), ts, repr(float(score)), int(flag)])
    print(f"scored {len(series)} test items ({series.kind}); "
          f"{int(flags.sum())} flagged")
    return EXIT_OK


def cmd_eval(config: RunConfig) -> int:
    bundle = load_model(config.model_path)
    if bundle.threshold is None:
        raise ValidationError("model has no fitted threshold; run `threshold` first")
    out = config.out_path
    plan, _train, _val, test_m, _names, labels, _stamps, _scaler = \
        _load_prepared(config)

    indices, flags = [], []
    with open(out / "scores.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                indices.append(int(row[0]))
                flags.append(bool(int(row[3])))
    indices = np.array(indices, dtype=np.int64)
    flags = np.array(flags, dtype=bool)

    if bundle.threshold.kind == "mse_window":
        full = _assemble_rows(labels.size, test_m.shape[1],
                              [(plan.test_indices, test_m)])
        _w, wlabels, ends = preprocess.partition_windows(
            full, labels, plan.test_indices, config.window_spec()
        )
        if ends.shape != indices.shape or (ends != indices).any():
            raise ValidationError(
                "scores.csv does not align with the test windows; re-run detect"
            )
        truth = wlabels
    else:
        truth = labels[indices]
    if truth.shape != flags.shape:
        raise ValidationError("flags and labels are misaligned; re-run detect")

    report = evaluation.metrics(evaluation.confusion(flags, truth))
    evaluation.write_metrics_csv(report, out / "metrics.csv")
    table = evaluation.format_metrics_table(report)
    with open(out / "metrics.txt", "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    return EXIT_OK


def cmd_synth(config: RunConfig) -> int:
    plant = synthplant.default_config(
        n_channels=config.synth_channels,
        n_samples=config.synth_samples,
        seed=config.seed,
        gap_fraction=config.synth_gap_fraction,
    )
    log, schedule = synthplant.generate(plant)
    out = config.out_path
    out.mkdir(parents=True, exist_ok=True)
    sensor_path = Path(config.sensor_csv) if config.sensor_csv else out / "sensor.csv"
    fault_path = Path(config.fault_csv) if config.fault_csv else out / "faults.csv"
    dataset.write_sensor_csv(log, sensor_path)
    dataset.write_fault_intervals(schedule, fault_path)
    print(f"wrote {log.n_samples} rows x {log.n_channels} channels to "
          f"{sensor_path} and {len(schedule.intervals)} fault intervals to "
          f"{fault_path}")
    return EXIT_OK


def cmd_export_latent(config: RunConfig) -> int:
    bundle = load_model(config.model_path)
    plan, train_m, val_m, test_m, _names, labels, stamps, _scaler = \
        _load_prepared(config)
    model = bundle.model
    if isinstance(model, LstmAutoencoder):
        full = _assemble_rows(labels.size, test_m.shape[1],
                              [(plan.test_indices, test_m)])
        windows, _wl, ends = preprocess.partition_windows(
            full, labels, plan.test_indices, config.window_spec()
        )
        latent = detector.extract_latent(model, windows)
        indices = ends
    else:
        latent = detector.extract_latent(model, test_m)
        indices = plan.test_indices
    out = config.out_path
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "latent.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        width = latent.shape[1]
        writer.writerow(["index", "timestamp"] + [f"z{k + 1}" for k in range(width)])
        for i, row in zip(indices, latent):
            writer.writerow([int(i), stamps[int(i)]] +
                            [repr(float(v)) for v in row])
    print(f"exported {latent.shape[0]} latent vectors "
          f"(width {latent.shape[1]}) to {out / 'latent.csv'}")
    return EXIT_OK


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "threshold": cmd_threshold,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "export-latent": cmd_export_latent,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    sys.exit(main())
