import csv
import json

import numpy as np
import pytest

from aedetect.cli import (
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    RunConfig,
    main,
    resolve_config,
    build_parser,
)


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """A small but complete synthetic run: synth + prepare + dense train at
    reduced epochs, with a fitted threshold."""
    out = tmp_path_factory.mktemp("run")
    assert run(["synth", "--out-dir", out, "--seed", 5,
                "--synth.n_samples", 2500]) == EXIT_OK
    assert run(["prepare", "--out-dir", out, "--seed", 5,
                "--paths.sensor_csv", out / "sensor.csv",
                "--paths.fault_csv", out / "faults.csv"]) == EXIT_OK
    assert run(["train", "--out-dir", out, "--seed", 5,
                "--train.max_epochs", 6]) == EXIT_OK
    assert run(["threshold", "--out-dir", out, "--seed", 5]) == EXIT_OK
    return out


class TestConfigResolution:
    def test_defaults(self):
        config = resolve_config(build_parser().parse_args(["prepare"]))
        assert config.architecture == "dense_ae"
        assert config.alpha == 95.0
        assert config.batch_size == 256

    def test_file_and_flag_precedence(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[pipeline]\nalpha = 90\nseed = 3\n"
                       "[train]\nmax_epochs = 7\n")
        args = build_parser().parse_args(
            ["train", "--config", str(ini), "--pipeline.alpha", "99"])
        config = resolve_config(args)
        assert config.alpha == 99.0  # flag beats file
        assert config.seed == 3      # file beats default
        assert config.max_epochs == 7

    def test_global_seed_flag_wins(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[pipeline]\nseed = 3\n")
        args = build_parser().parse_args(["train", "--config", str(ini),
                                          "--seed", "11"])
        assert resolve_config(args).seed == 11

    def test_unknown_key_rejected(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[pipeline]\nbogus = 1\n")
        assert run(["prepare", "--config", ini]) == EXIT_VALIDATION

    def test_mahalanobis_requires_dense(self):
        config = RunConfig(architecture="lstm_ae", loss="mahalanobis")
        with pytest.raises(Exception):
            config.validate()

    def test_arch_default_learning_rates(self):
        dense = RunConfig(architecture="dense_ae")
        lstm = RunConfig(architecture="lstm_ae")
        assert dense.train_config().learning_rate == pytest.approx(3e-3)
        assert lstm.train_config().learning_rate == pytest.approx(1e-3)


class TestExitCodes:
    def test_missing_input_file_is_io_error(self, tmp_path):
        assert run(["prepare", "--out-dir", tmp_path,
                    "--paths.sensor_csv", tmp_path / "nope.csv"]) == EXIT_IO

    def test_non_uniform_timestamps_are_validation_error(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("timestamp,a\n2024-01-01 00:00,1\n2024-01-01 00:05,2\n")
        assert run(["prepare", "--out-dir", tmp_path,
                    "--paths.sensor_csv", bad]) == EXIT_VALIDATION

    def test_alpha_out_of_range(self, pipeline_dir):
        assert run(["threshold", "--out-dir", pipeline_dir,
                    "--pipeline.alpha", "150"]) == EXIT_VALIDATION

    def test_mahalanobis_lstm_config_error(self, pipeline_dir):
        assert run(["train", "--out-dir", pipeline_dir,
                    "--pipeline.architecture", "lstm_ae",
                    "--pipeline.loss", "mahalanobis"]) == EXIT_VALIDATION

    def test_detect_without_threshold(self, pipeline_dir, tmp_path):
        assert run(["train", "--out-dir", pipeline_dir, "--seed", 5,
                    "--train.max_epochs", 1,
                    "--paths.model_file", tmp_path / "raw.json"]) == EXIT_OK
        assert run(["detect", "--out-dir", pipeline_dir,
                    "--paths.model_file", tmp_path / "raw.json"]) \
            == EXIT_VALIDATION


class TestPrepare:
    def test_outputs_and_summary(self, pipeline_dir):
        for name in ("train.csv", "val.csv", "test.csv", "split_plan.csv",
                     "labels.csv", "scaler.json", "prep_summary.json"):
            assert (pipeline_dir / name).exists()
        summary = json.loads((pipeline_dir / "prep_summary.json").read_text())
        assert summary["missing_cells_after"] == 0
        assert summary["rows"] == 2500
        assert summary["train_rows"] + summary["validation_rows"] \
            + summary["test_rows"] == 2500

    def test_no_test_row_in_training_files(self, pipeline_dir):
        partitions = {}
        with open(pipeline_dir / "split_plan.csv") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row_index, part in reader:
                partitions.setdefault(part, set()).add(int(row_index))
        assert not partitions["train"] & partitions["test"]
        assert not partitions["val"] & partitions["test"]
        with open(pipeline_dir / "labels.csv") as fh:
            reader = csv.reader(fh)
            next(reader)
            fault_rows = {int(r[0]) for r in reader if r[2] == "1"}
        assert fault_rows <= partitions["test"]


class TestDetectAndEval:
    def test_scores_csv_one_row_per_test_item(self, pipeline_dir):
        assert run(["detect", "--out-dir", pipeline_dir, "--seed", 5]) == EXIT_OK
        with open(pipeline_dir / "scores.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["index", "timestamp", "score", "flagged"]
        summary = json.loads((pipeline_dir / "prep_summary.json").read_text())
        assert len(rows) - 1 == summary["test_rows"]

    def test_eval_writes_reports(self, pipeline_dir):
        assert run(["detect", "--out-dir", pipeline_dir, "--seed", 5]) == EXIT_OK
        assert run(["eval", "--out-dir", pipeline_dir, "--seed", 5]) == EXIT_OK
        text = (pipeline_dir / "metrics.txt").read_text()
        assert "recall" in text
        with open(pipeline_dir / "metrics.csv") as fh:
            values = dict(
                (r[0], r[1]) for r in csv.reader(fh) if r and r[0] != "metric")
        assert int(values["tp"]) + int(values["fn"]) > 0

    def test_perfect_flags_give_perfect_metrics(self, pipeline_dir):
        # overwrite the flag column with the ground truth, then re-evaluate
        with open(pipeline_dir / "labels.csv") as fh:
            reader = csv.reader(fh)
            next(reader)
            truth = {int(r[0]): r[2] for r in reader}
        with open(pipeline_dir / "scores.csv") as fh:
            rows = list(csv.reader(fh))
        for row in rows[1:]:
            row[3] = truth[int(row[0])]
        with open(pipeline_dir / "scores.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        assert run(["eval", "--out-dir", pipeline_dir, "--seed", 5]) == EXIT_OK
        with open(pipeline_dir / "metrics.csv") as fh:
            values = dict(
                (r[0], r[1]) for r in csv.reader(fh) if r and r[0] != "metric")
        assert float(values["precision"]) == 1.0
        assert float(values["recall"]) == 1.0
        assert float(values["specificity"]) == 1.0
        assert float(values["f1"]) == 1.0
        run(["detect", "--out-dir", pipeline_dir, "--seed", 5])  # restore


class TestThreshold:
    def test_alpha_100_is_max_train_score(self, pipeline_dir, tmp_path):
        model_file = tmp_path / "m100.json"
        model_bytes = (pipeline_dir / "model.json").read_bytes()
        model_file.write_bytes(model_bytes)
        assert run(["threshold", "--out-dir", pipeline_dir, "--seed", 5,
                    "--pipeline.alpha", "100",
                    "--paths.model_file", model_file]) == EXIT_OK
        doc = json.loads(model_file.read_text())
        # recompute max training score through the library
        from aedetect.models import load_model
        from aedetect import detector, preprocess
        bundle = load_model(model_file)
        plan = preprocess.read_split_plan(pipeline_dir / "split_plan.csv")
        train_m, _ = preprocess.read_matrix_csv(pipeline_dir / "train.csv")
        series = detector.score_pointwise_mse(bundle.model, train_m,
                                              from_training=True)
        assert doc["threshold"]["tau"] == series.scores.max()
        assert doc["threshold"]["alpha"] == 100.0


class TestDeterminism:
    def test_repeat_train_byte_identical(self, pipeline_dir, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for path in (a, b):
            assert run(["train", "--out-dir", pipeline_dir, "--seed", 5,
                        "--train.max_epochs", 3,
                        "--paths.model_file", path]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_repeat_synth_byte_identical(self, tmp_path):
        for sub in ("x", "y"):
            assert run(["synth", "--out-dir", tmp_path / sub, "--seed", 9,
                        "--synth.n_samples", 800]) == EXIT_OK
        assert (tmp_path / "x" / "sensor.csv").read_bytes() \
            == (tmp_path / "y" / "sensor.csv").read_bytes()
        assert (tmp_path / "x" / "faults.csv").read_bytes() \
            == (tmp_path / "y" / "faults.csv").read_bytes()

    def test_repeat_detect_byte_identical(self, pipeline_dir, tmp_path):
        assert run(["detect", "--out-dir", pipeline_dir, "--seed", 5]) == EXIT_OK
        first = (pipeline_dir / "scores.csv").read_bytes()
        assert run(["detect", "--out-dir", pipeline_dir, "--seed", 5]) == EXIT_OK
        assert (pipeline_dir / "scores.csv").read_bytes() == first


class TestLatentExport:
    def test_latent_csv_has_eight_z_columns(self, pipeline_dir):
        assert run(["export-latent", "--out-dir", pipeline_dir, "--seed", 5]) \
            == EXIT_OK
        with open(pipeline_dir / "latent.csv") as fh:
            header = next(csv.reader(fh))
        assert header == ["index", "timestamp"] + [f"z{k}" for k in range(1, 9)]


class TestLstmPipeline:
    def test_window_pipeline_round_trip(self, pipeline_dir, tmp_path):
        model_file = tmp_path / "lstm.json"
        base = ["--out-dir", pipeline_dir, "--seed", 5,
                "--pipeline.architecture", "lstm_ae",
                "--paths.model_file", model_file]
        assert run(["train"] + base + ["--train.max_epochs", 2]) == EXIT_OK
        assert run(["threshold"] + base) == EXIT_OK
        assert run(["detect"] + base) == EXIT_OK
        assert run(["eval"] + base) == EXIT_OK
        doc = json.loads(model_file.read_text())
        assert doc["architecture"] == "lstm_ae"
        assert doc["T"] == 5
        assert doc["threshold"]["kind"] == "mse_window"


class TestMahalanobisPipeline:
    def test_distance_pipeline_round_trip(self, pipeline_dir, tmp_path):
        model_file = tmp_path / "maha.json"
        base = ["--out-dir", pipeline_dir, "--seed", 5,
                "--pipeline.loss", "mahalanobis",
                "--paths.model_file", model_file]
        assert run(["train"] + base + ["--train.max_epochs", 8]) == EXIT_OK
        doc = json.loads(model_file.read_text())
        assert "covariance" in doc
        assert run(["threshold"] + base) == EXIT_OK
        assert run(["detect"] + base) == EXIT_OK
        assert run(["eval"] + base) == EXIT_OK
        doc = json.loads(model_file.read_text())
        assert doc["threshold"]["kind"] == "mahalanobis"
