import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aedetect.errors import ValidationError
from aedetect.evaluation import (
    ConfusionMatrix,
    confusion,
    format_metrics_table,
    metrics,
    write_metrics_csv,
)


class TestConfusion:
    def test_all_true_positive(self):
        cm = confusion(np.ones(5, bool), np.ones(5, bool))
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == (5, 0, 0, 0)

    def test_all_missed(self):
        cm = confusion(np.zeros(3, bool), np.ones(3, bool))
        assert cm.fn == 3 and cm.tp == 0

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1,
                    max_size=80))
    def test_matches_scalar_loop(self, pairs):
        flags = np.array([p[0] for p in pairs])
        truth = np.array([p[1] for p in pairs])
        cm = confusion(flags, truth)
        tp = fp = tn = fn = 0
        for f, t in pairs:
            if f and t:
                tp += 1
            elif f and not t:
                fp += 1
            elif not f and t:
                fn += 1
            else:
                tn += 1
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == (tp, fp, tn, fn)
        assert cm.total == len(pairs)

    def test_swap_transposes(self):
        rng = np.random.default_rng(0)
        flags = rng.random(50) < 0.4
        truth = rng.random(50) < 0.3
        a = confusion(flags, truth)
        b = confusion(truth, flags)
        assert (a.tp, a.tn) == (b.tp, b.tn)
        assert (a.fp, a.fn) == (b.fn, b.fp)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            confusion(np.ones(2, bool), np.ones(3, bool))


class TestMetrics:
    def test_arithmetic_example(self):
        report = metrics(ConfusionMatrix(tp=9, fp=1, tn=10, fn=0))
        assert report.precision == pytest.approx(0.9)
        assert report.recall == pytest.approx(1.0)
        assert report.specificity == pytest.approx(10 / 11)
        assert report.f1 == pytest.approx(18 / 19)

    def test_reported_f1_consistency(self):
        # published precision/recall pairs must reproduce the published f1
        rows = [(0.933, 0.997, 0.964), (0.934, 0.999, 0.966),
                (0.935, 0.997, 0.965)]
        for p, r, f1 in rows:
            assert abs(2 * p * r / (p + r) - f1) <= 0.001

    def test_degenerate_precision_undefined(self):
        report = metrics(ConfusionMatrix(tp=0, fp=0, tn=4, fn=2))
        assert report.precision is None
        assert report.f1 is None
        assert report.recall == 0.0

    def test_all_undefined_when_empty_classes(self):
        report = metrics(ConfusionMatrix(tp=0, fp=0, tn=0, fn=0))
        assert report.precision is None and report.recall is None
        assert report.specificity is None and report.f1 is None

    def test_perfect_prediction_all_ones(self):
        report = metrics(ConfusionMatrix(tp=7, fp=0, tn=13, fn=0))
        assert report.precision == report.recall == report.specificity \
            == report.f1 == 1.0

    def test_zero_precision_recall_gives_undefined_f1(self):
        report = metrics(ConfusionMatrix(tp=0, fp=3, tn=5, fn=2))
        assert report.precision == 0.0 and report.recall == 0.0
        assert report.f1 is None

    def test_negative_count_rejected(self):
        with pytest.raises(ValidationError):
            ConfusionMatrix(tp=-1, fp=0, tn=0, fn=0)


class TestReports:
    def test_table_renders_undefined(self):
        report = metrics(ConfusionMatrix(tp=0, fp=0, tn=3, fn=0))
        table = format_metrics_table(report)
        assert "undefined" in table and "specificity" in table

    def test_csv_layout(self, tmp_path):
        report = metrics(ConfusionMatrix(tp=9, fp=1, tn=10, fn=0))
        path = tmp_path / "metrics.csv"
        write_metrics_csv(report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "metric,value"
        values = dict(line.split(",") for line in lines[1:])
        assert values["tp"] == "9"
        assert float(values["precision"]) == pytest.approx(0.9)

    def test_csv_undefined_is_empty_field(self, tmp_path):
        report = metrics(ConfusionMatrix(tp=0, fp=0, tn=1, fn=0))
        path = tmp_path / "metrics.csv"
        write_metrics_csv(report, path)
        values = dict(line.split(",") for line in
                      path.read_text().splitlines()[1:])
        assert values["precision"] == ""
