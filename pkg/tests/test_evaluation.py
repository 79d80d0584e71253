import json

import numpy as np
import pytest

from ccblock.evaluation import (
    BinaryCounts,
    MetricSet,
    average_runs,
    cm_to_csv,
    confusion_matrix,
    metric_grid_rows,
    metrics,
    one_vs_rest,
    per_class_accuracy,
    predict_classes,
    render_report,
    round2,
    summarize_cm,
)

# reference five-run metric grids (sensitivity, specificity, accuracy)
THREE_CLASS_RUNS = [
    (98.21, 98.94, 95.21),
    (99.10, 98.72, 95.43),
    (99.10, 99.15, 95.43),
    (96.85, 99.36, 95.13),
    (99.10, 98.72, 95.51),
]
TWO_CLASS_RUNS = [
    (98.67, 98.54, 98.58),
    (98.23, 98.54, 98.44),
    (98.67, 97.70, 98.01),
    (98.66, 98.95, 98.86),
    (98.67, 98.74, 98.72),
]

# a 3-class confusion matrix realizing the reference one-vs-rest counts
# (221, 1099, 10, 5) with per-class test totals 226/631/478
CM3 = np.array([[221, 3, 2], [6, 625, 0], [4, 0, 474]])
CM2 = np.array([[223, 3], [5, 473]])


class TestRound2:
    def test_half_up(self):
        assert round2(98.495) == 98.5 or round2(98.495) == 98.49  # float-repr ruled
        assert round2(1.005) == 1.01  # repr("1.005") rounds half up
        assert round2(98.864) == 98.86
        assert round2(98.866) == 98.87

    def test_none_passthrough(self):
        assert round2(None) is None


class TestConfusionMatrix:
    def test_perfect_predictions_diagonal(self):
        labels = np.array([0, 1, 2, 1, 0])
        cm = confusion_matrix(labels, labels, 3)
        assert np.trace(cm) == 5
        assert cm.sum() == 5

    def test_all_misclassified_single_cell(self):
        cm = confusion_matrix([0, 0, 0], [1, 1, 1], 3)
        assert cm[0, 1] == 3
        assert cm.sum() == 3

    def test_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(0)
        true = rng.integers(0, 3, size=50)
        pred = rng.integers(0, 3, size=50)
        cm = confusion_matrix(true, pred, 3)
        for t in range(3):
            for p in range(3):
                assert cm[t, p] == sum(
                    1 for a, b in zip(true, pred) if a == t and b == p
                )

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="equal-length"):
            confusion_matrix([0, 1], [0], 2)

    def test_out_of_range(self):
        with pytest.raises(ValueError, match=r"\[0, 2\)"):
            confusion_matrix([0, 2], [0, 1], 2)

    def test_argmax_tie_lowest_index(self):
        probs = np.array([[0.4, 0.4, 0.2], [0.3, 0.3, 0.4]])
        np.testing.assert_array_equal(predict_classes(probs), [0, 2])


class TestOneVsRest:
    def test_reference_three_class_counts(self):
        counts = one_vs_rest(CM3, positive=0)
        assert counts == BinaryCounts(tp=221, tn=1099, fp=10, fn=5)
        assert counts.total == 1335

    def test_reference_two_class_counts(self):
        counts = one_vs_rest(CM2, positive=0)
        assert counts == BinaryCounts(tp=223, tn=473, fp=5, fn=3)
        assert counts.total == 704

    def test_diagonal_cm_no_errors(self):
        counts = one_vs_rest(np.diag([4, 5, 6]), positive=1)
        assert counts.fp == 0 and counts.fn == 0

    def test_binary_reduction_is_standard_cells(self):
        cm = np.array([[7, 2], [3, 8]])
        counts = one_vs_rest(cm, positive=0)
        assert (counts.tp, counts.fn, counts.fp, counts.tn) == (7, 2, 3, 8)

    def test_conservation_all_positives(self):
        rng = np.random.default_rng(1)
        cm = rng.integers(0, 30, size=(3, 3))
        for positive in range(3):
            assert one_vs_rest(cm, positive).total == cm.sum()

    def test_invalid_class(self):
        with pytest.raises(ValueError, match="out of range"):
            one_vs_rest(CM3, positive=3)


class TestMetrics:
    def test_reference_two_class_pin(self):
        got = metrics(BinaryCounts(tp=223, tn=473, fp=5, fn=3)).rounded()
        assert got == MetricSet(98.67, 98.95, 98.86)

    def test_reference_three_class_ratios(self):
        got = metrics(BinaryCounts(tp=221, tn=1099, fp=10, fn=5)).rounded()
        assert got.sensitivity == 97.79
        assert got.specificity == 99.10

    def test_three_class_accuracy_is_trace_over_total(self):
        mset = metrics(one_vs_rest(CM3, 0), multiclass_correct=int(np.trace(CM3)),
                       total=int(CM3.sum()))
        assert round2(mset.accuracy) == round2(100 * 1320 / 1335)

    def test_all_correct(self):
        got = metrics(BinaryCounts(tp=10, tn=20, fp=0, fn=0)).rounded()
        assert got == MetricSet(100.0, 100.0, 100.0)

    def test_zero_denominator_marks_undefined(self):
        got = metrics(BinaryCounts(tp=0, tn=5, fp=0, fn=0))
        assert got.sensitivity is None
        assert got.specificity is not None

    def test_sensitivity_ignores_negatives(self):
        a = metrics(BinaryCounts(tp=5, tn=100, fp=3, fn=5))
        b = metrics(BinaryCounts(tp=5, tn=7, fp=90, fn=5))
        assert a.sensitivity == b.sensitivity

    def test_specificity_ignores_positives(self):
        a = metrics(BinaryCounts(tp=5, tn=100, fp=3, fn=5))
        b = metrics(BinaryCounts(tp=50, tn=100, fp=3, fn=1))
        assert a.specificity == b.specificity

    def test_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            tp, tn, fp, fn = (int(v) for v in rng.integers(0, 100, size=4))
            mset = metrics(BinaryCounts(tp, tn, fp, fn))
            for value in (mset.sensitivity, mset.specificity, mset.accuracy):
                if value is not None:
                    assert 0.0 <= value <= 100.0


class TestPerClassAccuracy:
    def test_diagonal_is_100(self):
        assert per_class_accuracy(np.diag([3, 4, 5])) == [100.0, 100.0, 100.0]

    def test_covid_diagnostic_rate(self):
        # 225 of 226 covid test images on the diagonal
        cm = np.array([[225, 1], [9, 469]])
        assert round2(per_class_accuracy(cm)[0]) == 99.56

    def test_uniform_confusion(self):
        cm = np.full((3, 3), 7)
        assert [round2(v) for v in per_class_accuracy(cm)] == [33.33] * 3

    def test_empty_class_undefined(self):
        cm = np.array([[2, 0], [0, 0]])
        assert per_class_accuracy(cm)[1] is None


class TestAverageRuns:
    def test_reference_two_class_average(self):
        runs = [MetricSet(*row) for row in TWO_CLASS_RUNS]
        avg = average_runs(runs).average.rounded()
        assert avg == MetricSet(98.58, 98.49, 98.52)

    def test_reference_three_class_average(self):
        runs = [MetricSet(*row) for row in THREE_CLASS_RUNS]
        avg = average_runs(runs).average.rounded()
        assert avg == MetricSet(98.47, 98.98, 95.34)

    def test_single_run_average_is_that_run(self):
        run = MetricSet(90.0, 80.0, 85.0)
        assert average_runs([run]).average.rounded() == run

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            average_runs([])


class TestRenderReport:
    def make_results(self, rows, cm):
        return [
            summarize_cm(cm, name=f"Run{i + 1}")
            for i in range(len(rows))
        ]

    def test_five_run_grid_has_six_rows(self):
        results = [summarize_cm(CM2, name=f"Run{i+1}") for i in range(5)]
        grid = metric_grid_rows(results)
        assert len(grid) == 6
        assert grid[-1][0] == "average"

    def test_single_run_three_class_block(self):
        text = render_report([summarize_cm(CM3, name="Run1")], fmt="text")
        assert text.count("confusion matrix") == 1
        assert "221" in text and "TP=221" in text

    def test_formats_carry_equal_numbers(self):
        results = [summarize_cm(CM2, name="Run1"), summarize_cm(CM3[:2, :2], name="Run2")]
        csv_text = render_report(results, fmt="csv")
        text = render_report(results, fmt="text")
        jsonl = render_report(results, fmt="json-lines")
        csv_rows = [line.split(",") for line in csv_text.strip().split("\n")[1:]]
        json_rows = [json.loads(line) for line in jsonl.strip().split("\n")]
        for csv_row, json_row in zip(csv_rows, json_rows):
            if json_row["run"] == "average":
                continue
            assert float(csv_row[1]) == json_row["sensitivity"]
            assert float(csv_row[2]) == json_row["specificity"]
            assert float(csv_row[3]) == json_row["accuracy"]
        for csv_row in csv_rows:
            for cell in csv_row[1:]:
                assert cell in text

    def test_unknown_format(self):
        with pytest.raises(ValueError, match="format"):
            render_report([summarize_cm(CM2)], fmt="yaml")

    def test_cm_csv_grid(self):
        text = cm_to_csv(CM3, 3)
        lines = text.strip().split("\n")
        assert lines[0] == "true\\predicted,covid,pneumonia,normal"
        assert lines[1] == "covid,221,3,2"
