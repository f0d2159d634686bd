"""Metrics against an independent loop-based reference implementation."""

import numpy as np
import pytest

from modalfuse.errors import ParameterError, UndefinedMetricError, ValidationError
from modalfuse.metrics import (
    MetricReport,
    accuracy,
    balanced_accuracy_binary,
    balanced_accuracy_multiclass,
    classification_report,
    confusion_matrix,
    mae,
    report_for_classification,
)


# --- reference implementations: plain loops, no shared code -------------------

def ref_balanced_accuracy(pred, truth, k):
    recalls = []
    for c in range(k):
        hit = total = 0
        for p, t in zip(pred, truth):
            if t == c:
                total += 1
                if p == c:
                    hit += 1
        recalls.append(hit / total)
    return sum(recalls) / k


def ref_mae(pred, truth):
    return sum(abs(a - b) for a, b in zip(pred, truth)) / len(pred)


def ref_macro_f1(pred, truth, k):
    f1s = []
    for c in range(k):
        tp = sum(1 for p, t in zip(pred, truth) if p == c and t == c)
        fp = sum(1 for p, t in zip(pred, truth) if p == c and t != c)
        fn = sum(1 for p, t in zip(pred, truth) if p != c and t == c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return sum(f1s) / k


def _random_labels(rng, k, n):
    # rejection-sample until every class appears in truth
    while True:
        truth = rng.integers(0, k, size=n)
        if len(set(truth.tolist())) == k:
            return rng.integers(0, k, size=n), truth


def test_binary_matches_reference_on_1000_random_sets():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        pred, truth = _random_labels(rng, 2, int(rng.integers(4, 60)))
        assert abs(balanced_accuracy_binary(pred, truth) - ref_balanced_accuracy(pred, truth, 2)) < 1e-12


def test_multiclass_matches_reference_on_1000_random_sets():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        k = int(rng.integers(2, 6))
        pred, truth = _random_labels(rng, k, int(rng.integers(2 * k, 80)))
        got = balanced_accuracy_multiclass(pred, truth, k)
        assert abs(got - ref_balanced_accuracy(pred, truth, k)) < 1e-12


def test_mae_matches_reference_on_1000_random_sets():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        pred = rng.normal(size=n)
        truth = rng.normal(size=n)
        assert abs(mae(pred, truth) - ref_mae(pred, truth)) < 1e-12


def test_macro_f1_matches_reference_on_1000_random_sets():
    rng = np.random.default_rng(10)
    for _ in range(1000):
        k = int(rng.integers(2, 5))
        pred, truth = _random_labels(rng, k, int(rng.integers(2 * k, 60)))
        got = classification_report(pred, truth, k).macro_f1
        assert abs(got - ref_macro_f1(pred, truth, k)) < 1e-12


def test_binary_hand_case():
    # TP=3, FN=1, TN=4, FP=2 -> (0.75 + 4/6) / 2
    truth = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
    pred = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0]
    assert balanced_accuracy_binary(pred, truth) == pytest.approx(0.5 * (0.75 + 4 / 6), abs=1e-15)


def test_mae_hand_case():
    assert mae([1, 2, 0], [0, 2, 1]) == pytest.approx(2 / 3, abs=1e-15)
    assert mae([1.5, 2.0], [1.5, 2.0]) == 0.0
    assert mae([1, 2, 0], [0, 2, 1]) == mae([0, 2, 1], [1, 2, 0])


def test_multiclass_mean_of_recalls():
    # class recalls 1.0, 0.5, 0.0
    truth = [0, 0, 1, 1, 2, 2]
    pred = [0, 0, 1, 0, 0, 1]
    assert balanced_accuracy_multiclass(pred, truth) == pytest.approx(0.5)


def test_binary_equals_multiclass_at_k2():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        pred, truth = _random_labels(rng, 2, int(rng.integers(4, 40)))
        assert balanced_accuracy_binary(pred, truth) == pytest.approx(
            balanced_accuracy_multiclass(pred, truth, 2), abs=1e-15
        )


def test_relabeling_invariance():
    rng = np.random.default_rng(12)
    for _ in range(200):
        k = int(rng.integers(2, 5))
        pred, truth = _random_labels(rng, k, int(rng.integers(2 * k, 50)))
        perm = rng.permutation(k)
        assert balanced_accuracy_multiclass(perm[pred], perm[truth], k) == pytest.approx(
            balanced_accuracy_multiclass(pred, truth, k), abs=1e-15
        )


def test_perfect_and_degenerate_predictors():
    assert balanced_accuracy_binary([0, 1, 1], [0, 1, 1]) == 1.0
    # all-positive predictor on balanced truth
    assert balanced_accuracy_binary([1, 1, 1, 1], [1, 1, 0, 0]) == 0.5


def test_absent_class_raises():
    with pytest.raises(UndefinedMetricError):
        balanced_accuracy_binary([1, 1], [1, 1])
    with pytest.raises(UndefinedMetricError):
        balanced_accuracy_multiclass([0, 1, 2], [0, 1, 1], 3)


def test_input_validation():
    with pytest.raises(ParameterError):
        mae([], [])
    with pytest.raises(ValidationError):
        balanced_accuracy_binary([0, 1], [0, 1, 1])
    with pytest.raises(ValidationError):
        balanced_accuracy_binary([0, 2], [0, 1])


def test_confusion_matrix_layout():
    cm = confusion_matrix([0, 1, 1, 2], [0, 1, 2, 2], 3)
    assert cm[1, 1] == 1          # truth 1 predicted 1
    assert cm[2, 1] == 1          # truth 2 predicted 1
    assert cm.sum() == 4
    # constant predictor concentrates one column
    cm = confusion_matrix([1, 1, 1, 1], [0, 1, 0, 1], 2)
    assert cm[:, 0].sum() == 0 and cm[:, 1].sum() == 4


def test_classification_report_hand_case():
    # positive class: TP=3, FN=1, FP=2 -> precision 0.6, recall 0.75, F1 2*0.45/1.35
    truth = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
    pred = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0]
    rep = classification_report(pred, truth, 2)
    assert rep.precision[1] == pytest.approx(0.6)
    assert rep.recall[1] == pytest.approx(0.75)
    assert rep.f1[1] == pytest.approx(2 * 0.45 / 1.35)


def test_classification_report_perfect_diagonal():
    rep = classification_report([0, 1, 2], [0, 1, 2], 3)
    assert np.all(np.diag(rep.confusion) == 1)
    assert rep.macro_f1 == 1.0


def test_metric_report_round_trip():
    rep = report_for_classification([0, 1, 1, 0], [0, 1, 0, 0], 2)
    again = MetricReport.from_dict(rep.to_dict())
    assert again == rep
    assert 0.0 <= rep.balanced_accuracy <= 1.0
    assert rep.accuracy == accuracy([0, 1, 1, 0], [0, 1, 0, 0])
