import numpy as np
import pytest

from evaluation.metrics import EvalReport, confusion_matrix, ind_macro_f1, per_class_f1
from intent.dataset import OOD_INDEX

O = OOD_INDEX


def test_confusion_matrix_puts_ood_last():
    cm = confusion_matrix([0, 1, O, O, 1], [0, O, O, 1, 1], 2)
    assert cm.tolist() == [
        [1, 0, 0],
        [0, 1, 1],
        [0, 1, 1],
    ]


def test_confusion_matrix_rejects_out_of_range():
    with pytest.raises(ValueError):
        confusion_matrix([0, 3], [0, 1], 2)
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0], 2)


def test_per_class_f1():
    cm = np.array([[3, 1, 0], [0, 2, 2], [1, 0, 1]])
    f1 = per_class_f1(cm)
    assert f1[0] == pytest.approx(2 * 3 / (2 * 3 + 1 + 1))
    assert f1[1] == pytest.approx(2 * 2 / (2 * 2 + 1 + 2))
    assert f1[2] == pytest.approx(2 * 1 / (2 * 1 + 2 + 1))
    assert ind_macro_f1(cm) == pytest.approx((f1[0] + f1[1]) / 2)


def test_report_values():
    report = EvalReport.from_predictions([0, 0, 1, 1, O, O, O], [0, 1, 1, O, O, O, 0], 2)
    assert report.ind_acc == pytest.approx(2 / 4)
    assert report.ood_recall == pytest.approx(2 / 3)
    # OOD: TP=2, FP=1, FN=1
    assert report.ood_f1 == pytest.approx(4 / 6)
    assert report.absent_classes == []
    assert set(report.as_dict()) == {"ind_acc", "ind_f1", "ood_recall", "ood_f1"}


def test_perfect_predictions():
    truth = [0, 1, 2, O, O]
    report = EvalReport.from_predictions(truth, truth, 3)
    assert report.as_dict() == {"ind_acc": 1.0, "ind_f1": 1.0, "ood_recall": 1.0, "ood_f1": 1.0}


def test_absent_class_counts_as_zero_f1():
    report = EvalReport.from_predictions([0, 0, O], [0, 0, O], 2)
    assert report.absent_classes == [1]
    assert report.ind_macro_f1 == pytest.approx(0.5)


def test_no_ood_examples_gives_zero_recall():
    report = EvalReport.from_predictions([0, 1], [0, 1], 2)
    assert report.ood_recall == 0.0
    assert report.ood_f1 == 0.0


def test_bad_confusion_shape():
    with pytest.raises(ValueError):
        EvalReport.from_confusion(np.zeros((2, 3), dtype=int))
