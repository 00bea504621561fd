"""
(C+1) クラス混同行列と評価指標

OOD はクラス番号 C として扱う。入力のクラス番号では OOD_INDEX (−1) も受け付ける。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from intent.dataset import OOD_INDEX

logger = logging.getLogger(__name__)


def to_confusion_index(classes, n_classes: int) -> np.ndarray:
    """
    OOD_INDEX を C に置き換えたクラス番号
    """
    classes = np.asarray(classes, dtype=np.int64)
    return np.where(classes == OOD_INDEX, n_classes, classes)


def confusion_matrix(true, pred, n_classes: int) -> np.ndarray:
    """
    行 = 正解、列 = 予測の (C+1)×(C+1) 件数行列
    """
    t = to_confusion_index(true, n_classes)
    p = to_confusion_index(pred, n_classes)
    if t.shape != p.shape:
        raise ValueError("正解と予測の件数が一致しません")
    size = n_classes + 1
    if np.any((t < 0) | (t >= size)) or np.any((p < 0) | (p >= size)):
        raise ValueError("クラス番号が範囲外です")
    return np.bincount(t * size + p, minlength=size * size).reshape(size, size)


def per_class_f1(confusion: np.ndarray) -> np.ndarray:
    """
    各クラスの F1 = 2TP / (2TP + FP + FN)（分母 0 なら 0）
    """
    confusion = np.asarray(confusion, dtype=np.int64)
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    denom = 2.0 * tp + fp + fn
    return np.where(denom > 0, 2.0 * tp / np.where(denom > 0, denom, 1.0), 0.0)


def ind_macro_f1(confusion: np.ndarray) -> float:
    """
    IND クラス（先頭 C クラス）の F1 の単純平均
    """
    return float(np.mean(per_class_f1(confusion)[:-1]))


@dataclass(eq=False)
class EvalReport:
    """
    IND ACC / IND macro-F1 / OOD Recall / OOD F1 と混同行列
    """

    ind_acc: float
    ind_macro_f1: float
    ood_recall: float
    ood_f1: float
    confusion: np.ndarray
    absent_classes: List[int]

    @classmethod
    def from_confusion(cls, confusion) -> "EvalReport":
        """
        混同行列から4指標を計算

        正解にも予測にも現れないクラスは F1 = 0 とし、absent_classes に記録する。
        """
        confusion = np.asarray(confusion, dtype=np.int64)
        c = confusion.shape[0] - 1
        if confusion.shape != (c + 1, c + 1) or c < 1:
            raise ValueError(f"混同行列は (C+1)×(C+1) である必要があります: {confusion.shape}")
        f1 = per_class_f1(confusion)
        ind_total = int(confusion[:c].sum())
        ind_correct = int(np.trace(confusion[:c, :c]))
        ood_total = int(confusion[c].sum())
        absent = [k for k in range(c) if confusion[k].sum() == 0 and confusion[:, k].sum() == 0]
        if absent:
            logger.warning(f"正解にも予測にも現れない IND クラスがあります（F1=0 として扱います）: {absent}")
        return cls(
            ind_acc=ind_correct / ind_total if ind_total else 0.0,
            ind_macro_f1=float(np.mean(f1[:c])),
            ood_recall=float(confusion[c, c]) / ood_total if ood_total else 0.0,
            ood_f1=float(f1[c]),
            confusion=confusion,
            absent_classes=absent,
        )

    @classmethod
    def from_predictions(cls, true, pred, n_classes: int) -> "EvalReport":
        return cls.from_confusion(confusion_matrix(true, pred, n_classes))

    def as_dict(self) -> Dict[str, float]:
        return {
            "ind_acc": self.ind_acc,
            "ind_f1": self.ind_macro_f1,
            "ood_recall": self.ood_recall,
            "ood_f1": self.ood_f1,
        }


METRIC_NAMES = ("ind_acc", "ind_f1", "ood_recall", "ood_f1")
