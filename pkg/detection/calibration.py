"""
閾値 λ の適応的な決定

判定規則: S < λ なら IND（分類器の予測クラス）、S ≥ λ なら OOD。
検証データで IND macro-F1 が最大になる λ を、ソート済みユニークスコアの中点 + 両端の番兵から選ぶ。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from evaluation.metrics import confusion_matrix, ind_macro_f1
from intent.dataset import OOD_INDEX

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Threshold:
    """
    閾値と、そのときの検証 IND macro-F1
    """

    lam: float
    calibration_metric: float


def candidate_grid(scores) -> np.ndarray:
    """
    ユニークスコアの隣接中点 + (最小値 − 1) + (最大値 + 1)、昇順
    """
    uniq = np.unique(np.asarray(scores, dtype=np.float64))
    if uniq.size == 0:
        raise ValueError("スコアが空です")
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    return np.concatenate([[uniq[0] - 1.0], mids, [uniq[-1] + 1.0]])


def apply_threshold(scores, pred_class, lam: float) -> np.ndarray:
    """
    S < λ なら予測クラス、それ以外は OOD_INDEX
    """
    scores = np.asarray(scores, dtype=np.float64)
    return np.where(scores < lam, np.asarray(pred_class, dtype=np.int64), OOD_INDEX)


def ind_f1_at(lam: float, scores, true_class, pred_class, n_classes: int) -> float:
    """
    閾値 λ での IND macro-F1（棄却された IND はそのクラスの FN、受理された OOD は予測クラスの FP）
    """
    return ind_macro_f1(confusion_matrix(true_class, apply_threshold(scores, pred_class, lam), n_classes))


def calibrate(
    scores,
    true_class,
    pred_class,
    n_classes: int,
    use_ood: bool = True,
) -> Threshold:
    """
    検証 IND macro-F1 を最大にする λ を選ぶ（同点なら小さい λ）

    Args:
        scores: 検証例の OOD スコア
        true_class: 正解クラス番号（OOD は OOD_INDEX）
        pred_class: 分類器の IND 予測クラス
        n_classes: IND クラス数 C
        use_ood: 検証データの OOD 例を使うか（False なら IND 例だけで決める）

    Returns:
        Threshold
    """
    scores = np.asarray(scores, dtype=np.float64)
    true_class = np.asarray(true_class, dtype=np.int64)
    pred_class = np.asarray(pred_class, dtype=np.int64)
    if scores.size == 0:
        raise ValueError("検証データが空です")
    if not (scores.shape == true_class.shape == pred_class.shape):
        raise ValueError("スコア・正解・予測の件数が一致しません")
    if not np.all(np.isfinite(scores)):
        raise ValueError("検証スコアに非有限値が含まれています")

    is_ood = true_class == OOD_INDEX
    if not use_ood:
        keep = ~is_ood
        scores, true_class, pred_class, is_ood = scores[keep], true_class[keep], pred_class[keep], is_ood[keep]
    if not np.any(~is_ood):
        raise ValueError("検証データに IND 例が 1件もありません")

    grid = candidate_grid(scores)
    if not np.any(is_ood):
        lam = float(grid[-1])
        f1 = ind_f1_at(lam, scores, true_class, pred_class, n_classes)
        logger.info(f"検証データに OOD 例がないため λ を最大スコアの上 ({lam:.6f}) に置きます (IND F1={f1:.4f})")
        return Threshold(lam=lam, calibration_metric=f1)

    best_lam, best_f1 = float(grid[0]), -1.0
    for lam in grid:
        f1 = ind_f1_at(float(lam), scores, true_class, pred_class, n_classes)
        if f1 > best_f1:
            best_lam, best_f1 = float(lam), f1
    logger.info(f"λ を決定しました: λ={best_lam:.6f}, 検証 IND F1={best_f1:.4f} (候補 {grid.size}個)")
    return Threshold(lam=best_lam, calibration_metric=best_f1)
