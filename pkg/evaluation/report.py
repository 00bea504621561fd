"""
テストデータでの評価・スコア分布ヒストグラム・OOD→IND 類似度プロファイル
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from detection.knn_index import KnnIndex, embed
from detection.pipeline import DetectionPipeline
from evaluation.metrics import EvalReport
from intent.dataset import FeatureSet
from intent.files import atomic_write_text

logger = logging.getLogger(__name__)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _check_vocab(pipeline: DetectionPipeline, data: FeatureSet) -> None:
    if tuple(data.ind_labels) != tuple(pipeline.meta.ind_labels):
        raise ValueError("データのラベル語彙が学習時と一致しません")


# --------------------------------------------------------------------------- #
# 評価
# --------------------------------------------------------------------------- #
def evaluate(pipeline: DetectionPipeline, test_data: FeatureSet, classify: Optional[str] = None) -> EvalReport:
    """
    (C+1) クラスとして評価

    Args:
        pipeline: 較正済みパイプライン
        test_data: テストデータ（IND と OOD）
        classify: 分類モード（None ならパイプライン設定）

    Returns:
        EvalReport
    """
    if len(test_data) == 0:
        raise ValueError("テストデータが空です")
    _check_vocab(pipeline, test_data)
    _, pred = pipeline.predict(test_data.features, classify)
    report = EvalReport.from_predictions(test_data.labels, pred, pipeline.n_classes)
    logger.info(
        f"評価: IND ACC={report.ind_acc:.4f}, IND F1={report.ind_macro_f1:.4f}, "
        f"OOD Recall={report.ood_recall:.4f}, OOD F1={report.ood_f1:.4f} ({len(test_data)}件)"
    )
    return report


def metrics_csv(report: EvalReport) -> str:
    """
    axis,seed,指標...（単発の評価では axis と seed は空）
    """
    values = report.as_dict()
    return _csv_text(["axis", "seed"] + list(values), [["", ""] + [repr(v) for v in values.values()]])


def confusion_csv(report: EvalReport, ind_labels, ood_marker: str) -> str:
    """
    混同行列の CSV（行 = 正解、列 = 予測、最後のクラスが OOD）
    """
    names = list(ind_labels) + [ood_marker]
    rows = [[name] + [int(v) for v in row] for name, row in zip(names, report.confusion)]
    return _csv_text(["true\\pred"] + names, rows)


# --------------------------------------------------------------------------- #
# ヒストグラム
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class HistogramSpec:
    """
    ビン数と範囲（None なら全スコアの最小〜最大）
    """

    n_bins: int = 50
    range: Optional[Tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.n_bins < 1:
            raise ValueError(f"n_bins は正の整数である必要があります: {self.n_bins}")
        if self.range is not None and not self.range[0] < self.range[1]:
            raise ValueError(f"範囲は lo < hi である必要があります: {self.range}")


@dataclass(eq=False)
class ScoreHistograms:
    """
    IND / OOD 共通のビン境界と各群の件数
    """

    edges: np.ndarray
    count_ind: np.ndarray
    count_ood: np.ndarray

    def rows(self):
        for lo, hi, ci, co in zip(self.edges[:-1], self.edges[1:], self.count_ind, self.count_ood):
            yield [repr(float(lo)), repr(float(hi)), int(ci), int(co)]

    def to_csv(self) -> str:
        return _csv_text(["bin_lo", "bin_hi", "count_ind", "count_ood"], self.rows())


def histogram_scores(ind_scores, ood_scores, spec: HistogramSpec) -> ScoreHistograms:
    """
    2群のスコアを共通のビンで数える（範囲外の値は端のビンに入れる）
    """
    ind_scores = np.asarray(ind_scores, dtype=np.float64)
    ood_scores = np.asarray(ood_scores, dtype=np.float64)
    all_scores = np.concatenate([ind_scores, ood_scores])
    if all_scores.size == 0:
        raise ValueError("スコアが空です")
    edges = np.histogram_bin_edges(all_scores, bins=spec.n_bins, range=spec.range)
    lo, hi = edges[0], edges[-1]
    count_ind, _ = np.histogram(np.clip(ind_scores, lo, hi), bins=edges)
    count_ood, _ = np.histogram(np.clip(ood_scores, lo, hi), bins=edges)
    return ScoreHistograms(edges=edges, count_ind=count_ind, count_ood=count_ood)


def score_histograms(pipeline: DetectionPipeline, data: FeatureSet, spec: HistogramSpec) -> ScoreHistograms:
    """
    IND 例と OOD 例のスコア分布（λ は使わない）
    """
    if len(data) == 0:
        raise ValueError("データが空です")
    scores = pipeline.scores(data.features)
    return histogram_scores(scores[~data.ood_mask], scores[data.ood_mask], spec)


def overlap_coefficient(hist: ScoreHistograms) -> float:
    """
    正規化した2つのヒストグラムの重なり Σ_b min(p_ind[b], p_ood[b])
    """
    n_ind, n_ood = int(hist.count_ind.sum()), int(hist.count_ood.sum())
    if n_ind == 0 or n_ood == 0:
        raise ValueError("重なり係数には IND と OOD の両方のスコアが必要です")
    return float(np.minimum(hist.count_ind / n_ind, hist.count_ood / n_ood).sum())


# --------------------------------------------------------------------------- #
# 類似度プロファイル
# --------------------------------------------------------------------------- #
def similarity_profile(pipeline: DetectionPipeline, ood_data: FeatureSet, k: int) -> np.ndarray:
    """
    各 OOD 例と k 近傍 IND 学習例とのコサイン類似度の平均

    Args:
        pipeline: インデックス構築済みパイプライン
        ood_data: OOD 例（IND 例が混ざっていれば OOD 例だけを使う）
        k: 近傍数（k ≤ M）
    """
    if k > pipeline.index.size:
        raise ValueError(f"k={k} がインデックスの行数 M={pipeline.index.size} を超えています")
    data = ood_data.ood_only() if ood_data.n_ood < len(ood_data) else ood_data
    if len(data) == 0:
        raise ValueError("OOD 例がありません")
    u, _ = embed(pipeline.params, data.features)
    return mean_knn_cosine(pipeline.index, u, k)


def mean_knn_cosine(index: KnnIndex, queries, k: int) -> np.ndarray:
    """
    単位ベクトルのクエリごとに、k 近傍行（ユークリッド距離順）との内積の平均
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    _, rows = index.search_batch(queries, k)
    return np.einsum("nd,nkd->nk", queries, index.embeddings[rows]).mean(axis=1)


def similarity_csv(similarities) -> str:
    return _csv_text(["example_index", "mean_cosine"], ([i, repr(float(s))] for i, s in enumerate(similarities)))


# --------------------------------------------------------------------------- #
# 書き出し
# --------------------------------------------------------------------------- #
def write_text(path: str, text: str) -> str:
    atomic_write_text(path, text)
    logger.info(f"書き出しました: {path}")
    return path
