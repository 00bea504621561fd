"""
形式を判定して FeatureSet を読み込む
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence

from intent.dataset import DEFAULT_OOD_MARKER, FeatureSet, load_jsonl, read_feature_jsonl, sniff_format
from intent.featurizer import FeaturizerConfig, featurize_dataset

logger = logging.getLogger(__name__)


def load_feature_set(
    path: str,
    ood_marker: str = DEFAULT_OOD_MARKER,
    featurizer: Optional[FeaturizerConfig] = None,
    ind_labels: Optional[Sequence[str]] = None,
) -> FeatureSet:
    """
    テキスト JSONL または特徴ベクトル JSONL を FeatureSet として読み込む

    Args:
        path: JSONL ファイル
        ood_marker: OOD ラベル
        featurizer: テキスト形式の場合に使う特徴化設定（None ならテキスト形式はエラー）
        ind_labels: 学習時の IND 語彙（検証・テスト用）
    """
    if sniff_format(path) == "features":
        return read_feature_jsonl(path, ood_marker, ind_labels)
    if featurizer is None:
        raise ValueError(f"テキスト形式のデータですが特徴化設定がありません: {path}")
    return featurize_dataset(load_jsonl(path, ood_marker), featurizer, ind_labels)


def load_training_set(
    path: str,
    ood_marker: str = DEFAULT_OOD_MARKER,
    featurizer: Optional[FeaturizerConfig] = None,
) -> FeatureSet:
    """
    学習用に読み込み、OOD 例を除いた FeatureSet を返す（除外件数は INFO で記録）
    """
    data = load_feature_set(path, ood_marker, featurizer)
    if data.n_ood == 0:
        return data
    kept = data.ind_only()
    logger.info(f"学習データから OOD 例 {data.n_ood}件を除外しました: {path}（残り {len(kept)}件）")
    return kept
