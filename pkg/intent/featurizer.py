"""
ハッシュ化 Bag-of-Words 特徴量

小文字化 → 英数字以外で分割 → トークンごとにシード付き md5 でバケットへ → 件数を L2 正規化。
同じ (text, width, seed) からは PYTHONHASHSEED に関係なく同じベクトルになる。
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from intent.dataset import Dataset, FeatureSet, label_indices
from model.numerics import l2_normalize

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class FeaturizerConfig:
    """
    ハッシュ幅とシード
    """

    width: int = 512
    seed: int = 0

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError(f"width は 1 以上である必要があります: {self.width}")
        if self.seed < 0:
            raise ValueError(f"seed は非負である必要があります: {self.seed}")


def tokenize(text: str) -> List[str]:
    """
    小文字化し、英数字以外の連続で区切ったトークン列
    """
    return _TOKEN_RE.findall(text.lower())


def hashed_bucket(token: str, width: int, seed: int) -> int:
    """
    トークンのバケット番号 [0, width)
    """
    digest = hashlib.md5(f"{seed}:{token}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], byteorder="little", signed=False) % width


def featurize(text: str, width: int, seed: int = 0) -> np.ndarray:
    """
    テキストを固定幅の特徴ベクトルに変換

    Args:
        text: 入力テキスト
        width: ハッシュ幅 D_in
        seed: ハッシュシード

    Returns:
        np.ndarray: L2 正規化済みバケット件数（トークンがなければ零ベクトル）
    """
    if width < 1:
        raise ValueError(f"width は 1 以上である必要があります: {width}")
    counts = np.zeros(width, dtype=np.float64)
    for token in tokenize(text):
        counts[hashed_bucket(token, width, seed)] += 1.0
    vec, _ = l2_normalize(counts)
    return vec


def featurize_dataset(
    dataset: Dataset,
    config: FeaturizerConfig,
    ind_labels: Optional[Sequence[str]] = None,
) -> FeatureSet:
    """
    Dataset の全発話を特徴化（OOD は OOD_INDEX）

    Args:
        dataset: 発話データ
        config: 特徴化設定
        ind_labels: 学習時の IND 語彙（検証・テスト用）。None なら dataset の語彙
    """
    vocab = tuple(ind_labels) if ind_labels is not None else dataset.ind_labels
    features = np.vstack([featurize(ex.text, config.width, config.seed) for ex in dataset])
    labels = label_indices([ex.label for ex in dataset], vocab, dataset.ood_marker)
    empty = int(np.sum(~np.any(features != 0.0, axis=1)))
    if empty:
        logger.warning(f"トークンのない発話が {empty}件あります（零ベクトルになります）")
    return FeatureSet(features, labels, vocab, dataset.ood_marker)
