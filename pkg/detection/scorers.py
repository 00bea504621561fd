"""
OOD スコア（大きいほど OOD）

* knn_score: k 近傍への平均ユークリッド距離
* msp_score: 1 − 最大ソフトマックス確率
"""

from __future__ import annotations

import logging

import numpy as np

from detection.knn_index import KnnIndex

logger = logging.getLogger(__name__)

SCORERS = ("knn", "msp", "lof", "gda")


def knn_score(index: KnnIndex, z, k: int) -> float:
    """
    S = (1/k)·Σ_{j∈N_k(z)} ‖z − z_j‖₂

    Args:
        index: 学習データのインデックス
        z: L2 正規化済みクエリ表現
        k: 近傍数（k ≤ M）
    """
    dist, _ = index.search(z, k)
    return float(np.mean(dist))


def knn_scores(index: KnnIndex, queries, k: int) -> np.ndarray:
    dist, _ = index.search_batch(queries, k)
    return dist.mean(axis=1)


def msp_score(probs) -> float:
    """
    S = 1 − max_c p_c
    """
    return float(1.0 - np.max(np.asarray(probs, dtype=np.float64)))


def msp_scores(probs) -> np.ndarray:
    return 1.0 - np.max(np.asarray(probs, dtype=np.float64), axis=-1)
