"""
局所外れ値因子（LOF）スコア

インデックスの各行について、インデックス内（自分を除く）の k 近傍・k 距離・局所到達可能密度を事前計算する。
クエリはインデックスに含めない。到達可能距離は 1e-12 で下から抑える（重複点で密度が発散しないように）。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from detection.knn_index import KnnIndex

logger = logging.getLogger(__name__)

REACH_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class LofModel:
    """
    k と、インデックス各行の k 距離・局所到達可能密度
    """

    index: KnnIndex
    k: int
    k_distance: np.ndarray  # (M,)
    lrd: np.ndarray         # (M,)

    def score(self, z) -> float:
        """
        LOF(z) = mean_{o∈N_k(z)} lrd(o) / lrd(z)
        """
        dist, rows = self.index.search(z, self.k)
        reach = np.maximum(np.maximum(self.k_distance[rows], dist), REACH_FLOOR)
        lrd_z = 1.0 / reach.mean()
        return float(self.lrd[rows].mean() / lrd_z)

    def scores(self, queries) -> np.ndarray:
        return np.array([self.score(z) for z in np.asarray(queries, dtype=np.float64)])


def _neighbors_within(index: KnnIndex, row: int, k: int):
    dist, rows = index.search(index.embeddings[row], k + 1)
    own = np.flatnonzero(rows == row)
    # 自分より小さい番号の重複点が k+1 個以上あると自分が含まれない。そのときは末尾を落とす
    drop = int(own[0]) if own.size else k
    keep = np.arange(k + 1) != drop
    return dist[keep], rows[keep]


def fit_lof(index: KnnIndex, k: int) -> LofModel:
    """
    LOF の事前計算

    Args:
        index: 学習データのインデックス
        k: 近傍数（1 ≤ k < M）
    """
    if k < 1:
        raise ValueError(f"LOF の k は正の整数である必要があります: {k}")
    if k >= index.size:
        raise ValueError(f"LOF の k はインデックスの行数未満である必要があります: k={k}, M={index.size}")
    m = index.size
    nbr_dist = np.empty((m, k))
    nbr_rows = np.empty((m, k), dtype=np.int64)
    for i in range(m):
        nbr_dist[i], nbr_rows[i] = _neighbors_within(index, i, k)
    k_distance = nbr_dist[:, -1].copy()
    reach = np.maximum(np.maximum(k_distance[nbr_rows], nbr_dist), REACH_FLOOR)
    lrd = 1.0 / reach.mean(axis=1)
    logger.info(f"LOF を事前計算しました: k={k}, M={m}")
    return LofModel(index=index, k=k, k_distance=k_distance, lrd=lrd)


def lof_score(index: KnnIndex, z, k: int) -> float:
    """
    1クエリの LOF（複数クエリを採点するなら fit_lof の結果を使い回す）

    Args:
        index: 学習データのインデックス
        z: L2 正規化済みクエリ表現
        k: 近傍数（1 ≤ k < M）
    """
    return fit_lof(index, k).score(z)
