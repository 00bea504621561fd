"""
学習データ表現の KNN インデックス

検索の基準は float64 の全件走査（部分選択、同距離は小さい行番号を優先）。
行数が多い場合は FAISS の IndexFlatL2 で候補を絞り込み、候補を float64 で再計算する。
float32 の誤差幅で top-k を保証できないときは全件走査に戻るので、結果は常に全件走査と一致する。
"""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import faiss
import numpy as np

from intent.dataset import FeatureSet
from model.encoder import EncoderParams, encode
from model.numerics import EPS_NORM, l2_normalize_rows

logger = logging.getLogger(__name__)

# 行の単位ノルム許容誤差
ROW_NORM_TOL = 1e-9
# この行数以上なら FAISS で候補を絞る
FAISS_MIN_ROWS = 4096
# FAISS の二乗距離（float32）の誤差見積もり
FAISS_SQ_TOL = 1e-4


class KnnIndex:
    """
    L2 正規化済み表現行列 + 行ごとの IND クラス番号
    """

    def __init__(
        self,
        embeddings,
        labels,
        n_classes: int,
        use_faiss: Optional[bool] = None,
    ) -> None:
        """
        初期化

        Args:
            embeddings: (M×D_z) 行列。各行は単位ノルム
            labels: (M,) クラス番号 [0, n_classes)
            n_classes: IND クラス数 C
            use_faiss: FAISS 候補探索を使うか（None なら M >= FAISS_MIN_ROWS のとき使う）
        """
        emb = np.array(embeddings, dtype=np.float64)
        lab = np.array(labels, dtype=np.int64)
        if emb.ndim != 2 or emb.shape[0] == 0:
            raise ValueError(f"インデックスには1行以上の (M×D) 行列が必要です: {emb.shape}")
        if lab.shape != (emb.shape[0],):
            raise ValueError("ラベル数と行数が一致しません")
        if np.any(lab < 0) or np.any(lab >= n_classes):
            raise ValueError("インデックスのラベルは IND クラス番号である必要があります")
        norms = np.sqrt(np.sum(emb * emb, axis=1))
        bad = np.flatnonzero(np.abs(norms - 1.0) > ROW_NORM_TOL)
        if bad.size:
            raise ValueError(f"単位ノルムでない行があります: {bad[:5].tolist()}")

        emb.setflags(write=False)
        lab.setflags(write=False)
        self.embeddings = emb
        self.labels = lab
        self.n_classes = int(n_classes)
        self.use_faiss = emb.shape[0] >= FAISS_MIN_ROWS if use_faiss is None else bool(use_faiss)
        self._faiss: Optional[faiss.Index] = None
        if self.use_faiss:
            self._faiss = faiss.IndexFlatL2(emb.shape[1])
            self._faiss.add(np.ascontiguousarray(emb, dtype=np.float32))
            logger.info(f"FAISSインデックスを構築しました (M={self.size}, dim={self.dim})")

    # ---------------- 公共 ---------------- #
    @property
    def size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def __len__(self) -> int:
        return self.size

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def search(self, z, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        1クエリの k 近傍

        Args:
            z: (D,) クエリ表現
            k: 近傍数（1 ≤ k ≤ M）

        Returns:
            (距離, 行番号)。距離昇順、同距離は行番号昇順
        """
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.dim,):
            raise ValueError(f"クエリ次元が一致しません: {z.shape} (D={self.dim})")
        self._check_k(k)
        if self._faiss is not None and k < self.size:
            found = self._search_faiss(z, k)
            if found is not None:
                return found
            logger.debug("FAISS 候補で top-k を保証できないため全件走査します")
        return self._search_exact(z, k)

    def search_batch(self, queries, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        複数クエリの k 近傍

        Returns:
            (距離 (N×k), 行番号 (N×k))
        """
        queries = np.asarray(queries, dtype=np.float64)
        if queries.ndim != 2:
            raise ValueError(f"クエリは (N×D) 行列である必要があります: {queries.shape}")
        self._check_k(k)
        dists = np.empty((queries.shape[0], k))
        rows = np.empty((queries.shape[0], k), dtype=np.int64)
        for i, z in enumerate(queries):
            dists[i], rows[i] = self.search(z, k)
        return dists, rows

    # ---------------- 内部 ---------------- #
    def _check_k(self, k: int) -> None:
        if k < 1:
            raise ValueError(f"k は正の整数である必要があります: {k}")
        if k > self.size:
            raise ValueError(f"k={k} がインデックスの行数 M={self.size} を超えています")

    def _distances(self, z: np.ndarray, rows: Optional[np.ndarray] = None) -> np.ndarray:
        emb = self.embeddings if rows is None else self.embeddings[rows]
        diff = emb - z
        return np.sqrt(np.sum(diff * diff, axis=1))

    @staticmethod
    def _select(dist: np.ndarray, rows: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
        # rows は昇順。安定ソートで同距離は小さい行番号が先
        if k < dist.shape[0]:
            kth = np.partition(dist, k - 1)[k - 1]
            keep = np.flatnonzero(dist <= kth)
            dist, rows = dist[keep], rows[keep]
        order = np.argsort(dist, kind="stable")[:k]
        return dist[order], rows[order]

    def _search_exact(self, z: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
        return self._select(self._distances(z), np.arange(self.size), k)

    def _search_faiss(self, z: np.ndarray, k: int) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        shortlist = min(self.size, max(2 * k, k + 32))
        sq, idx = self._faiss.search(np.ascontiguousarray(z[None, :], dtype=np.float32), shortlist)
        idx = idx[0]
        if np.any(idx < 0):
            return None
        rows = np.sort(idx.astype(np.int64))
        dist, rows = self._select(self._distances(z, rows), rows, k)
        if shortlist < self.size and not dist[-1] ** 2 + FAISS_SQ_TOL < float(sq[0, -1]):
            return None
        return dist, rows


# --------------------------------------------------------------------------- #
# 構築
# --------------------------------------------------------------------------- #
def embed(params: EncoderParams, features) -> Tuple[np.ndarray, np.ndarray]:
    """
    推論モードで符号化し行ごとに L2 正規化

    Returns:
        (表現 (N×D_z), 正規化できた行のマスク)
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    z, _ = encode(params, features)
    u, norms = l2_normalize_rows(z)
    return u, norms > EPS_NORM


def build_index(params: EncoderParams, train_data: FeatureSet, use_faiss: Optional[bool] = None) -> KnnIndex:
    """
    学習データ全体を符号化してインデックスを構築（行順は学習データ順）

    表現が零ベクトルになった例は警告を出して除外する。
    """
    if len(train_data) == 0:
        raise ValueError("学習データが空です")
    ind = train_data.ind_only()
    if len(ind) < len(train_data):
        logger.warning(f"インデックス構築データの OOD 例 {train_data.n_ood}件を除外しました")
    u, ok = embed(params, ind.features)
    if not np.all(ok):
        bad = np.flatnonzero(~ok)
        logger.warning(f"表現が零ベクトルの学習例を除外しました: {bad[:10].tolist()} ({bad.size}件)")
    index = KnnIndex(u[ok], ind.labels[ok], params.n_classes, use_faiss=use_faiss)
    logger.info(f"KNNインデックスを構築しました: M={index.size}, D_z={index.dim}")
    return index
