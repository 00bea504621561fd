"""
GDA（共有共分散のガウス判別）によるマハラノビス距離スコア
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from detection.knn_index import KnnIndex

logger = logging.getLogger(__name__)

# 正則化 ε_reg = REG_SCALE·trace(Σ)/D
REG_SCALE = 1e-6


@dataclass(frozen=True, eq=False)
class GdaModel:
    """
    クラス平均 μ_c (C×D)、正則化済み共有共分散 Σ (D×D) とそのコレスキー分解
    """

    means: np.ndarray
    covariance: np.ndarray
    eps_reg: float
    factor: Tuple[np.ndarray, bool]

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def fit_gda(source, labels=None, n_classes: Optional[int] = None) -> GdaModel:
    """
    クラス平均と共有共分散を推定

    Σ = Σ_c Σ_{i∈c} (z_i − μ_c)(z_i − μ_c)ᵀ / (M − C)、その後 Σ ← Σ + ε_reg·I

    Args:
        source: KnnIndex、または表現行列 (M×D)
        labels: source が行列のときのクラス番号
        n_classes: source が行列のときのクラス数（None なら max(labels)+1）

    Returns:
        GdaModel
    """
    if isinstance(source, KnnIndex):
        emb, lab, c = source.embeddings, source.labels, source.n_classes
    else:
        if labels is None:
            raise ValueError("表現行列から推定する場合は labels が必要です")
        emb = np.asarray(source, dtype=np.float64)
        lab = np.asarray(labels, dtype=np.int64)
        c = int(n_classes) if n_classes is not None else int(lab.max()) + 1
        if emb.ndim != 2 or lab.shape != (emb.shape[0],):
            raise ValueError("表現行列とラベルの形状が一致しません")

    counts = np.bincount(lab, minlength=c)
    if np.any(counts < 2):
        short = np.flatnonzero(counts < 2).tolist()
        raise ValueError(f"GDA には各クラス 2 点以上が必要です: クラス {short} の点数が不足")

    m, d = emb.shape
    means = np.vstack([emb[lab == k].mean(axis=0) for k in range(c)])
    centered = emb - means[lab]
    cov = centered.T @ centered / (m - c)
    cov = (cov + cov.T) / 2.0
    eps_reg = REG_SCALE * float(np.trace(cov)) / d
    cov = cov + eps_reg * np.eye(d)
    # 分解に失敗すると numpy.linalg.LinAlgError
    factor = cho_factor(cov)
    logger.info(f"GDA を推定しました: C={c}, D={d}, ε_reg={eps_reg:.3e}")
    return GdaModel(means=means, covariance=cov, eps_reg=eps_reg, factor=factor)


def gda_scores(model: GdaModel, queries) -> np.ndarray:
    """
    各クエリの min_c sqrt((z−μ_c)ᵀ Σ⁻¹ (z−μ_c))
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[1] != model.dim:
        raise ValueError(f"クエリ次元が一致しません: {queries.shape} (D={model.dim})")
    diffs = (queries[:, None, :] - model.means[None, :, :]).reshape(-1, model.dim)
    solved = cho_solve(model.factor, diffs.T)
    mahal = np.maximum(np.sum(diffs.T * solved, axis=0), 0.0)
    return np.sqrt(mahal).reshape(queries.shape[0], model.n_classes).min(axis=1)


def gda_score(model: GdaModel, z) -> float:
    """
    1クエリの GDA スコア
    """
    return float(gda_scores(model, np.asarray(z, dtype=np.float64)[None, :])[0])
