"""
学習目的関数

* ce_loss           : 交差エントロピー（ロジット勾配つき）
* scl_loss          : 教師ありコントラスト損失（バッチ全体を候補とする sup-out 形式）
* kncl_loss         : K近傍コントラスト損失（アンカーごとにバッチ内KNN集合のみを候補とする）
* adversarial_views : CE勾配の符号方向への1ステップ摂動による拡張ビュー

コントラスト損失は表現（呼び出し側で L2 正規化済み）に対する厳密な勾配を返す。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from model.encoder import EncoderParams, encode, input_gradient, logits, softmax
from model.numerics import pairwise_euclidean

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------- #
# 設定と結果
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class KnclConfig:
    """
    KNCL のハイパーパラメータ

    k: KNN 集合の大きさ、tau: 温度、use_augmented_views: 拡張ビューで候補集合を広げるか、
    epsilon_adv: 敵対的拡張のステップ幅
    """

    k: int = 5
    tau: float = 0.1
    use_augmented_views: bool = True
    epsilon_adv: float = 0.01

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k は正の整数である必要があります: {self.k}")
        if self.tau <= 0:
            raise ValueError(f"温度 tau は正である必要があります: {self.tau}")
        if self.epsilon_adv < 0:
            raise ValueError(f"epsilon_adv は非負である必要があります: {self.epsilon_adv}")


@dataclass
class ContrastiveResult:
    """
    コントラスト損失の値と、渡された各表現（拡張ビューを含む）に対する勾配
    """

    loss: float
    dL_dz: np.ndarray
    n_active_anchors: int


# --------------------------------------------------------------------------- #
# 交差エントロピー
# --------------------------------------------------------------------------- #
def ce_loss(probs, labels) -> Tuple[float, np.ndarray]:
    """
    平均負対数尤度

    Args:
        probs: (N×C) クラス確率
        labels: (N,) 正解クラス番号

    Returns:
        (loss, dL_dlogits)。dL_dlogits = (probs − onehot)/N
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = probs.shape[0]
    if n == 0:
        raise ValueError("空のバッチです")
    true_p = probs[np.arange(n), labels]
    if np.any(true_p <= 0.0):
        bad = int(np.flatnonzero(true_p <= 0.0)[0])
        raise ValueError(f"正解クラスの確率が 0 以下です（数値破綻）: サンプル {bad}")
    loss = float(-np.mean(np.log(true_p)))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


# --------------------------------------------------------------------------- #
# コントラスト損失の共通部
# --------------------------------------------------------------------------- #
def _masked_contrastive(
    reps: np.ndarray,
    n_anchors: int,
    candidates: np.ndarray,
    positives: np.ndarray,
    tau: float,
) -> ContrastiveResult:
    """
    候補マスクと正例マスクから損失と勾配を計算

    アンカー i（reps の先頭 n_anchors 行）ごとに
        loss_i = −(1/|P_i|) Σ_{j∈P_i} log softmax_{c∈C_i}(z_i·z_c/τ)_j
    正例のないアンカーは平均から除外する。

    Args:
        reps: (R×D) 表現
        n_anchors: アンカー数
        candidates: (n_anchors×R) 候補マスク
        positives: (n_anchors×R) 正例マスク（candidates の部分集合）
        tau: 温度
    """
    sims = reps[:n_anchors] @ reps.T / tau
    n_pos = positives.sum(axis=1)
    active = n_pos > 0
    n_active = int(active.sum())
    if n_active == 0:
        return ContrastiveResult(loss=0.0, dL_dz=np.zeros_like(reps), n_active_anchors=0)

    masked = np.where(candidates, sims, -np.inf)
    row_max = np.max(masked, axis=1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    weights = np.where(candidates, np.exp(masked - row_max), 0.0)
    denom = weights.sum(axis=1, keepdims=True)
    lse = np.log(np.where(denom > 0, denom, 1.0)) + row_max
    soft = weights / np.where(denom > 0, denom, 1.0)

    safe_pos = np.where(active, n_pos, 1)
    pos_mean = np.sum(np.where(positives, sims, 0.0), axis=1) / safe_pos
    per_anchor = np.where(active, lse[:, 0] - pos_mean, 0.0)
    loss = float(np.sum(per_anchor) / n_active)

    # dL/ds_ij = (softmax_ij − 1[j∈P_i]/|P_i|) / n_active（非アクティブなアンカーは 0）
    g = (soft - positives / safe_pos[:, None]) * active[:, None] / n_active
    full = np.zeros((reps.shape[0], reps.shape[0]))
    full[:n_anchors] = g
    dreps = (full @ reps + full.T @ reps) / tau
    return ContrastiveResult(loss=loss, dL_dz=dreps, n_active_anchors=n_active)


def _check_batch(z: np.ndarray, labels: np.ndarray) -> None:
    if z.ndim != 2:
        raise ValueError(f"表現は (N×D) 行列である必要があります: {z.shape}")
    if z.shape[0] < 2:
        raise ValueError(f"コントラスト損失にはバッチサイズ 2 以上が必要です: N={z.shape[0]}")
    if labels.shape != (z.shape[0],):
        raise ValueError(f"ラベル数が表現数と一致しません: {labels.shape} vs N={z.shape[0]}")


# --------------------------------------------------------------------------- #
# SCL
# --------------------------------------------------------------------------- #
def scl_loss(z, labels, tau: float = 0.1) -> ContrastiveResult:
    """
    教師ありコントラスト損失（sup-out 形式）

    各アンカーの候補は自分以外のバッチ全体、正例は同クラスのサンプル。

    Args:
        z: (N×D) L2 正規化済み表現
        labels: (N,) クラス番号
        tau: 温度
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    _check_batch(z, labels)
    if tau <= 0:
        raise ValueError(f"温度 tau は正である必要があります: {tau}")
    n = z.shape[0]
    candidates = ~np.eye(n, dtype=bool)
    positives = candidates & (labels[:, None] == labels[None, :])
    return _masked_contrastive(z, n, candidates, positives, tau)


# --------------------------------------------------------------------------- #
# KNCL
# --------------------------------------------------------------------------- #
def batch_neighbors(z: np.ndarray, k: int) -> np.ndarray:
    """
    バッチ内の各サンプルについて、自分を除く k 近傍の番号（距離昇順、同距離は小さい番号優先）

    Returns:
        np.ndarray: (N×k) 近傍番号
    """
    dist = pairwise_euclidean(z, z)
    np.fill_diagonal(dist, np.inf)
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def kncl_loss(
    z_original,
    z_augmented,
    labels,
    cfg: KnclConfig,
) -> ContrastiveResult:
    """
    K近傍コントラスト損失

    1. 元ビュー上で各アンカーの k 近傍（自分を除く）を求める
    2. 拡張ビューを使う場合、近傍の拡張ビューとアンカー自身の拡張ビューを候補に加える（2k+1 個）
    3. 候補のうち同クラスを正例、それ以外を負例とする
    4. 正例のないアンカーは平均から除外

    Args:
        z_original: (N×D) 元ビューの L2 正規化済み表現
        z_augmented: (N×D) 拡張ビューの表現、または None
        labels: (N,) クラス番号
        cfg: KNCL 設定

    Returns:
        ContrastiveResult: dL_dz は [元ビュー; 拡張ビュー] の順に並ぶ
    """
    z_original = np.asarray(z_original, dtype=np.float64)
    labels = np.asarray(labels)
    _check_batch(z_original, labels)
    n = z_original.shape[0]
    if cfg.k >= n:
        raise ValueError(f"KNCL の k はバッチサイズ未満である必要があります: k={cfg.k}, N={n}")

    use_aug = cfg.use_augmented_views and z_augmented is not None
    if use_aug:
        z_augmented = np.asarray(z_augmented, dtype=np.float64)
        if z_augmented.shape != z_original.shape:
            raise ValueError(f"拡張ビューの形状が一致しません: {z_augmented.shape} vs {z_original.shape}")
        reps = np.vstack([z_original, z_augmented])
        rep_labels = np.concatenate([labels, labels])
    else:
        reps = z_original
        rep_labels = labels

    neighbors = batch_neighbors(z_original, cfg.k)
    rows = np.repeat(np.arange(n), cfg.k)
    candidates = np.zeros((n, reps.shape[0]), dtype=bool)
    candidates[rows, neighbors.ravel()] = True
    if use_aug:
        candidates[rows, n + neighbors.ravel()] = True
        candidates[np.arange(n), n + np.arange(n)] = True
    positives = candidates & (labels[:, None] == rep_labels[None, :])

    result = _masked_contrastive(reps, n, candidates, positives, cfg.tau)
    if z_augmented is not None and not use_aug:
        # 拡張ビューは渡されたが使わない設定: 勾配 0 を付け足して長さを揃える
        result.dL_dz = np.vstack([result.dL_dz, np.zeros_like(z_augmented)])
    logger.debug(f"KNCL: loss={result.loss:.6f}, 有効アンカー={result.n_active_anchors}/{n}")
    return result


# --------------------------------------------------------------------------- #
# 敵対的拡張
# --------------------------------------------------------------------------- #
def adversarial_views(params: EncoderParams, x, labels, epsilon: float) -> np.ndarray:
    """
    x' = x + ε·sign(∇_x L_CE(x, y))（推論モード、ドロップアウトなし）

    Args:
        params: 現在のエンコーダパラメータ（分類ヘッドを含む）
        x: (N×D_in) または (D_in,) 入力
        labels: クラス番号（x が1サンプルならスカラー）
        epsilon: ステップ幅（0 なら x をそのまま返す）
    """
    if epsilon < 0:
        raise ValueError(f"epsilon は非負である必要があります: {epsilon}")
    x = np.asarray(x, dtype=np.float64)
    if epsilon == 0:
        return x.copy()
    z, cache = encode(params, x)
    probs = softmax(logits(params, z))
    labels_arr = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    probs2 = np.atleast_2d(probs)
    dlog = probs2.copy()
    dlog[np.arange(dlog.shape[0]), labels_arr] -= 1.0
    dx = input_gradient(params, cache, dL_dlogits=dlog)
    return x + epsilon * np.sign(dx)


def adversarial_view(params: EncoderParams, x, label: int, epsilon: float) -> np.ndarray:
    """
    1サンプル版の adversarial_views
    """
    return adversarial_views(params, np.asarray(x, dtype=np.float64), label, epsilon)


def ce_loss_of_inputs(params: EncoderParams, x, labels) -> float:
    """
    推論モードでの入力 x の CE 損失（拡張ビューの検証用）
    """
    z, _ = encode(params, x)
    probs = np.atleast_2d(softmax(logits(params, z)))
    loss, _ = ce_loss(probs, np.atleast_1d(labels))
    return loss
