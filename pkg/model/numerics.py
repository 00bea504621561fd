"""
数値カーネル（行列積・L2正規化・ユークリッド距離・乱数）

* 実数はすべて float64
* 乱数は numpy の PCG64 のみを使用し、``make_rng(seed, *salt)`` 経由で生成する
"""

from __future__ import annotations

import logging
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)

# ノルムがこれ以下のベクトルは正規化しない
EPS_NORM = 1e-12
# 単位ノルムとみなす許容誤差
UNIT_TOL = 1e-12


# --------------------------------------------------------------------------- #
# 乱数
# --------------------------------------------------------------------------- #
def make_rng(seed: int, *salt: int) -> np.random.Generator:
    """
    シード（と任意の塩）から PCG64 ジェネレータを作成

    同じ (seed, *salt) からは常に同じ乱数列が得られる。

    Args:
        seed: 非負整数シード
        salt: エポック番号などの追加エントロピー

    Returns:
        np.random.Generator: PCG64 ベースのジェネレータ
    """
    if seed < 0 or any(s < 0 for s in salt):
        raise ValueError(f"シードは非負整数である必要があります: {(seed, *salt)}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *salt])))


# --------------------------------------------------------------------------- #
# 行列
# --------------------------------------------------------------------------- #
def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """
    2次元 float64 配列に変換し、有限性を検査
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} は2次元である必要があります (ndim={arr.ndim})")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} に非有限値が含まれています")
    return arr


def matmul(a, b) -> np.ndarray:
    """
    行列積 A·B（float64 で累積）

    Args:
        a: (n×m) 行列
        b: (m×p) 行列

    Returns:
        np.ndarray: (n×p) 行列
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"次元が一致しません: A{a.shape} × B{b.shape}")
    return a @ b


# --------------------------------------------------------------------------- #
# ベクトル
# --------------------------------------------------------------------------- #
def l2_normalize(v) -> Tuple[np.ndarray, bool]:
    """
    ベクトルを L2 正規化

    Args:
        v: 実ベクトル

    Returns:
        (正規化後ベクトル, 正規化済みフラグ)。ノルムが EPS_NORM 以下なら v をそのまま返しフラグは False
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.sqrt(np.sum(v * v)))
    if norm <= EPS_NORM:
        return v.copy(), False
    # 既に単位ノルム（丸め誤差内）なら入力をそのまま返す。冪等性がビット単位で成り立つ
    if abs(norm - 1.0) <= UNIT_TOL:
        return v.copy(), True
    return v / norm, True


def l2_normalize_rows(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    各行を L2 正規化（逆伝播用にノルムも返す）

    Args:
        z: (n×d) 行列

    Returns:
        (正規化行列, 各行のノルム)。ノルムが EPS_NORM 以下の行は変更しない
    """
    z = np.asarray(z, dtype=np.float64)
    norms = np.sqrt(np.sum(z * z, axis=1))
    safe = np.where(norms > EPS_NORM, norms, 1.0)
    return z / safe[:, None], norms


def l2_normalize_rows_backward(u: np.ndarray, norms: np.ndarray, du: np.ndarray) -> np.ndarray:
    """
    行正規化 u = z/‖z‖ の逆伝播

    dz = (du − u·(u·du)) / ‖z‖。正規化されなかった行は勾配をそのまま通す。
    """
    proj = np.sum(u * du, axis=1, keepdims=True)
    dz = (du - u * proj) / np.where(norms > EPS_NORM, norms, 1.0)[:, None]
    degenerate = norms <= EPS_NORM
    if np.any(degenerate):
        dz[degenerate] = du[degenerate]
    return dz


def euclidean(u, v) -> float:
    """
    ユークリッド距離 ‖u − v‖₂
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"次元が一致しません: {u.shape} vs {v.shape}")
    diff = u - v
    return float(np.sqrt(np.sum(diff * diff)))


def pairwise_euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    全ペアのユークリッド距離行列 (len(a)×len(b))

    差分を直接二乗和するため、内積展開による丸め誤差が入らない。
    """
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))
