"""
意図表現エンコーダ（2層MLP + 線形ソフトマックス分類ヘッド）

z = W2ᵀ·act(W1ᵀx + b1) + b2
p = softmax(Wcᵀz + bc)

順伝播・逆伝播ともにこのアーキテクチャ専用に手で導出した解析勾配を使う。
入力は 1 サンプル (D_in,) でもバッチ (N×D_in) でもよい。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "relu")
PARAM_BLOCKS = ("W1", "b1", "W2", "b2", "Wc", "bc")


# --------------------------------------------------------------------------- #
# パラメータと勾配
# --------------------------------------------------------------------------- #
@dataclass
class EncoderParams:
    """
    学習可能な全パラメータ

    W1: (D_in×H), b1: (H,), W2: (H×D_z), b2: (D_z,), Wc: (D_z×C), bc: (C,)
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wc: np.ndarray
    bc: np.ndarray
    activation: str = "tanh"

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"未対応の活性化関数です: {self.activation} (候補: {', '.join(ACTIVATIONS)})")
        for name in PARAM_BLOCKS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        d_in, h = self.W1.shape
        if (
            self.b1.shape != (h,)
            or self.W2.shape[0] != h
            or self.b2.shape != (self.W2.shape[1],)
            or self.Wc.shape[0] != self.W2.shape[1]
            or self.bc.shape != (self.Wc.shape[1],)
        ):
            raise ValueError(f"パラメータ形状が整合していません: {self.shapes()}")
        for name, block in self.blocks():
            if not np.all(np.isfinite(block)):
                raise ValueError(f"パラメータ {name} に非有限値が含まれています")

    # ---- 形状 --------------------------------------------------------------
    @property
    def d_in(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def d_z(self) -> int:
        return self.W2.shape[1]

    @property
    def n_classes(self) -> int:
        return self.Wc.shape[1]

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: tuple(getattr(self, name).shape) for name in PARAM_BLOCKS}

    def blocks(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in PARAM_BLOCKS:
            yield name, getattr(self, name)

    def copy(self) -> "EncoderParams":
        return EncoderParams(**{name: block.copy() for name, block in self.blocks()}, activation=self.activation)

    # ---- 初期化 ------------------------------------------------------------
    @classmethod
    def initialize(
        cls,
        d_in: int,
        n_classes: int,
        rng: np.random.Generator,
        hidden: int = 64,
        d_z: int = 32,
        activation: str = "tanh",
    ) -> "EncoderParams":
        """
        Glorot 一様分布 uniform(−a, a), a = sqrt(6/(fan_in+fan_out)) で初期化（バイアスは 0）

        Args:
            d_in: 入力次元
            n_classes: IND クラス数 C
            rng: 乱数ジェネレータ
            hidden: 隠れ層幅 H
            d_z: 表現次元 D_z
            activation: "tanh" または "relu"
        """
        if min(d_in, n_classes, hidden, d_z) < 1:
            raise ValueError("すべての次元は正である必要があります")

        def glorot(fan_in: int, fan_out: int) -> np.ndarray:
            a = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-a, a, size=(fan_in, fan_out))

        return cls(
            W1=glorot(d_in, hidden),
            b1=np.zeros(hidden),
            W2=glorot(hidden, d_z),
            b2=np.zeros(d_z),
            Wc=glorot(d_z, n_classes),
            bc=np.zeros(n_classes),
            activation=activation,
        )


@dataclass
class Gradients:
    """
    EncoderParams と同じ形状の勾配
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wc: np.ndarray
    bc: np.ndarray

    @classmethod
    def zeros_like(cls, params: EncoderParams) -> "Gradients":
        return cls(**{name: np.zeros_like(block) for name, block in params.blocks()})

    def blocks(self) -> Iterator[Tuple[str, np.ndarray]]:
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    def __add__(self, other: "Gradients") -> "Gradients":
        return Gradients(**{name: block + getattr(other, name) for name, block in self.blocks()})


@dataclass
class ForwardCache:
    """
    逆伝播用の順伝播中間値（呼び出しごとに生成し共有しない）
    """

    x: np.ndarray           # (N×D_in)
    pre: np.ndarray         # W1ᵀx + b1
    hidden: np.ndarray      # act(pre)
    mask: Optional[np.ndarray]  # 逆ドロップアウトマスク（推論時は None）
    z: np.ndarray           # (N×D_z)
    squeeze: bool           # 入力が1サンプルだったか


# --------------------------------------------------------------------------- #
# 順伝播
# --------------------------------------------------------------------------- #
def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(pre)
    return np.maximum(pre, 0.0)


def encode(
    params: EncoderParams,
    x,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, ForwardCache]:
    """
    特徴ベクトルを意図表現 z に写像

    Args:
        params: エンコーダパラメータ
        x: 特徴ベクトル (D_in,) またはバッチ (N×D_in)
        dropout_rate: 隠れ層の逆ドロップアウト率（0 なら推論モード）
        rng: 学習モード時のマスク生成用ジェネレータ（dropout_rate > 0 のときのみ必須）

    Returns:
        (z, cache)
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.d_in:
        raise ValueError(f"入力次元が一致しません: {x.shape} (D_in={params.d_in})")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError(f"dropout_rate は [0, 1) の範囲である必要があります: {dropout_rate}")
    if (dropout_rate > 0.0) != (rng is not None):
        raise ValueError("rng は dropout_rate > 0（学習モード）のときに限り指定してください")

    pre = x @ params.W1 + params.b1
    hidden = _activate(pre, params.activation)
    mask = None
    if dropout_rate > 0.0:
        keep = rng.random(hidden.shape) >= dropout_rate
        mask = keep / (1.0 - dropout_rate)
        z = (hidden * mask) @ params.W2 + params.b2
    else:
        z = hidden @ params.W2 + params.b2

    cache = ForwardCache(x=x, pre=pre, hidden=hidden, mask=mask, z=z, squeeze=squeeze)
    return (z[0] if squeeze else z), cache


def logits(params: EncoderParams, z) -> np.ndarray:
    """
    分類ヘッドのロジット Wcᵀz + bc
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != params.d_z:
        raise ValueError(f"表現次元が一致しません: {z.shape} (D_z={params.d_z})")
    return z @ params.Wc + params.bc


def softmax(scores: np.ndarray) -> np.ndarray:
    """
    最大値を引いて安定化したソフトマックス（最終軸）
    """
    shifted = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def classify(params: EncoderParams, z) -> np.ndarray:
    """
    C クラス上の確率分布 softmax(Wcᵀz + bc)
    """
    return softmax(logits(params, z))


# --------------------------------------------------------------------------- #
# 逆伝播
# --------------------------------------------------------------------------- #
def _backprop(
    params: EncoderParams,
    cache: ForwardCache,
    dL_dz: Optional[np.ndarray],
    dL_dlogits: Optional[np.ndarray],
) -> Tuple[Gradients, np.ndarray]:
    if dL_dz is None and dL_dlogits is None:
        raise ValueError("dL_dz と dL_dlogits の少なくとも一方が必要です")
    n = cache.x.shape[0]
    if cache.x.shape[1] != params.d_in or cache.hidden.shape[1] != params.hidden or cache.z.shape[1] != params.d_z:
        raise ValueError("キャッシュがパラメータと一致しません（古いキャッシュ）")

    dz = np.zeros((n, params.d_z)) if dL_dz is None else np.asarray(dL_dz, dtype=np.float64).reshape(n, params.d_z)
    grads = Gradients.zeros_like(params)

    if dL_dlogits is not None:
        dlog = np.asarray(dL_dlogits, dtype=np.float64).reshape(n, params.n_classes)
        grads.Wc = cache.z.T @ dlog
        grads.bc = dlog.sum(axis=0)
        dz = dz + dlog @ params.Wc.T

    hidden_out = cache.hidden if cache.mask is None else cache.hidden * cache.mask
    grads.W2 = hidden_out.T @ dz
    grads.b2 = dz.sum(axis=0)

    dhidden = dz @ params.W2.T
    if cache.mask is not None:
        dhidden = dhidden * cache.mask
    if params.activation == "tanh":
        dpre = dhidden * (1.0 - cache.hidden ** 2)
    else:
        dpre = dhidden * (cache.pre > 0.0)
    grads.W1 = cache.x.T @ dpre
    grads.b1 = dpre.sum(axis=0)

    dx = dpre @ params.W1.T
    return grads, dx


def backward(
    params: EncoderParams,
    cache: ForwardCache,
    dL_dz: Optional[np.ndarray] = None,
    dL_dlogits: Optional[np.ndarray] = None,
) -> Gradients:
    """
    上流勾配から全パラメータの解析勾配を計算（キャッシュのドロップアウトマスクを再利用）

    Args:
        params: encode に使ったパラメータ
        cache: encode が返したキャッシュ
        dL_dz: 表現 z に対する勾配
        dL_dlogits: ロジットに対する勾配

    Returns:
        Gradients: パラメータと同形状の勾配
    """
    grads, _ = _backprop(params, cache, dL_dz, dL_dlogits)
    return grads


def input_gradient(
    params: EncoderParams,
    cache: ForwardCache,
    dL_dz: Optional[np.ndarray] = None,
    dL_dlogits: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    入力 x に対する勾配（敵対的拡張で使用）
    """
    _, dx = _backprop(params, cache, dL_dz, dL_dlogits)
    return dx[0] if cache.squeeze else dx
