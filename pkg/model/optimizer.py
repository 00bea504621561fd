"""
Adam オプティマイザ（バイアス補正つき）
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from model.encoder import EncoderParams, Gradients

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """
    1次・2次モーメントとステップ数
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: EncoderParams, lr: float = 1e-3, **kw) -> "AdamState":
        """
        パラメータと同形状のゼロモーメントで初期化
        """
        if lr < 0:
            raise ValueError(f"学習率は非負である必要があります: {lr}")
        return cls(
            lr=lr,
            m={name: np.zeros_like(block) for name, block in params.blocks()},
            v={name: np.zeros_like(block) for name, block in params.blocks()},
            **kw,
        )


def adam_step(state: AdamState, params: EncoderParams, grads: Gradients) -> Tuple[AdamState, EncoderParams]:
    """
    Adam の1ステップ

    Args:
        state: 現在の状態（変更しない）
        params: 現在のパラメータ（変更しない）
        grads: 勾配

    Returns:
        (新しい状態, 新しいパラメータ)
    """
    t = state.t + 1
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    updated: Dict[str, np.ndarray] = {}
    for name, block in params.blocks():
        g = getattr(grads, name)
        if g.shape != block.shape:
            raise ValueError(f"勾配 {name} の形状が一致しません: {g.shape} vs {block.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"パラメータブロック {name} の勾配に非有限値が含まれています")
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        updated[name] = block - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_adam)
        new_m[name] = m
        new_v[name] = v

    new_state = AdamState(
        lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps_adam=state.eps_adam, t=t, m=new_m, v=new_v
    )
    return new_state, EncoderParams(**updated, activation=params.activation)
