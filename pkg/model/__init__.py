# 表現層（チェックポイント入出力は model.checkpoint から直接 import する。intent.featurizer と循環するため）
from .encoder import EncoderParams, Gradients, backward, classify, encode

# 学習目的関数
from .objectives import KnclConfig, ce_loss, kncl_loss, scl_loss

# 最適化・学習ループ
from .optimizer import AdamState, adam_step
from .trainer import STRATEGIES, TrainPlan, TrainReport, make_batches, train

__all__ = [
    "EncoderParams",
    "Gradients",
    "backward",
    "classify",
    "encode",
    "KnclConfig",
    "ce_loss",
    "kncl_loss",
    "scl_loss",
    "AdamState",
    "adam_step",
    "STRATEGIES",
    "TrainPlan",
    "TrainReport",
    "make_batches",
    "train",
]
