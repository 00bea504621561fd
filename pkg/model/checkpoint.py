"""
チェックポイント（エンコーダパラメータ + メタデータ）の JSON 入出力

配列は {"shape": [...], "data": [...]} として保存する。float の repr は最短往復表現なので、
読み戻した値はビット単位で一致する。
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from intent.dataset import DEFAULT_OOD_MARKER
from intent.featurizer import FeaturizerConfig
from intent.files import atomic_write_text
from model.encoder import PARAM_BLOCKS, EncoderParams

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "neighbor-ood/checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelMeta:
    """
    パラメータ以外にモデルと一緒に持ち回る情報
    """

    ind_labels: Tuple[str, ...]
    ood_marker: str = DEFAULT_OOD_MARKER
    featurizer: Optional[FeaturizerConfig] = None  # 特徴ベクトル入力のモデルでは None
    strategy: str = "kncl_then_ce"
    head_trained: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ind_labels": list(self.ind_labels),
            "ood_marker": self.ood_marker,
            "featurizer": None
            if self.featurizer is None
            else {"width": self.featurizer.width, "seed": self.featurizer.seed},
            "strategy": self.strategy,
            "head_trained": self.head_trained,
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ModelMeta":
        feat = d.get("featurizer")
        return cls(
            ind_labels=tuple(d["ind_labels"]),
            ood_marker=d["ood_marker"],
            featurizer=None if feat is None else FeaturizerConfig(width=int(feat["width"]), seed=int(feat["seed"])),
            strategy=d["strategy"],
            head_trained=bool(d["head_trained"]),
        )


# ---------------- 配列 ---------------- #
def array_to_json(arr: np.ndarray) -> Dict[str, Any]:
    arr = np.asarray(arr)
    return {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}


def array_from_json(obj: Dict[str, Any], dtype=np.float64) -> np.ndarray:
    return np.asarray(obj["data"], dtype=dtype).reshape(tuple(obj["shape"]))


def check_header(obj: Dict[str, Any], fmt: str, version: int, path: str) -> None:
    """
    format / version キーを検査
    """
    if obj.get("format") != fmt:
        raise ValueError(f"ファイル形式が違います（{fmt} を期待）: {path}")
    if obj.get("version") != version:
        raise ValueError(f"未対応のバージョンです: {obj.get('version')} (対応: {version}): {path}")


def read_json(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"ファイルが見つかりません: {path}")
    with open(path, encoding="utf-8") as fp:
        try:
            return json.load(fp)
        except json.JSONDecodeError as e:
            raise ValueError(f"JSON として読めません: {path}: {e}") from e


# ---------------- チェックポイント ---------------- #
def checkpoint_to_dict(params: EncoderParams, meta: ModelMeta) -> Dict[str, Any]:
    if len(meta.ind_labels) != params.n_classes:
        raise ValueError(f"ラベル語彙 ({len(meta.ind_labels)}) とクラス数 ({params.n_classes}) が一致しません")
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "activation": params.activation,
        "dims": {"d_in": params.d_in, "hidden": params.hidden, "d_z": params.d_z, "n_classes": params.n_classes},
        "params": {name: array_to_json(block) for name, block in params.blocks()},
        "meta": meta.to_dict(),
    }


def checkpoint_from_dict(obj: Dict[str, Any], path: str = "<memory>") -> Tuple[EncoderParams, ModelMeta]:
    check_header(obj, CHECKPOINT_FORMAT, CHECKPOINT_VERSION, path)
    try:
        blocks = {name: array_from_json(obj["params"][name]) for name in PARAM_BLOCKS}
        params = EncoderParams(**blocks, activation=obj["activation"])
        meta = ModelMeta.from_dict(obj["meta"])
    except KeyError as e:
        raise ValueError(f"チェックポイントに必要なキーがありません: {e}: {path}") from e
    if len(meta.ind_labels) != params.n_classes:
        raise ValueError(f"ラベル語彙とクラス数が一致しません: {path}")
    return params, meta


def save_checkpoint(path: str, params: EncoderParams, meta: ModelMeta) -> str:
    """
    チェックポイントを保存（キー順固定なので同じ入力からは同じバイト列）
    """
    atomic_write_text(path, json.dumps(checkpoint_to_dict(params, meta), sort_keys=True) + "\n")
    logger.info(f"チェックポイントを保存しました: {path}")
    return path


def load_checkpoint(path: str) -> Tuple[EncoderParams, ModelMeta]:
    """
    チェックポイントを読み込む

    Returns:
        (params, meta)
    """
    params, meta = checkpoint_from_dict(read_json(path), path)
    logger.info(f"チェックポイントを読み込みました: {path} (C={params.n_classes}, 戦略={meta.strategy})")
    return params, meta
