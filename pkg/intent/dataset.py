"""
意図データセットの型と JSONL 入出力

* Utterance / Dataset: テキストレベルのデータ（CLINC 形式 JSONL: {"text", "label"}）
* FeatureSet         : 特徴ベクトルレベルのデータ（{"features", "label"}）。下流のモジュールはすべてこれを扱う
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from intent.files import atomic_write_text

logger = logging.getLogger(__name__)

DEFAULT_OOD_MARKER = "oos"
# FeatureSet.labels における OOD の番号
OOD_INDEX = -1


# --------------------------------------------------------------------------- #
# テキストレベル
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class Utterance:
    """
    ラベル付き発話
    """

    text: str
    label: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("発話テキストが空です")
        if not self.label:
            raise ValueError("ラベルが空です")


@dataclass(frozen=True)
class Dataset:
    """
    発話の順序付きリスト + IND ラベル語彙 + OOD マーカー
    """

    examples: Tuple[Utterance, ...]
    ind_labels: Tuple[str, ...]
    ood_marker: str = DEFAULT_OOD_MARKER

    def __post_init__(self) -> None:
        if not self.ind_labels:
            raise ValueError("IND ラベルが 0 件です")
        if len(set(self.ind_labels)) != len(self.ind_labels):
            raise ValueError("IND ラベルに重複があります")
        if self.ood_marker in self.ind_labels:
            raise ValueError(f"OOD マーカー {self.ood_marker!r} が IND ラベルに含まれています")
        allowed = set(self.ind_labels) | {self.ood_marker}
        for i, ex in enumerate(self.examples):
            if ex.label not in allowed:
                raise ValueError(f"未知のラベルです: {ex.label!r} (例 {i})")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self.examples)

    @property
    def n_ood(self) -> int:
        return sum(1 for ex in self.examples if ex.label == self.ood_marker)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.examples[i] for i in indices), self.ind_labels, self.ood_marker)


def load_jsonl(path: str, ood_marker: str = DEFAULT_OOD_MARKER) -> Dataset:
    """
    CLINC 形式の JSONL を読み込む

    Args:
        path: ファイルパス（各行 {"text": str, "label": str}）
        ood_marker: OOD を表すラベル

    Returns:
        Dataset: IND ラベルはマーカー以外のラベルをソートしたもの。例の順序は保持
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"データファイルが見つかりません: {path}")

    examples: List[Utterance] = []
    with open(path, encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                text, label = obj["text"], obj["label"]
                if not isinstance(text, str) or not isinstance(label, str):
                    raise TypeError("text/label は文字列である必要があります")
                examples.append(Utterance(text=text, label=label))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}:{lineno} 行目の形式が不正です: {e}") from e

    if not examples:
        raise ValueError(f"データファイルが空です: {path}")
    ind_labels = tuple(sorted({ex.label for ex in examples} - {ood_marker}))
    if not ind_labels:
        raise ValueError(f"IND ラベルが 0 件です（OOD 例のみ）: {path}")

    dataset = Dataset(tuple(examples), ind_labels, ood_marker)
    logger.info(f"ロードしました: {path}, {len(dataset)}件 (IND ラベル {len(ind_labels)}種, OOD {dataset.n_ood}件)")
    return dataset


def write_jsonl(path: str, dataset: Dataset) -> None:
    """
    Dataset を CLINC 形式 JSONL に書き出す
    """
    lines = [json.dumps({"text": ex.text, "label": ex.label}, ensure_ascii=False) for ex in dataset]
    atomic_write_text(path, "\n".join(lines) + "\n")


# --------------------------------------------------------------------------- #
# 特徴ベクトルレベル
# --------------------------------------------------------------------------- #
@dataclass(eq=False)
class FeatureSet:
    """
    特徴行列とクラス番号（OOD は OOD_INDEX）
    """

    features: np.ndarray
    labels: np.ndarray
    ind_labels: Tuple[str, ...]
    ood_marker: str = DEFAULT_OOD_MARKER

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError(f"特徴は (n×D) 行列である必要があります: {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("ラベル数と特徴数が一致しません")
        if not self.ind_labels:
            raise ValueError("IND ラベルが 0 件です")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("特徴に非有限値が含まれています")
        bad = (self.labels != OOD_INDEX) & ((self.labels < 0) | (self.labels >= len(self.ind_labels)))
        if np.any(bad):
            raise ValueError(f"範囲外のクラス番号があります: {self.labels[bad][:5].tolist()}")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.ind_labels)

    @property
    def ood_mask(self) -> np.ndarray:
        return self.labels == OOD_INDEX

    @property
    def n_ood(self) -> int:
        return int(np.sum(self.ood_mask))

    def label_name(self, index: int) -> str:
        return self.ood_marker if index == OOD_INDEX else self.ind_labels[index]

    def subset(self, indices) -> "FeatureSet":
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureSet(self.features[indices], self.labels[indices], self.ind_labels, self.ood_marker)

    def ind_only(self) -> "FeatureSet":
        return self.subset(np.flatnonzero(~self.ood_mask))

    def ood_only(self) -> "FeatureSet":
        return self.subset(np.flatnonzero(self.ood_mask))


def label_indices(labels: Sequence[str], ind_labels: Sequence[str], ood_marker: str) -> np.ndarray:
    """
    ラベル名をクラス番号に変換（OOD マーカーは OOD_INDEX）
    """
    lookup = {name: i for i, name in enumerate(ind_labels)}
    out = np.empty(len(labels), dtype=np.int64)
    for i, name in enumerate(labels):
        if name == ood_marker:
            out[i] = OOD_INDEX
        elif name in lookup:
            out[i] = lookup[name]
        else:
            raise ValueError(f"学習時の語彙にないラベルです: {name!r}")
    return out


def write_feature_jsonl(path: str, data: FeatureSet) -> None:
    """
    特徴ベクトルレベルの JSONL（{"features": [...], "label": name}）を書き出す
    """
    lines = [
        json.dumps({"features": [float(v) for v in row], "label": data.label_name(int(y))})
        for row, y in zip(data.features, data.labels)
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_feature_jsonl(
    path: str,
    ood_marker: str = DEFAULT_OOD_MARKER,
    ind_labels: Optional[Sequence[str]] = None,
) -> FeatureSet:
    """
    特徴ベクトルレベルの JSONL を読み込む

    Args:
        path: ファイルパス
        ood_marker: OOD ラベル
        ind_labels: 既知の IND 語彙（検証・テスト用ファイル）。None ならファイル内のラベルから作成
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"データファイルが見つかりません: {path}")
    rows: List[List[float]] = []
    names: List[str] = []
    with open(path, encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rows.append([float(v) for v in obj["features"]])
                names.append(str(obj["label"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}:{lineno} 行目の形式が不正です: {e}") from e
    if not rows:
        raise ValueError(f"データファイルが空です: {path}")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"特徴次元が行ごとに異なります: {path}")

    vocab = tuple(ind_labels) if ind_labels is not None else tuple(sorted(set(names) - {ood_marker}))
    if not vocab:
        raise ValueError(f"IND ラベルが 0 件です（OOD 例のみ）: {path}")
    data = FeatureSet(np.array(rows), label_indices(names, vocab, ood_marker), vocab, ood_marker)
    logger.info(f"ロードしました: {path}, {len(data)}件 (次元 {data.dim}, OOD {data.n_ood}件)")
    return data


def sniff_format(path: str) -> str:
    """
    JSONL の先頭行から形式を判定（"text" または "features"）
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"データファイルが見つかりません: {path}")
    with open(path, encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno} 行目の形式が不正です: {e}") from e
            if isinstance(obj, dict) and "features" in obj:
                return "features"
            if isinstance(obj, dict) and "text" in obj:
                return "text"
            raise ValueError(f"{path}:{lineno} 行目に text も features もありません")
    raise ValueError(f"データファイルが空です: {path}")
