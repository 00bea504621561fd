"""
層化分割

* IND ラベルはクラスごとに floor 配分 + 最大剰余法で train/val/test に分ける（各分割に最低1件）
* OOD 例は学習に使わない（教師なし OOD 設定）ため、val:test の比で val と test に分ける
"""

from __future__ import annotations

import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from intent.dataset import Dataset
from model.numerics import make_rng

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.6, 0.2, 0.2)


def check_fractions(fractions: Sequence[float]) -> Tuple[float, float, float]:
    """
    (train, val, test) の比率を検査
    """
    if len(fractions) != 3:
        raise ValueError(f"比率は (train, val, test) の3つが必要です: {fractions}")
    if any(f <= 0 for f in fractions):
        raise ValueError(f"比率はすべて正である必要があります: {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"比率の合計が 1 ではありません: {sum(fractions)}")
    return float(fractions[0]), float(fractions[1]), float(fractions[2])


def allocate(n: int, fractions: Sequence[float], minimum: int = 0) -> List[int]:
    """
    n 件を比率に従って整数配分（floor + 最大剰余法、同じ剰余は前の分割を優先）

    Args:
        n: 件数
        fractions: 各分割の比率（合計で正規化）
        minimum: 各分割の最低件数

    Returns:
        List[int]: 各分割の件数（合計 n）
    """
    weights = np.asarray(fractions, dtype=np.float64)
    weights = weights / weights.sum()
    if n < minimum * len(weights):
        raise ValueError(f"{n}件では各分割に {minimum}件ずつ割り当てられません")
    exact = weights * n
    counts = np.floor(exact).astype(np.int64)
    remainder = exact - counts
    order = np.argsort(-remainder, kind="stable")
    for i in order[: n - int(counts.sum())]:
        counts[i] += 1
    # 最低件数を満たさない分割には、最大の分割から1件ずつ移す
    while np.any(counts < minimum):
        short = int(np.flatnonzero(counts < minimum)[0])
        donor = int(np.argmax(counts))
        counts[donor] -= 1
        counts[short] += 1
    return [int(c) for c in counts]


def split(
    dataset: Dataset,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> Tuple[Dataset, Dataset, Dataset]:
    """
    ラベルで層化した train/val/test 分割

    Args:
        dataset: 分割するデータ
        fractions: (train, val, test) の比率（合計 1）
        seed: シャッフル用シード

    Returns:
        (train, val, test)。各分割内の順序は元データの順序。train に OOD 例は含まれない
    """
    train_f, val_f, test_f = check_fractions(fractions)
    rng = make_rng(seed)

    by_label: Dict[str, List[int]] = {}
    for i, ex in enumerate(dataset):
        by_label.setdefault(ex.label, []).append(i)

    parts: Tuple[List[int], List[int], List[int]] = ([], [], [])
    for label in sorted(by_label):
        members = np.asarray(by_label[label])
        members = members[rng.permutation(len(members))]
        if label == dataset.ood_marker:
            counts = [0] + allocate(len(members), (val_f, test_f))
        else:
            if len(members) < 3:
                raise ValueError(f"ラベル {label!r} の例が {len(members)}件しかありません（train/val/test に各1件以上必要）")
            counts = allocate(len(members), (train_f, val_f, test_f), minimum=1)
        start = 0
        for part, count in zip(parts, counts):
            part.extend(int(i) for i in members[start : start + count])
            start += count

    train, val, test = (dataset.subset(sorted(p)) for p in parts)
    logger.info(f"分割しました: train={len(train)}, val={len(val)} (OOD {val.n_ood}), test={len(test)} (OOD {test.n_ood})")
    return train, val, test
