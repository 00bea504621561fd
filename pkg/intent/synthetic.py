"""
合成ガウスクラスタベンチマーク

IND クラスタと OOD クラスタの中心を [-center_scale, +center_scale]^dim から一様に引き、
各クラスタの点を標準偏差 cluster_spread の等方ガウスで生成する。
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Tuple

import numpy as np

from intent.dataset import DEFAULT_OOD_MARKER, OOD_INDEX, FeatureSet
from intent.split import DEFAULT_FRACTIONS, allocate, check_fractions
from model.numerics import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    """
    合成データの仕様
    """

    n_ind_clusters: int = 5
    n_ood_clusters: int = 2
    dim: int = 16
    samples_per_cluster: int = 100
    cluster_spread: float = 0.3
    center_scale: float = 3.0
    seed: int = 7
    fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS
    ood_marker: str = DEFAULT_OOD_MARKER

    def __post_init__(self) -> None:
        if self.n_ind_clusters < 2:
            raise ValueError(f"IND クラスタは2個以上必要です（macro-F1 のため）: {self.n_ind_clusters}")
        if self.n_ood_clusters < 0:
            raise ValueError(f"OOD クラスタ数は非負である必要があります: {self.n_ood_clusters}")
        if self.dim < 1 or self.samples_per_cluster < 1:
            raise ValueError("dim と samples_per_cluster は正である必要があります")
        if self.cluster_spread <= 0 or self.center_scale <= 0:
            raise ValueError("cluster_spread と center_scale は正である必要があります")
        if self.seed < 0:
            raise ValueError(f"seed は非負である必要があります: {self.seed}")
        check_fractions(self.fractions)

    @property
    def ind_labels(self) -> Tuple[str, ...]:
        return tuple(f"intent_{i:02d}" for i in range(self.n_ind_clusters))

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["fractions"] = list(self.fractions)
        return d


def generate_synthetic(spec: SyntheticSpec) -> Tuple[FeatureSet, FeatureSet, FeatureSet]:
    """
    合成ベンチマークを生成

    Args:
        spec: 合成データ仕様

    Returns:
        (train, val, test)。train は IND 点のみ、val/test は IND と OOD を含む
    """
    rng = make_rng(spec.seed)
    n_clusters = spec.n_ind_clusters + spec.n_ood_clusters
    centers = rng.uniform(-spec.center_scale, spec.center_scale, size=(n_clusters, spec.dim))
    noise = rng.normal(0.0, spec.cluster_spread, size=(n_clusters, spec.samples_per_cluster, spec.dim))
    points = centers[:, None, :] + noise

    train_f, val_f, test_f = spec.fractions
    ind_counts = allocate(spec.samples_per_cluster, (train_f, val_f, test_f))
    ood_counts = [0] + allocate(spec.samples_per_cluster, (val_f, test_f))

    parts = ([], [], [])
    part_labels = ([], [], [])
    for c in range(n_clusters):
        is_ood = c >= spec.n_ind_clusters
        counts = ood_counts if is_ood else ind_counts
        label = OOD_INDEX if is_ood else c
        start = 0
        for part, labels, count in zip(parts, part_labels, counts):
            part.append(points[c, start : start + count])
            labels.extend([label] * count)
            start += count

    sets = tuple(
        FeatureSet(np.vstack(part), np.asarray(labels, dtype=np.int64), spec.ind_labels, spec.ood_marker)
        for part, labels in zip(parts, part_labels)
    )
    train, val, test = sets
    logger.info(
        f"合成データを生成しました: IND {spec.n_ind_clusters}, OOD {spec.n_ood_clusters}, dim={spec.dim}, "
        f"train={len(train)}, val={len(val)}, test={len(test)}"
    )
    return train, val, test
