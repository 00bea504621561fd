"""
ハイパーパラメータスイープ（KNCL の k × バッチサイズ、KNN スコアの k）

knn_k は推論時の値なので、同じシード・同じ学習設定のモデルを使い回して再較正だけを行う。
kncl_k と batch_size はセルごとに学習し直す。
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from detection.pipeline import PipelineConfig, build_pipeline
from evaluation.metrics import METRIC_NAMES, EvalReport
from evaluation.report import evaluate
from intent.dataset import FeatureSet
from intent.featurizer import FeaturizerConfig
from model.checkpoint import ModelMeta
from model.trainer import TrainPlan, TrainReport, train

logger = logging.getLogger(__name__)

SWEEP_AXES = ("kncl_k", "knn_k", "batch_size")
DEFAULT_SEEDS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class SweepGrid:
    """
    スイープ軸（2軸まで）と値、シード
    """

    axis: str
    values: Tuple[int, ...]
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    axis2: Optional[str] = None
    values2: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for name in (self.axis, self.axis2):
            if name is not None and name not in SWEEP_AXES:
                raise ValueError(f"未知のスイープ軸です: {name} (候補: {', '.join(SWEEP_AXES)})")
        if not self.values or not self.seeds:
            raise ValueError("スイープの値とシードは空にできません")
        if self.axis2 is not None and (not self.values2 or self.axis2 == self.axis):
            raise ValueError("第2軸には第1軸と異なる名前と空でない値が必要です")
        if self.axis2 is None and self.values2:
            raise ValueError("values2 を指定するには axis2 が必要です")
        if any(v < 1 for v in tuple(self.values) + tuple(self.values2)):
            raise ValueError("スイープの値は正の整数である必要があります")

    @property
    def axes(self) -> Tuple[str, ...]:
        return (self.axis,) if self.axis2 is None else (self.axis, self.axis2)

    def cells(self) -> List[Dict[str, int]]:
        """
        全セル（第1軸が外側のループ）
        """
        if self.axis2 is None:
            return [{self.axis: v} for v in self.values]
        return [{self.axis: v, self.axis2: w} for v in self.values for w in self.values2]


@dataclass(eq=False)
class SweepRow:
    cell: Dict[str, int]
    seed: int
    report: EvalReport


@dataclass(eq=False)
class SweepResult:
    """
    セル × シードの評価結果
    """

    grid: SweepGrid
    rows: List[SweepRow]

    def summary(self) -> List[Tuple[Dict[str, int], Dict[str, float], Dict[str, float]]]:
        """
        セルごとのシード平均と標準偏差（母標準偏差）
        """
        out = []
        for cell in self.grid.cells():
            reports = [r.report.as_dict() for r in self.rows if r.cell == cell]
            table = np.array([[rep[m] for m in METRIC_NAMES] for rep in reports])
            means = dict(zip(METRIC_NAMES, table.mean(axis=0).tolist()))
            stds = dict(zip(METRIC_NAMES, table.std(axis=0).tolist()))
            out.append((cell, means, stds))
        return out

    def to_csv(self) -> str:
        """
        axis[,axis2],seed,指標..., 指標_std...（最後にセルごとの seed=mean 行）
        """
        return metrics_table_csv(
            list(self.grid.axes),
            [([r.cell[a] for a in self.grid.axes], r.seed, r.report.as_dict()) for r in self.rows],
            [([cell[a] for a in self.grid.axes], means, stds) for cell, means, stds in self.summary()],
        )


def metrics_table_csv(key_names: List[str], rows, summary) -> str:
    """
    シードごとの行と平均行からなる指標表
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(key_names + ["seed"] + list(METRIC_NAMES) + [f"{m}_std" for m in METRIC_NAMES])
    for keys, seed, metrics in rows:
        writer.writerow(list(keys) + [seed] + [repr(metrics[m]) for m in METRIC_NAMES] + [""] * len(METRIC_NAMES))
    for keys, means, stds in summary:
        writer.writerow(
            list(keys) + ["mean"] + [repr(means[m]) for m in METRIC_NAMES] + [repr(stds[m]) for m in METRIC_NAMES]
        )
    return buf.getvalue()


def _apply_cell(plan: TrainPlan, config: PipelineConfig, cell: Dict[str, int]) -> Tuple[TrainPlan, PipelineConfig]:
    for axis, value in cell.items():
        if axis == "kncl_k":
            plan = plan.with_overrides(kncl_cfg=replace(plan.kncl_cfg, k=value))
        elif axis == "batch_size":
            plan = plan.with_overrides(batch_size=value)
        else:
            config = replace(config, k_score=value)
    return plan, config


def sweep(
    base_plan: TrainPlan,
    base_config: PipelineConfig,
    grid: SweepGrid,
    data: Tuple[FeatureSet, FeatureSet, FeatureSet],
    featurizer: Optional[FeaturizerConfig] = None,
) -> SweepResult:
    """
    グリッドの全セル × 全シードを学習・較正・評価

    Args:
        base_plan: 基準の学習計画（seed はグリッドのシードで置き換える）
        base_config: 基準のパイプライン設定
        grid: スイープ軸
        data: (train, val, test)
        featurizer: テキスト由来データの特徴化設定（チェックポイントのメタデータ用）
    """
    train_set, val_set, test_set = data
    rows: List[SweepRow] = []
    for seed in grid.seeds:
        trained: Dict[Tuple, TrainReport] = {}
        for cell in grid.cells():
            plan, config = _apply_cell(base_plan.with_overrides(seed=seed), base_config, cell)
            key = tuple(sorted((a, v) for a, v in cell.items() if a != "knn_k"))
            if key not in trained:
                trained[key] = train(plan, train_set, val_set)
            report = trained[key]
            meta = ModelMeta(
                ind_labels=train_set.ind_labels,
                ood_marker=train_set.ood_marker,
                featurizer=featurizer,
                strategy=report.strategy,
                head_trained=report.head_trained,
            )
            pipeline = build_pipeline(report.params, meta, train_set, val_set, config)
            rows.append(SweepRow(cell=cell, seed=seed, report=evaluate(pipeline, test_set)))
            logger.info(f"スイープ: {cell}, seed={seed}, OOD F1={rows[-1].report.ood_f1:.4f}")
    return SweepResult(grid=grid, rows=rows)


def parse_int_list(text: str) -> Tuple[int, ...]:
    """
    "1,3,5" → (1, 3, 5)
    """
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as e:
        raise ValueError(f"整数のカンマ区切りリストではありません: {text!r}") from e
    if not values:
        raise ValueError(f"値が空です: {text!r}")
    return values


def seed_range(n: int) -> Tuple[int, ...]:
    """
    シード 1..n
    """
    if n < 1:
        raise ValueError(f"シード数は正である必要があります: {n}")
    return tuple(range(1, n + 1))
