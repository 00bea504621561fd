"""
実験設定（RunConfig）

設定ファイルは key=value 形式（python-dotenv で解析）。キーは RunConfig のフィールド名。
優先順位: コマンドライン引数 > 設定ファイル > 既定値。未知のキーはエラー。
"""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Mapping, Optional

import dotenv

from detection.pipeline import PipelineConfig
from intent.dataset import DEFAULT_OOD_MARKER
from intent.featurizer import FeaturizerConfig
from intent.synthetic import SyntheticSpec
from model.objectives import KnclConfig
from model.trainer import TrainPlan

from .constants import default_output_dir

logger = logging.getLogger(__name__)

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


@dataclass(frozen=True)
class RunConfig:
    """
    1回の実験の全設定
    """

    # ---- データ ----
    train_data: str = ""
    val_data: str = ""
    test_data: str = ""
    ood_marker: str = DEFAULT_OOD_MARKER
    # ---- 合成データ ----
    synth_ind: int = 5
    synth_ood: int = 2
    synth_dim: int = 16
    synth_per_cluster: int = 100
    synth_spread: float = 0.3
    synth_scale: float = 3.0
    synth_seed: int = 7
    # ---- 特徴化 ----
    feature_width: int = 512
    feature_seed: int = 0
    # ---- エンコーダ ----
    hidden: int = 64
    d_z: int = 32
    activation: str = "tanh"
    dropout: float = 0.5
    # ---- 学習 ----
    strategy: str = "kncl_then_ce"
    epochs_phase1: int = 100
    epochs_phase2: int = 10
    batch_size: int = 128
    lr: float = 1e-3
    seed: int = 0
    kncl_k: int = 5
    tau: float = 0.1
    augment: bool = True
    epsilon_adv: float = 0.01
    # ---- 検出 ----
    scorer: str = "knn"
    k_score: int = 5
    lof_k: int = 20
    classify: str = "auto"
    use_val_ood: bool = True
    # ---- 出力 ----
    output_dir: str = field(default_factory=default_output_dir)

    # ---------------- 構築 ---------------- #
    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        """
        既定値 → 設定ファイル → 上書き値の順に適用

        Args:
            path: key=value 形式の設定ファイル（None なら既定値のみ）
            overrides: コマンドライン引数などの上書き値（フィールド名 → 値）
        """
        config = cls()
        if path:
            if not os.path.exists(path):
                raise FileNotFoundError(f"設定ファイルが見つかりません: {path}")
            values = {k: v for k, v in dotenv.dotenv_values(path).items()}
            config = config.merged(values, source=path)
            logger.info(f"設定ファイルを読み込みました: {path} ({len(values)}項目)")
        if overrides:
            config = config.merged(overrides, source="コマンドライン")
        return config

    def merged(self, values: Mapping[str, Any], source: str = "") -> "RunConfig":
        """
        値を型変換して差し替えた設定（未知のキーは ValueError）
        """
        defaults = {f.name: getattr(self, f.name) for f in fields(self)}
        unknown = sorted(set(values) - set(defaults))
        if unknown:
            raise ValueError(f"未知の設定キーです ({source}): {', '.join(unknown)}")
        changes = {key: _coerce(key, raw, defaults[key]) for key, raw in values.items()}
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    # ---------------- 変換 ---------------- #
    def featurizer(self) -> FeaturizerConfig:
        return FeaturizerConfig(width=self.feature_width, seed=self.feature_seed)

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            n_ind_clusters=self.synth_ind,
            n_ood_clusters=self.synth_ood,
            dim=self.synth_dim,
            samples_per_cluster=self.synth_per_cluster,
            cluster_spread=self.synth_spread,
            center_scale=self.synth_scale,
            seed=self.synth_seed,
            ood_marker=self.ood_marker,
        )

    def train_plan(self) -> TrainPlan:
        return TrainPlan.for_strategy(
            self.strategy,
            epochs_phase1=self.epochs_phase1,
            epochs_phase2=self.epochs_phase2,
            batch_size=self.batch_size,
            kncl_cfg=KnclConfig(k=self.kncl_k, tau=self.tau, use_augmented_views=self.augment, epsilon_adv=self.epsilon_adv),
            lr=self.lr,
            seed=self.seed,
            dropout_rate=self.dropout,
            hidden=self.hidden,
            d_z=self.d_z,
            activation=self.activation,
        )

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            scorer=self.scorer,
            k_score=self.k_score,
            lof_k=self.lof_k,
            classify=self.classify,
            use_val_ood=self.use_val_ood,
        )


def _coerce(key: str, raw: Any, default: Any) -> Any:
    """
    既定値の型に合わせて変換
    """
    if raw is None:
        raise ValueError(f"設定キー {key} に値がありません")
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ValueError(f"設定キー {key} は真偽値である必要があります: {raw!r}")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except (TypeError, ValueError) as e:
        raise ValueError(f"設定キー {key} の値を {type(default).__name__} に変換できません: {raw!r}") from e
    return str(raw)
