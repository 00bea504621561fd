"""
OOD 検出パイプライン（特徴化 → 符号化 → 正規化 → スコア → 閾値判定 → クラス決定）とバンドル入出力
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from detection.calibration import Threshold, apply_threshold, calibrate
from detection.gda import GdaModel, fit_gda, gda_scores
from detection.knn_index import KnnIndex, build_index, embed
from detection.lof import LofModel, fit_lof
from detection.scorers import SCORERS, msp_scores
from intent.dataset import OOD_INDEX, FeatureSet, Utterance
from intent.featurizer import featurize
from intent.files import atomic_write_text
from model.checkpoint import (
    ModelMeta,
    array_from_json,
    array_to_json,
    check_header,
    checkpoint_from_dict,
    checkpoint_to_dict,
    read_json,
)
from model.encoder import EncoderParams, classify

logger = logging.getLogger(__name__)

CLASSIFY_MODES = ("auto", "head", "knn")
BUNDLE_FORMAT = "neighbor-ood/bundle"
BUNDLE_VERSION = 1

Query = Union[str, Utterance, np.ndarray, list]


@dataclass(frozen=True)
class PipelineConfig:
    """
    スコア関数と分類モード

    scorer: knn / msp / lof / gda、k_score: KNN スコアと KNN 投票の近傍数、lof_k: LOF の近傍数、
    classify: auto（ヘッド学習済みならヘッド、そうでなければ KNN 投票）/ head / knn、
    use_val_ood: λ の決定に検証 OOD 例を使うか
    """

    scorer: str = "knn"
    k_score: int = 5
    lof_k: int = 20
    classify: str = "auto"
    use_val_ood: bool = True

    def __post_init__(self) -> None:
        if self.scorer not in SCORERS:
            raise ValueError(f"未知のスコア関数です: {self.scorer} (候補: {', '.join(SCORERS)})")
        if self.classify not in CLASSIFY_MODES:
            raise ValueError(f"未知の分類モードです: {self.classify} (候補: {', '.join(CLASSIFY_MODES)})")
        if self.k_score < 1 or self.lof_k < 1:
            raise ValueError("k_score と lof_k は正の整数である必要があります")


@dataclass(frozen=True)
class Decision:
    """
    1クエリの判定結果
    """

    score: float
    is_ood: bool
    class_index: int
    label: str

    def as_line(self) -> str:
        """
        score<TAB>decision<TAB>class_or_OOD
        """
        return f"{self.score!r}\t{'OOD' if self.is_ood else 'IND'}\t{'OOD' if self.is_ood else self.label}"


class DetectionPipeline:
    """
    学習済みエンコーダ + KNN インデックス + スコア関数 + 閾値
    """

    def __init__(
        self,
        params: EncoderParams,
        meta: ModelMeta,
        index: KnnIndex,
        config: PipelineConfig,
        threshold: Optional[Threshold] = None,
    ) -> None:
        """
        初期化（LOF / GDA の状態はインデックスから決定的に作る）

        Args:
            params: エンコーダパラメータ
            meta: ラベル語彙・特徴化設定・学習戦略
            index: 学習データのインデックス
            config: パイプライン設定
            threshold: 閾値（None なら未較正）
        """
        if index.n_classes != params.n_classes or len(meta.ind_labels) != params.n_classes:
            raise ValueError("インデックス・ラベル語彙・分類ヘッドのクラス数が一致しません")
        if index.dim != params.d_z:
            raise ValueError(f"インデックス次元 {index.dim} と表現次元 {params.d_z} が一致しません")
        self.params = params
        self.meta = meta
        self.index = index
        self.config = config
        self.threshold = threshold
        self.lof: Optional[LofModel] = None
        self.gda: Optional[GdaModel] = None

        if config.scorer == "msp" and not meta.head_trained:
            raise RuntimeError("分類ヘッドが未学習のモデル（only_kncl）では MSP スコアは使えません")
        if config.scorer == "knn" and config.k_score > index.size:
            raise ValueError(f"k_score={config.k_score} がインデックスの行数 M={index.size} を超えています")
        if config.scorer == "lof":
            self.lof = fit_lof(index, config.lof_k)
        elif config.scorer == "gda":
            self.gda = fit_gda(index)

    # ---------------- 公共 ---------------- #
    @property
    def is_calibrated(self) -> bool:
        return self.threshold is not None

    @property
    def n_classes(self) -> int:
        return self.params.n_classes

    def head_available(self) -> bool:
        return self.meta.head_trained

    def resolve_classify(self, mode: Optional[str] = None) -> str:
        """
        実際に使う分類モード（head か knn）
        """
        mode = mode or self.config.classify
        if mode not in CLASSIFY_MODES:
            raise ValueError(f"未知の分類モードです: {mode} (候補: {', '.join(CLASSIFY_MODES)})")
        if mode == "auto":
            return "head" if self.meta.head_trained else "knn"
        if mode == "head" and not self.meta.head_trained:
            raise RuntimeError(
                f"学習戦略 {self.meta.strategy} では分類ヘッドが学習されていないため、ソフトマックス分類器は使えません"
                "（--classify knn を使ってください）"
            )
        return mode

    def featurize_queries(self, queries) -> np.ndarray:
        """
        テキスト / Utterance / 特徴ベクトルを (N×D_in) 行列に
        """
        rows = []
        for q in queries:
            if isinstance(q, (str, Utterance)):
                if self.meta.featurizer is None:
                    raise ValueError("このモデルは特徴ベクトル入力で学習されたため、テキストは採点できません")
                text = q.text if isinstance(q, Utterance) else q
                rows.append(featurize(text, self.meta.featurizer.width, self.meta.featurizer.seed))
            else:
                rows.append(np.asarray(q, dtype=np.float64))
        if not rows:
            return np.zeros((0, self.params.d_in))
        return np.vstack(rows)

    def scores(self, features) -> np.ndarray:
        """
        各行の OOD スコア（λ は不要）
        """
        z, u = self._represent(features)
        return self._scores(z, u)

    def classify_ind(self, features, mode: Optional[str] = None) -> np.ndarray:
        """
        各行の IND クラス（閾値判定前）
        """
        resolved = self.resolve_classify(mode)
        z, u = self._represent(features)
        return self._classes(z, u, resolved)

    def predict(self, features, mode: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        バッチ判定

        Returns:
            (スコア, 予測クラス番号（OOD は OOD_INDEX）)
        """
        self._require_calibrated()
        resolved = self.resolve_classify(mode)
        z, u = self._represent(features)
        s = self._scores(z, u)
        return s, apply_threshold(s, self._classes(z, u, resolved), self.threshold.lam)

    def decide(self, query: Query, mode: Optional[str] = None) -> Decision:
        """
        1クエリの判定: S ≥ λ なら OOD、そうでなければ IND とそのクラス
        """
        self._require_calibrated()
        s, pred = self.predict(self.featurize_queries([query]), mode)
        cls = int(pred[0])
        label = self.meta.ood_marker if cls == OOD_INDEX else self.meta.ind_labels[cls]
        return Decision(score=float(s[0]), is_ood=cls == OOD_INDEX, class_index=cls, label=label)

    def calibrate(self, val_data: FeatureSet) -> Threshold:
        """
        検証データで λ を決めてパイプラインに設定
        """
        if len(val_data) == 0:
            raise ValueError("検証データが空です")
        if tuple(val_data.ind_labels) != tuple(self.meta.ind_labels):
            raise ValueError("検証データのラベル語彙が学習時と一致しません")
        resolved = self.resolve_classify()
        z, u = self._represent(val_data.features)
        self.threshold = calibrate(
            self._scores(z, u),
            val_data.labels,
            self._classes(z, u, resolved),
            self.n_classes,
            use_ood=self.config.use_val_ood,
        )
        return self.threshold

    # ---------------- 私有 ---------------- #
    def _require_calibrated(self) -> None:
        if self.threshold is None:
            raise RuntimeError("パイプラインが較正されていません（calibrate を先に実行してください）")

    def _represent(self, features) -> Tuple[np.ndarray, np.ndarray]:
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[0] == 0:
            raise ValueError("採点するデータが空です")
        return embed(self.params, features)

    def _scores(self, z: np.ndarray, u: np.ndarray) -> np.ndarray:
        scorer = self.config.scorer
        if scorer == "knn":
            dist, _ = self.index.search_batch(u, self.config.k_score)
            return dist.mean(axis=1)
        if scorer == "msp":
            # 分類ヘッドは正規化前の表現に掛ける
            return msp_scores(classify(self.params, z))
        if scorer == "lof":
            return self.lof.scores(u)
        return gda_scores(self.gda, u)

    def _classes(self, z: np.ndarray, u: np.ndarray, mode: str) -> np.ndarray:
        if mode == "head":
            return np.argmax(classify(self.params, z), axis=1)
        _, rows = self.index.search_batch(u, self.config.k_score)
        votes = self.index.labels[rows]
        # 同数なら小さいクラス番号
        return np.array([np.bincount(v, minlength=self.n_classes).argmax() for v in votes], dtype=np.int64)


# --------------------------------------------------------------------------- #
# 構築
# --------------------------------------------------------------------------- #
def build_pipeline(
    params: EncoderParams,
    meta: ModelMeta,
    train_set: FeatureSet,
    val_set: Optional[FeatureSet],
    config: PipelineConfig = PipelineConfig(),
    use_faiss: Optional[bool] = None,
) -> DetectionPipeline:
    """
    インデックス構築 → スコア関数の準備 → 検証データで λ を決定

    Args:
        params: 学習済みパラメータ
        meta: モデルのメタデータ
        train_set: インデックスに入れる学習データ
        val_set: 較正用の検証データ（None なら未較正のまま返す）
        config: パイプライン設定
        use_faiss: KnnIndex に渡す FAISS 使用フラグ
    """
    index = build_index(params, train_set, use_faiss=use_faiss)
    pipeline = DetectionPipeline(params, meta, index, config)
    if val_set is not None:
        pipeline.calibrate(val_set)
    logger.info(
        f"パイプラインを構築しました: scorer={config.scorer}, k_score={config.k_score}, "
        f"λ={None if pipeline.threshold is None else pipeline.threshold.lam}"
    )
    return pipeline


# --------------------------------------------------------------------------- #
# バンドル入出力
# --------------------------------------------------------------------------- #
def bundle_to_dict(pipeline: DetectionPipeline) -> Dict[str, Any]:
    threshold = pipeline.threshold
    return {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "checkpoint": checkpoint_to_dict(pipeline.params, pipeline.meta),
        "index": {
            "embeddings": array_to_json(pipeline.index.embeddings),
            "labels": [int(v) for v in pipeline.index.labels],
        },
        "config": asdict(pipeline.config),
        "threshold": None if threshold is None else asdict(threshold),
    }


def save_bundle(path: str, pipeline: DetectionPipeline) -> str:
    """
    チェックポイント + インデックス + スコア設定 + λ を1ファイルに保存
    """
    atomic_write_text(path, json.dumps(bundle_to_dict(pipeline), sort_keys=True) + "\n")
    logger.info(f"バンドルを保存しました: {path}")
    return path


def load_bundle(path: str, use_faiss: Optional[bool] = None) -> DetectionPipeline:
    """
    バンドルを読み込む（LOF / GDA はインデックスから再計算）
    """
    obj = read_json(path)
    check_header(obj, BUNDLE_FORMAT, BUNDLE_VERSION, path)
    try:
        params, meta = checkpoint_from_dict(obj["checkpoint"], path)
        index = KnnIndex(
            array_from_json(obj["index"]["embeddings"]),
            obj["index"]["labels"],
            params.n_classes,
            use_faiss=use_faiss,
        )
        config = PipelineConfig(**obj["config"])
        raw = obj["threshold"]
    except (KeyError, TypeError) as e:
        raise ValueError(f"バンドルの内容が不正です: {e}: {path}") from e
    threshold = None if raw is None else Threshold(lam=float(raw["lam"]), calibration_metric=float(raw["calibration_metric"]))
    logger.info(f"バンドルを読み込みました: {path} (scorer={config.scorer})")
    return DetectionPipeline(params, meta, index, config, threshold)
