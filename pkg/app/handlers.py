"""
サブコマンドの処理関数

どの関数も (RunConfig, argparse.Namespace, OutputTracker) を受け取り、
出力は必ず tracker 経由で書き出す（失敗時に main がまとめて削除する）。
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional, Tuple

from detection.pipeline import build_pipeline, load_bundle, save_bundle
from evaluation.benchmark import run_benchmark
from evaluation.report import (
    HistogramSpec,
    confusion_csv,
    evaluate,
    metrics_csv,
    overlap_coefficient,
    score_histograms,
    similarity_csv,
    similarity_profile,
)
from evaluation.sweep import SweepGrid, parse_int_list, seed_range, sweep
from intent.dataset import FeatureSet, sniff_format, write_feature_jsonl
from intent.featurizer import FeaturizerConfig
from intent.loader import load_feature_set, load_training_set
from intent.synthetic import generate_synthetic
from model.checkpoint import ModelMeta, load_checkpoint, save_checkpoint
from model.trainer import loss_curve_csv, train

from .config import RunConfig
from .constants import (
    BENCHMARK_FILE,
    BUNDLE_FILE_TEMPLATE,
    CHECKPOINT_FILE,
    CONFUSION_FILE,
    HISTOGRAM_FILE,
    LOSS_CURVE_FILE,
    MANIFEST_FILE,
    METRICS_FILE,
    SIMILARITY_FILE,
    SWEEP_FILE,
    SYNTH_FILES,
    __version__,
)
from .utils import OutputTracker, console, key_value_table, metrics_table, summary_table

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "neighbor-ood/synthetic-manifest"
MANIFEST_VERSION = 1


# ---------------- 私有 ---------------- #
def _require(value: str, flag: str) -> str:
    if not value:
        raise ValueError(f"{flag} を指定してください")
    return value


def _train_featurizer(config: RunConfig) -> Optional[FeaturizerConfig]:
    """
    学習データがテキスト形式のときだけ特徴化設定を返す
    """
    if sniff_format(_require(config.train_data, "--data")) == "text":
        return config.featurizer()
    return None


def _load_splits(config: RunConfig) -> Tuple[Tuple[FeatureSet, FeatureSet, FeatureSet], Optional[FeaturizerConfig]]:
    """
    データファイル（--data/--val/--test）があれば読み込み、なければ合成データを生成
    """
    if not (config.train_data or config.val_data or config.test_data):
        logger.info("データファイルの指定がないため合成データを使います")
        return generate_synthetic(config.synthetic_spec()), None
    featurizer = _train_featurizer(config)
    train_set = load_training_set(config.train_data, config.ood_marker, featurizer)
    val_set = load_feature_set(_require(config.val_data, "--val"), config.ood_marker, featurizer, train_set.ind_labels)
    test_set = load_feature_set(_require(config.test_data, "--test"), config.ood_marker, featurizer, train_set.ind_labels)
    return (train_set, val_set, test_set), featurizer


def _bundle_name(config: RunConfig) -> str:
    return BUNDLE_FILE_TEMPLATE.format(scorer=config.scorer)


def _bundle_path(config: RunConfig, args: argparse.Namespace) -> str:
    path = getattr(args, "bundle", None) or os.path.join(config.output_dir, _bundle_name(config))
    if not os.path.exists(path):
        raise FileNotFoundError(f"バンドルが見つかりません: {path}（calibrate を先に実行してください）")
    return path


# ---------------- 公共 ---------------- #
def cmd_synth(config: RunConfig, args: argparse.Namespace, tracker: OutputTracker) -> None:
    """
    合成データ（train/val/test）とマニフェストを書き出す
    """
    spec = config.synthetic_spec()
    splits = dict(zip(("train", "val", "test"), generate_synthetic(spec)))
    counts = {}
    for split, data in splits.items():
        write_feature_jsonl(tracker.path(SYNTH_FILES[split]), data)
        counts[split] = {"n": len(data), "n_ood": data.n_ood}
    tracker.write_json(
        MANIFEST_FILE,
        {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "generator": __version__,
            "spec": spec.to_dict(),
            "files": SYNTH_FILES,
            "counts": counts,
            "ind_labels": list(spec.ind_labels),
        },
    )
    console.print(key_value_table("合成データ", {f"{s} (OOD)": f"{c['n']} ({c['n_ood']})" for s, c in counts.items()}))


def cmd_train(config: RunConfig, args: argparse.Namespace, tracker: OutputTracker) -> None:
    """
    エンコーダを学習し、チェックポイントと損失曲線を書き出す
    """
    featurizer = _train_featurizer(config)
    plan = config.train_plan()
    train_set = load_training_set(config.train_data, config.ood_marker, featurizer)
    val_set = None
    if config.val_data:
        val_set = load_feature_set(config.val_data, config.ood_marker, featurizer, train_set.ind_labels)

    report = train(plan, train_set, val_set)
    meta = ModelMeta(
        ind_labels=train_set.ind_labels,
        ood_marker=train_set.ood_marker,
        featurizer=featurizer,
        strategy=plan.strategy,
        head_trained=report.head_trained,
    )
    save_checkpoint(tracker.path(CHECKPOINT_FILE), report.params, meta)
    tracker.write_text(LOSS_CURVE_FILE, loss_curve_csv(report))

    final = report.curve[-1] if report.curve else None
    console.print(
        key_value_table(
            "学習結果",
            {
                "strategy": plan.strategy,
                "epochs": len(report.curve),
                "final loss": "-" if final is None else f"{final.loss:.6f}",
                "head trained": report.head_trained,
            },
        )
    )


def cmd_calibrate(config: RunConfig, args: argparse.Namespace, tracker: OutputTracker) -> None:
    """
    チェックポイントからパイプラインを構築し、検証データで λ を決めてバンドルを書き出す
    """
    checkpoint = args.checkpoint or os.path.join(config.output_dir, CHECKPOINT_FILE)
    val_path = _require(config.val_data, "--val")
    params, meta = load_checkpoint(checkpoint)
    train_set = load_feature_set(_require(config.train_data, "--data"), meta.ood_marker, meta.featurizer, meta.ind_labels)
    val_set = load_feature_set(val_path, meta.ood_marker, meta.featurizer, meta.ind_labels)

    pipeline = build_pipeline(params, meta, train_set, val_set, config.pipeline_config())
    save_bundle(tracker.path(_bundle_name(config)), pipeline)
    console.print(
        key_value_table(
            "較正結果",
            {
                "scorer": config.scorer,
                "λ": repr(pipeline.threshold.lam),
                "val IND F1": f"{100 * pipeline.threshold.calibration_metric:.2f}",
            },
        )
    )


def cmd_eval(config: RunConfig, args: argparse.Namespace, tracker: OutputTracker) -> None:
    """
    テストデータで評価し、指標・混同行列（と任意でヒストグラム・類似度）を書き出す
    """
    pipeline = load_bundle(_bundle_path(config, args))
    meta = pipeline.meta
    test_set = load_feature_set(_require(config.test_data, "--test"), meta.ood_marker, meta.featurizer, meta.ind_labels)

    report = evaluate(pipeline, test_set, args.classify_mode)
    tracker.write_text(METRICS_FILE, metrics_csv(report))
    tracker.write_text(CONFUSION_FILE, confusion_csv(report, meta.ind_labels, meta.ood_marker))

    notes: List[str] = []
    if args.histogram:
        hist = score_histograms(pipeline, test_set, HistogramSpec(n_bins=args.histogram))
        tracker.write_text(HISTOGRAM_FILE, hist.to_csv())
        if test_set.n_ood and test_set.n_ood < len(test_set):
            notes.append(f"overlap={overlap_coefficient(hist):.4f}")
    if args.similarity_k:
        sims = similarity_profile(pipeline, test_set, args.similarity_k)
        tracker.write_text(SIMILARITY_FILE, similarity_csv(sims))
        notes.append(f"OOD→IND 平均類似度={float(sims.mean()):.4f}")

    console.print(metrics_table(f"評価 ({pipeline.config.scorer})", report))
    for note in notes:
        console.print(note)


def cmd_sweep(config: RunConfig, args: argparse.Namespace, tracker: OutputTracker) -> None:
    """
    ハイパーパラメータスイープ（1軸または2軸）
    """
    grid = SweepGrid(
        axis=args.axis,
        values=parse_int_list(args.values),
        seeds=seed_range(args.seeds),
        axis2=args.axis2,
        values2=parse_int_list(args.values2) if args.values2 else (),
    )
    data, featurizer = _load_splits(config)
    result = sweep(config.train_plan(), config.pipeline_config(), grid, data, featurizer)
    tracker.write_text(SWEEP_FILE, result.to_csv())
    console.print(
        summary_table(
            "スイープ（シード平均 ± 標準偏差）",
            list(grid.axes),
            (([cell[a] for a in grid.axes], means, stds) for cell, means, stds in result.summary()),
        )
    )


def cmd_score(config: RunConfig, args: argparse.Namespace, tracker: OutputTracker) -> None:
    """
    クエリを1件ずつ判定して標準出力へ（score<TAB>IND|OOD<TAB>クラス名|OOD）
    """
    pipeline = load_bundle(_bundle_path(config, args))
    queries = _read_queries(args, pipeline.meta.featurizer is not None)
    if not queries:
        raise ValueError("--text または --input でクエリを指定してください")
    for query in queries:
        decision = pipeline.decide(query, args.classify_mode)
        sys.stdout.write(decision.as_line() + "\n")
    sys.stdout.flush()


def cmd_bench(config: RunConfig, args: argparse.Namespace, tracker: OutputTracker) -> None:
    """
    合成ベンチマークで学習戦略 × スコア関数を比較
    """
    result = run_benchmark(
        spec=config.synthetic_spec(),
        strategies=[s.strip() for s in args.strategies.split(",") if s.strip()],
        scorers=[s.strip() for s in args.scorers.split(",") if s.strip()],
        seeds=seed_range(args.seeds),
        base_plan=config.train_plan(),
        base_config=config.pipeline_config(),
        histogram=HistogramSpec(n_bins=args.histogram),
    )
    tracker.write_text(BENCHMARK_FILE, result.to_csv())
    console.print(
        summary_table(
            "ベンチマーク（シード平均 ± 標準偏差）",
            ["strategy", "scorer"],
            (([strategy, scorer], means, stds) for strategy, scorer, means, stds in result.summary()),
        )
    )


def _read_queries(args: argparse.Namespace, text_input: bool) -> list:
    """
    --text（複数可）と --input（1行1クエリ）を読む。特徴ベクトル入力のモデルでは各行を JSON 配列として解釈
    """
    queries: list = list(args.text or [])
    if args.input:
        if not os.path.exists(args.input):
            raise FileNotFoundError(f"入力ファイルが見つかりません: {args.input}")
        with open(args.input, encoding="utf-8") as fp:
            for lineno, line in enumerate(fp, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                if text_input:
                    queries.append(line)
                    continue
                try:
                    queries.append([float(v) for v in json.loads(line)])
                except (json.JSONDecodeError, TypeError, ValueError) as e:
                    raise ValueError(f"{args.input}:{lineno} 行目は特徴ベクトル（JSON 配列）ではありません: {e}") from e
    return queries
