"""
コマンドラインのメインロジック

    python app.py synth --ind 5 --ood 2 --dim 16 --per-cluster 100 --seed 7
    python app.py train --data runs/train.jsonl --val runs/val.jsonl
    python app.py calibrate --data runs/train.jsonl --val runs/val.jsonl --scorer knn
    python app.py eval --test runs/test.jsonl --histogram 50
    python app.py score --text "what is my balance"
    python app.py sweep --axis knn_k --values 1,3,5,10,20 --seeds 5
    python app.py bench --strategies kncl_then_ce,only_ce --scorers knn,msp
"""

from __future__ import annotations

import argparse
import logging
from typing import Callable, Dict, List, Optional

from rich.console import Console
from rich.logging import RichHandler

from detection.pipeline import CLASSIFY_MODES
from detection.scorers import SCORERS
from evaluation.benchmark import DEFAULT_SCORERS, DEFAULT_STRATEGIES
from evaluation.sweep import DEFAULT_SEEDS, SWEEP_AXES
from model.encoder import ACTIVATIONS
from model.trainer import STRATEGIES

from .config import RunConfig
from .constants import EXIT_FAILURE, EXIT_INTERRUPTED, EXIT_OK, EXIT_USAGE, OUTPUT_DIR_ENV, __version__
from .handlers import cmd_bench, cmd_calibrate, cmd_eval, cmd_score, cmd_sweep, cmd_synth, cmd_train
from .utils import OutputTracker

logger = logging.getLogger(__name__)

COMMANDS: Dict[str, Callable] = {
    "synth": cmd_synth,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "score": cmd_score,
    "bench": cmd_bench,
}

_S = argparse.SUPPRESS


# --------------------------------------------------------------------------- #
# 引数パーサー
# --------------------------------------------------------------------------- #
def _add_synth_flags(parser: argparse.ArgumentParser, seed_flag: str = "--synth-seed") -> None:
    group = parser.add_argument_group("合成データ")
    group.add_argument("--ind", dest="synth_ind", type=int, default=_S, help="IND クラスタ数（デフォルト: 5）")
    group.add_argument("--ood", dest="synth_ood", type=int, default=_S, help="OOD クラスタ数（デフォルト: 2）")
    group.add_argument("--dim", dest="synth_dim", type=int, default=_S, help="次元（デフォルト: 16）")
    group.add_argument("--per-cluster", dest="synth_per_cluster", type=int, default=_S, help="クラスタあたりの点数（デフォルト: 100）")
    group.add_argument("--spread", dest="synth_spread", type=float, default=_S, help="クラスタの標準偏差（デフォルト: 0.3）")
    group.add_argument("--scale", dest="synth_scale", type=float, default=_S, help="クラスタ中心の標準偏差（デフォルト: 3.0）")
    group.add_argument(seed_flag, dest="synth_seed", type=int, default=_S, help="合成データのシード（デフォルト: 7）")


def _add_data_flags(parser: argparse.ArgumentParser, train: bool = True, val: bool = True, test: bool = False) -> None:
    group = parser.add_argument_group("データ")
    if train:
        group.add_argument("--data", dest="train_data", default=_S, help="学習データ（JSONL）")
    if val:
        group.add_argument("--val", dest="val_data", default=_S, help="検証データ（JSONL）")
    if test:
        group.add_argument("--test", dest="test_data", default=_S, help="テストデータ（JSONL）")
    group.add_argument("--ood-marker", dest="ood_marker", default=_S, help="OOD ラベル（デフォルト: oos）")
    group.add_argument("--feature-width", dest="feature_width", type=int, default=_S, help="テキスト特徴の次元（デフォルト: 512）")
    group.add_argument("--feature-seed", dest="feature_seed", type=int, default=_S, help="特徴ハッシュのシード（デフォルト: 0）")


def _add_train_flags(parser: argparse.ArgumentParser, strategy: bool = True) -> None:
    group = parser.add_argument_group("学習")
    if strategy:
        group.add_argument("--strategy", choices=STRATEGIES, default=_S, help="学習戦略（デフォルト: kncl_then_ce）")
    group.add_argument("--epochs1", dest="epochs_phase1", type=int, default=_S, help="第1フェーズのエポック数（デフォルト: 100）")
    group.add_argument("--epochs2", dest="epochs_phase2", type=int, default=_S, help="第2フェーズのエポック数（デフォルト: 10）")
    group.add_argument("--batch-size", dest="batch_size", type=int, default=_S, help="バッチサイズ（デフォルト: 128）")
    group.add_argument("--lr", type=float, default=_S, help="学習率（デフォルト: 1e-3）")
    group.add_argument("--seed", type=int, default=_S, help="学習シード（デフォルト: 0）")
    group.add_argument("--kncl-k", dest="kncl_k", type=int, default=_S, help="KNCL の近傍数（デフォルト: 5）")
    group.add_argument("--tau", type=float, default=_S, help="温度（デフォルト: 0.1）")
    group.add_argument("--no-augment", dest="augment", action="store_false", default=_S, help="敵対的拡張ビューを使わない")
    group.add_argument("--epsilon-adv", dest="epsilon_adv", type=float, default=_S, help="敵対的摂動の大きさ（デフォルト: 0.01）")
    group.add_argument("--hidden", type=int, default=_S, help="隠れ層の幅（デフォルト: 64）")
    group.add_argument("--d-z", dest="d_z", type=int, default=_S, help="表現の次元（デフォルト: 32）")
    group.add_argument("--activation", choices=ACTIVATIONS, default=_S, help="活性化関数（デフォルト: tanh）")
    group.add_argument("--dropout", type=float, default=_S, help="ドロップアウト率（デフォルト: 0.5）")


def _add_scorer_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("検出")
    group.add_argument("--scorer", choices=SCORERS, default=_S, help="スコア関数（デフォルト: knn）")
    group.add_argument("--k-score", dest="k_score", type=int, default=_S, help="KNN スコアの近傍数（デフォルト: 5）")
    group.add_argument("--lof-k", dest="lof_k", type=int, default=_S, help="LOF の近傍数（デフォルト: 20）")
    group.add_argument("--classify", choices=CLASSIFY_MODES, default=_S, help="IND クラスの決め方（デフォルト: auto）")
    group.add_argument("--no-val-ood", dest="use_val_ood", action="store_false", default=_S, help="較正で検証 OOD 例を使わない")


def setup_arg_parser() -> argparse.ArgumentParser:
    """コマンドライン引数パーサーの設定"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="設定ファイル（key=value 形式）")
    common.add_argument("--output-dir", dest="output_dir", default=_S, help=f"出力ディレクトリ（デフォルト: ${OUTPUT_DIR_ENV} または runs）")
    common.add_argument("--verbose", "-v", action="store_true", help="詳細なログ出力を有効にする")

    parser = argparse.ArgumentParser(prog="neighbor-ood", description="近傍ベースの OOD インテント検出ツール")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", parents=[common], help="合成データを生成")
    _add_synth_flags(p, seed_flag="--seed")
    p.add_argument("--ood-marker", dest="ood_marker", default=_S, help="OOD ラベル（デフォルト: oos）")

    p = sub.add_parser("train", parents=[common], help="エンコーダを学習")
    _add_data_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("calibrate", parents=[common], help="λ を較正してバンドルを作成")
    p.add_argument("--checkpoint", default=None, help="チェックポイント（デフォルト: 出力ディレクトリの checkpoint.json）")
    _add_data_flags(p)
    _add_scorer_flags(p)

    p = sub.add_parser("eval", parents=[common], help="テストデータで評価")
    p.add_argument("--bundle", default=None, help="バンドル（デフォルト: 出力ディレクトリの bundle_<scorer>.json）")
    p.add_argument("--test", dest="test_data", default=_S, help="テストデータ（JSONL）")
    p.add_argument("--scorer", choices=SCORERS, default=_S, help="既定のバンドル名に使うスコア関数")
    p.add_argument("--classify", dest="classify_mode", choices=CLASSIFY_MODES, default=None, help="IND クラスの決め方（デフォルト: バンドルの設定）")
    p.add_argument("--histogram", type=int, default=0, metavar="N", help="N ビンのスコアヒストグラムを書き出す")
    p.add_argument("--similarity-k", dest="similarity_k", type=int, default=0, metavar="K", help="OOD→IND k 近傍類似度を書き出す")

    p = sub.add_parser("score", parents=[common], help="クエリを判定して標準出力へ")
    p.add_argument("--bundle", default=None, help="バンドル（デフォルト: 出力ディレクトリの bundle_<scorer>.json）")
    p.add_argument("--scorer", choices=SCORERS, default=_S, help="既定のバンドル名に使うスコア関数")
    p.add_argument("--text", action="append", default=None, help="クエリ文（複数指定可）")
    p.add_argument("--input", default=None, help="1行1クエリのファイル")
    p.add_argument("--classify", dest="classify_mode", choices=CLASSIFY_MODES, default=None, help="IND クラスの決め方")

    p = sub.add_parser("sweep", parents=[common], help="ハイパーパラメータスイープ")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES, help="スイープ軸")
    p.add_argument("--values", required=True, help="軸の値（カンマ区切り）")
    p.add_argument("--axis2", choices=SWEEP_AXES, default=None, help="第2軸")
    p.add_argument("--values2", default=None, help="第2軸の値（カンマ区切り）")
    p.add_argument("--seeds", type=int, default=len(DEFAULT_SEEDS), help="シード数（1..N、デフォルト: 5）")
    _add_data_flags(p, test=True)
    _add_synth_flags(p)
    _add_train_flags(p)
    _add_scorer_flags(p)

    p = sub.add_parser("bench", parents=[common], help="学習戦略 × スコア関数の比較（合成データ）")
    p.add_argument("--strategies", default=",".join(DEFAULT_STRATEGIES), help="学習戦略（カンマ区切り）")
    p.add_argument("--scorers", default=",".join(DEFAULT_SCORERS), help="スコア関数（カンマ区切り）")
    p.add_argument("--seeds", type=int, default=len(DEFAULT_SEEDS), help="シード数（1..N、デフォルト: 5）")
    p.add_argument("--histogram", type=int, default=50, metavar="N", help="重なり係数のビン数（デフォルト: 50）")
    _add_synth_flags(p)
    _add_train_flags(p, strategy=False)
    p.add_argument("--k-score", dest="k_score", type=int, default=_S, help="KNN スコアの近傍数（デフォルト: 5）")
    p.add_argument("--lof-k", dest="lof_k", type=int, default=_S, help="LOF の近傍数（デフォルト: 20）")
    p.add_argument("--no-val-ood", dest="use_val_ood", action="store_false", default=_S, help="較正で検証 OOD 例を使わない")

    return parser


def setup_logging(verbose: bool) -> None:
    """
    ログは標準エラーへ（標準出力は score の結果用）
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(name)s - %(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


# --------------------------------------------------------------------------- #
# 実行
# --------------------------------------------------------------------------- #
def run(argv: Optional[List[str]] = None) -> int:
    """
    コマンドを実行して終了コードを返す

    Returns:
        int: 0 成功 / 1 失敗 / 2 引数・入力エラー / 130 中断
    """
    parser = setup_arg_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(args.verbose)
    fields = set(RunConfig.field_names())
    overrides = {k: v for k, v in vars(args).items() if k in fields}

    tracker: Optional[OutputTracker] = None
    try:
        config = RunConfig.load(args.config, overrides)
        tracker = OutputTracker(config.output_dir)
        logger.info(f"{args.command} を実行します（出力先: {config.output_dir}）")
        COMMANDS[args.command](config, args, tracker)
        logger.info(f"{args.command} が完了しました")
        return EXIT_OK
    except KeyboardInterrupt:
        logger.info("ユーザーによる中断")
        _rollback(tracker)
        return EXIT_INTERRUPTED
    except ValueError as e:
        logger.error(f"入力エラー: {e}")
        _rollback(tracker)
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"{args.command} 中にエラーが発生しました: {e}")
        logger.debug("詳細", exc_info=True)
        _rollback(tracker)
        return EXIT_FAILURE


def _rollback(tracker: Optional[OutputTracker]) -> None:
    if tracker is not None:
        tracker.rollback()
