"""
定数定義
"""

import os
from importlib.metadata import PackageNotFoundError, version

import dotenv
from rich.style import Style

dotenv.load_dotenv()

# ---------- バージョン ----------
try:
    __version__: str = version("neighbor-ood")  # パッケージ化されている場合
except PackageNotFoundError:
    __version__ = "0.0.0.dev"                   # ローカル開発環境

# ---------- 出力先 ----------
OUTPUT_DIR_ENV = "NEIGHBOR_OOD_OUTPUT_DIR"
FALLBACK_OUTPUT_DIR = "runs"


def default_output_dir() -> str:
    """
    環境変数（.env を含む）から既定の出力ディレクトリを取得
    """
    return os.getenv(OUTPUT_DIR_ENV) or FALLBACK_OUTPUT_DIR


# ---------- 終了コード ----------
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_INTERRUPTED = 130

# ---------- 出力ファイル名 ----------
SYNTH_FILES = {"train": "train.jsonl", "val": "val.jsonl", "test": "test.jsonl"}
MANIFEST_FILE = "manifest.json"
CHECKPOINT_FILE = "checkpoint.json"
LOSS_CURVE_FILE = "loss_curve.csv"
BUNDLE_FILE_TEMPLATE = "bundle_{scorer}.json"
METRICS_FILE = "metrics.csv"
CONFUSION_FILE = "confusion.csv"
HISTOGRAM_FILE = "histogram.csv"
SIMILARITY_FILE = "similarity.csv"
SWEEP_FILE = "sweep.csv"
BENCHMARK_FILE = "benchmark.csv"

# ---------- 表示スタイル ----------
HEADER_STYLE = Style(color="cyan", bold=True)
MEAN_STYLE = Style(color="yellow", bold=True)
OOD_STYLE = Style(color="red", bold=True)
IND_STYLE = Style(color="green")
