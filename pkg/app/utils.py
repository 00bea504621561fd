"""
ユーティリティ関数（出力ファイル管理・表示）
"""

from __future__ import annotations

import json
import logging
import os
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from rich.console import Console
from rich.table import Table

from evaluation.metrics import METRIC_NAMES, EvalReport
from intent.files import atomic_write_text

from .constants import HEADER_STYLE, MEAN_STYLE

logger = logging.getLogger(__name__)

console = Console()


class OutputTracker:
    """
    コマンドが書き出したファイルを記録し、失敗時にまとめて削除する
    """

    def __init__(self, output_dir: str):
        self.output_dir = output_dir
        self.written: List[str] = []

    def path(self, name: str) -> str:
        """
        出力ディレクトリ内のパスを返す。このコマンドで新しく作るファイルだけを削除対象として記録する
        """
        path = os.path.join(self.output_dir, name)
        if path not in self.written and not os.path.exists(path):
            self.written.append(path)
        return path

    def write_text(self, name: str, text: str) -> str:
        path = atomic_write_text(self.path(name), text)
        logger.info(f"書き出しました: {path}")
        return path

    def write_json(self, name: str, obj: Mapping) -> str:
        return self.write_text(name, json.dumps(obj, sort_keys=True, indent=2) + "\n")

    def rollback(self) -> None:
        """
        記録したファイルを削除（存在しないものは無視）
        """
        for path in reversed(self.written):
            if os.path.exists(path):
                os.remove(path)
                logger.warning(f"失敗したため出力を削除しました: {path}")
        self.written.clear()


# --------------------------------------------------------------------------- #
# 表示
# --------------------------------------------------------------------------- #
def metrics_table(title: str, report: EvalReport) -> Table:
    table = Table(title=title, header_style=HEADER_STYLE)
    for name in METRIC_NAMES:
        table.add_column(name, justify="right")
    values = report.as_dict()
    table.add_row(*[f"{100 * values[m]:.2f}" for m in METRIC_NAMES])
    return table


def summary_table(
    title: str,
    key_names: Sequence[str],
    rows: Iterable,
) -> Table:
    """
    (キー列, 平均, 標準偏差) の行を「平均 ± 標準偏差」で表示

    Args:
        title: 表題
        key_names: キー列の名前
        rows: (キーのリスト, 平均の辞書, 標準偏差の辞書) の反復
    """
    table = Table(title=title, header_style=HEADER_STYLE)
    for name in key_names:
        table.add_column(name)
    for name in METRIC_NAMES:
        table.add_column(name, justify="right", style=MEAN_STYLE if name == "ood_f1" else None)
    for keys, means, stds in rows:
        table.add_row(
            *[str(k) for k in keys],
            *[f"{100 * means[m]:.2f} ± {100 * stds[m]:.2f}" for m in METRIC_NAMES],
        )
    return table


def key_value_table(title: str, items: Dict[str, object], note: Optional[str] = None) -> Table:
    table = Table(title=title, header_style=HEADER_STYLE, caption=note)
    table.add_column("項目")
    table.add_column("値", justify="right")
    for key, value in items.items():
        table.add_row(key, str(value))
    return table
