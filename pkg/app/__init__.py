"""
近傍ベース OOD インテント検出 - コマンドラインパッケージ
"""

from typing import List, Optional

from .constants import __version__


def run(argv: Optional[List[str]] = None) -> int:
    """
    コマンドラインを実行して終了コードを返す
    """
    from .main import run as main_run
    return main_run(argv)

__all__ = ["run", "__version__"]
