"""
ファイル書き込みユーティリティ
"""

from __future__ import annotations

import os
import tempfile


def atomic_write_text(path: str, text: str) -> str:
    """
    同じディレクトリの一時ファイルに書いてから置き換える（途中で失敗しても半端なファイルを残さない）

    Args:
        path: 書き込み先
        text: 内容（UTF-8）

    Returns:
        str: 書き込んだパス
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fp:
            fp.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path
