"""
評価指標（レポート・スイープ・ベンチマークは各モジュールから直接 import する）
"""

from .metrics import METRIC_NAMES, EvalReport, confusion_matrix, ind_macro_f1, per_class_f1

__all__ = ["METRIC_NAMES", "EvalReport", "confusion_matrix", "ind_macro_f1", "per_class_f1"]
