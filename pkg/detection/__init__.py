"""
OOD 検出層（KNN インデックス・スコア関数・閾値較正・パイプライン）
"""

from .calibration import Threshold, calibrate
from .gda import GdaModel, fit_gda, gda_score
from .knn_index import KnnIndex, build_index
from .lof import LofModel, fit_lof, lof_score
from .pipeline import DetectionPipeline, PipelineConfig, build_pipeline, load_bundle, save_bundle
from .scorers import SCORERS, knn_score, msp_score

__all__ = [
    "Threshold",
    "calibrate",
    "GdaModel",
    "fit_gda",
    "gda_score",
    "KnnIndex",
    "build_index",
    "LofModel",
    "fit_lof",
    "lof_score",
    "DetectionPipeline",
    "PipelineConfig",
    "build_pipeline",
    "load_bundle",
    "save_bundle",
    "SCORERS",
    "knn_score",
    "msp_score",
]
