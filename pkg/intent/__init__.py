"""
意図データ（読み込み・特徴化・分割・合成ベンチマーク）
"""

from .dataset import (
    DEFAULT_OOD_MARKER,
    OOD_INDEX,
    Dataset,
    FeatureSet,
    Utterance,
    load_jsonl,
    read_feature_jsonl,
    write_feature_jsonl,
    write_jsonl,
)
from .featurizer import FeaturizerConfig, featurize, featurize_dataset
from .loader import load_feature_set, load_training_set
from .split import split
from .synthetic import SyntheticSpec, generate_synthetic

__all__ = [
    "DEFAULT_OOD_MARKER",
    "OOD_INDEX",
    "Dataset",
    "FeatureSet",
    "Utterance",
    "load_jsonl",
    "read_feature_jsonl",
    "write_feature_jsonl",
    "write_jsonl",
    "FeaturizerConfig",
    "featurize",
    "featurize_dataset",
    "load_feature_set",
    "load_training_set",
    "split",
    "SyntheticSpec",
    "generate_synthetic",
]
