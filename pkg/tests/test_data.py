import json
import logging

import numpy as np
import pytest

from intent.dataset import (
    OOD_INDEX,
    Dataset,
    FeatureSet,
    Utterance,
    load_jsonl,
    read_feature_jsonl,
    sniff_format,
    write_feature_jsonl,
    write_jsonl,
)
from intent.featurizer import FeaturizerConfig, featurize, featurize_dataset, hashed_bucket, tokenize
from intent.loader import load_feature_set, load_training_set
from intent.split import allocate, check_fractions, split
from intent.synthetic import SyntheticSpec, generate_synthetic


def _write_lines(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture
def clinc_file(tmp_path):
    rows = []
    for label in ("transfer", "balance", "freeze_account"):
        rows += [{"text": f"please {label} number {i}", "label": label} for i in range(5)]
    rows += [{"text": f"tell me a joke {i}", "label": "oos"} for i in range(4)]
    return _write_lines(tmp_path / "clinc.jsonl", rows)


# ---------------- JSONL ---------------- #
def test_load_jsonl_builds_sorted_vocabulary(clinc_file):
    data = load_jsonl(clinc_file)
    assert data.ind_labels == ("balance", "freeze_account", "transfer")
    assert len(data) == 19
    assert data.n_ood == 4
    assert data.examples[0].label == "transfer"


def test_load_jsonl_reports_bad_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"text": "hi", "label": "a"}\n{"text": "oops"}\n', encoding="utf-8")
    with pytest.raises(ValueError, match=":2"):
        load_jsonl(str(path))


def test_load_jsonl_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_jsonl(str(tmp_path / "none.jsonl"))


def test_write_jsonl_round_trip(tmp_path, clinc_file):
    data = load_jsonl(clinc_file)
    out = str(tmp_path / "copy.jsonl")
    write_jsonl(out, data)
    assert load_jsonl(out) == data


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset((Utterance("hi", "a"),), ("a", "oos"))
    with pytest.raises(ValueError):
        Dataset((Utterance("hi", "b"),), ("a",))
    with pytest.raises(ValueError):
        Utterance("   ", "a")


def test_feature_set_validation():
    with pytest.raises(ValueError):
        FeatureSet(np.zeros((2, 3)), [0, 5], ("a", "b"))
    with pytest.raises(ValueError):
        FeatureSet(np.array([[np.nan]]), [0], ("a",))
    data = FeatureSet(np.zeros((3, 2)), [0, OOD_INDEX, 1], ("a", "b"))
    assert data.n_ood == 1
    assert len(data.ind_only()) == 2
    assert data.label_name(OOD_INDEX) == "oos"


# ---------------- 特徴化 ---------------- #
def test_tokenize_lowercases_and_splits():
    assert tokenize("What's my BALANCE, today?") == ["what", "s", "my", "balance", "today"]


def test_featurize_is_deterministic_and_unit_norm():
    a = featurize("transfer money to savings", 64, seed=3)
    b = featurize("transfer money to savings", 64, seed=3)
    assert np.array_equal(a, b)
    assert np.isclose(np.linalg.norm(a), 1.0)
    assert 0 <= hashed_bucket("money", 64, 3) < 64


def test_featurize_empty_text_is_zero_vector():
    assert not featurize("?!", 16).any()


def test_featurize_dataset_marks_ood(clinc_file):
    features = featurize_dataset(load_jsonl(clinc_file), FeaturizerConfig(width=32))
    assert features.dim == 32
    assert features.n_ood == 4
    assert np.all(features.labels[features.ood_mask] == OOD_INDEX)


def test_featurize_dataset_rejects_unknown_label(clinc_file):
    with pytest.raises(ValueError):
        featurize_dataset(load_jsonl(clinc_file), FeaturizerConfig(width=8), ind_labels=("balance",))


# ---------------- 分割 ---------------- #
def test_allocate_sums_to_total():
    assert allocate(10, (0.6, 0.2, 0.2)) == [6, 2, 2]
    assert sum(allocate(7, (0.6, 0.2, 0.2))) == 7
    assert min(allocate(3, (0.9, 0.05, 0.05), minimum=1)) == 1


def test_check_fractions_rejects_bad_values():
    with pytest.raises(ValueError):
        check_fractions((0.5, 0.5))
    with pytest.raises(ValueError):
        check_fractions((0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        check_fractions((1.0, 0.0, 0.0))


def test_split_is_stratified_and_keeps_ood_out_of_train(clinc_file):
    data = load_jsonl(clinc_file)
    train, val, test = split(data, seed=1)
    assert train.n_ood == 0
    assert val.n_ood + test.n_ood == 4
    assert len(train) + len(val) + len(test) == len(data)
    for label in data.ind_labels:
        counts = [sum(ex.label == label for ex in part) for part in (train, val, test)]
        assert counts == [3, 1, 1]
    again = split(data, seed=1)
    assert again == (train, val, test)


def test_split_ten_examples_by_eighty_ten_ten():
    data = Dataset(tuple(Utterance(f"check balance {i}", "balance") for i in range(10)), ("balance",))
    train, val, test = split(data, (0.8, 0.1, 0.1), seed=4)
    assert (len(train), len(val), len(test)) == (8, 1, 1)


def test_split_requires_three_examples_per_label():
    data = Dataset((Utterance("a b", "x"), Utterance("c d", "x"), Utterance("e", "y")), ("x", "y"))
    with pytest.raises(ValueError):
        split(data)


# ---------------- 合成データ ---------------- #
def test_default_synthetic_sizes():
    train, val, test = generate_synthetic(SyntheticSpec())
    assert (len(train), len(val), len(test)) == (300, 200, 200)
    assert train.n_ood == 0
    assert (val.n_ood, test.n_ood) == (100, 100)
    assert train.ind_labels == ("intent_00", "intent_01", "intent_02", "intent_03", "intent_04")
    assert train.dim == 16


def test_synthetic_is_deterministic(small_spec):
    a = generate_synthetic(small_spec)
    b = generate_synthetic(small_spec)
    for x, y in zip(a, b):
        assert np.array_equal(x.features, y.features)
        assert np.array_equal(x.labels, y.labels)


def test_synthetic_without_ood_clusters():
    _, val, test = generate_synthetic(SyntheticSpec(n_ood_clusters=0, samples_per_cluster=10))
    assert val.n_ood == 0 and test.n_ood == 0


def test_synthetic_needs_two_ind_clusters():
    with pytest.raises(ValueError):
        SyntheticSpec(n_ind_clusters=1)


# ---------------- 特徴ベクトル JSONL ---------------- #
def test_feature_jsonl_round_trip_is_exact(tmp_path, small_data):
    _, val, _ = small_data
    path = str(tmp_path / "val.jsonl")
    write_feature_jsonl(path, val)
    back = read_feature_jsonl(path, ind_labels=val.ind_labels)
    assert np.array_equal(back.features, val.features)
    assert np.array_equal(back.labels, val.labels)
    assert sniff_format(path) == "features"


def test_load_feature_set_dispatches_on_format(tmp_path, clinc_file, small_data):
    text = load_feature_set(clinc_file, featurizer=FeaturizerConfig(width=16))
    assert text.dim == 16
    assert sniff_format(clinc_file) == "text"
    with pytest.raises(ValueError):
        load_feature_set(clinc_file)

    train, _, _ = small_data
    path = str(tmp_path / "train.jsonl")
    write_feature_jsonl(path, train)
    loaded = load_feature_set(path, featurizer=FeaturizerConfig(width=16))
    assert loaded.dim == train.dim
    assert loaded.ind_labels == train.ind_labels


def test_load_training_set_drops_ood_rows(tmp_path, small_data, caplog):
    _, val, _ = small_data
    path = str(tmp_path / "val.jsonl")
    write_feature_jsonl(path, val)
    with caplog.at_level(logging.INFO, logger="intent.loader"):
        train = load_training_set(path)
    assert train.n_ood == 0
    assert len(train) == len(val) - val.n_ood
    assert f"OOD 例 {val.n_ood}件" in caplog.text
