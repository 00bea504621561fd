import numpy as np
import pytest

from conftest import train_model
from detection.knn_index import KnnIndex
from detection.pipeline import (
    Decision,
    DetectionPipeline,
    PipelineConfig,
    build_pipeline,
    load_bundle,
    save_bundle,
)
from intent.dataset import OOD_INDEX, FeatureSet


@pytest.fixture(scope="module")
def pipeline(trained_model, small_data):
    params, meta = trained_model
    train_set, val_set, _ = small_data
    return build_pipeline(params, meta, train_set, val_set, PipelineConfig(scorer="knn", k_score=5))


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(scorer="energy")
    with pytest.raises(ValueError):
        PipelineConfig(classify="vote")
    with pytest.raises(ValueError):
        PipelineConfig(k_score=0)


def test_pipeline_is_calibrated(pipeline):
    assert pipeline.is_calibrated
    assert np.isfinite(pipeline.threshold.lam)
    assert 0.0 <= pipeline.threshold.calibration_metric <= 1.0
    assert pipeline.resolve_classify() == "head"


def test_training_example_is_accepted_with_its_class(pipeline, small_data):
    train_set, _, _ = small_data
    scores = pipeline.scores(train_set.features)
    i = int(np.argmin(scores))
    decision = pipeline.decide(train_set.features[i], mode="knn")
    assert not decision.is_ood
    assert decision.class_index == train_set.labels[i]
    assert decision.label == train_set.ind_labels[decision.class_index]


def test_held_out_ood_centroid_is_rejected(quick_plan, small_data):
    train_set, val_set, test_set = small_data
    centroid = test_set.features[test_set.ood_mask].mean(axis=0)
    rejected = 0
    for seed in range(1, 6):
        params, meta = train_model(quick_plan.with_overrides(seed=seed), small_data)
        pipeline = build_pipeline(params, meta, train_set, val_set, PipelineConfig(scorer="knn", k_score=5))
        rejected += int(pipeline.decide(centroid).is_ood)
    assert rejected >= 4


def test_predict_is_consistent_with_threshold(pipeline, small_data):
    _, _, test_set = small_data
    scores, pred = pipeline.predict(test_set.features)
    assert np.array_equal(pred == OOD_INDEX, scores >= pipeline.threshold.lam)
    assert np.array_equal(scores, pipeline.scores(test_set.features))


def test_decide_matches_batch_prediction(pipeline, small_data):
    _, _, test_set = small_data
    scores, pred = pipeline.predict(test_set.features[:5])
    for row, s, p in zip(test_set.features[:5], scores, pred):
        decision = pipeline.decide(row)
        assert decision.score == pytest.approx(s, rel=1e-12, abs=1e-15)
        assert decision.class_index == p


def test_uncalibrated_pipeline_refuses_to_decide(trained_model, small_data):
    params, meta = trained_model
    train_set, _, test_set = small_data
    raw = build_pipeline(params, meta, train_set, None)
    assert not raw.is_calibrated
    assert raw.scores(test_set.features[:3]).shape == (3,)
    with pytest.raises(RuntimeError):
        raw.decide(test_set.features[0])


def test_text_query_needs_featurizer(pipeline):
    with pytest.raises(ValueError):
        pipeline.decide("how do I reset my card")


def test_calibration_rejects_other_vocabulary(pipeline, small_data):
    _, val_set, _ = small_data
    other = FeatureSet(val_set.features, val_set.labels, ("x", "y", "z"))
    with pytest.raises(ValueError):
        pipeline.calibrate(other)


def test_without_validation_ood_threshold_is_above_ind_scores(trained_model, small_data):
    params, meta = trained_model
    train_set, val_set, _ = small_data
    p = build_pipeline(params, meta, train_set, val_set, PipelineConfig(use_val_ood=False))
    ind_scores = p.scores(val_set.ind_only().features)
    assert p.threshold.lam == pytest.approx(ind_scores.max() + 1.0)


@pytest.mark.parametrize("scorer", ["msp", "lof", "gda"])
def test_other_scorers_calibrate(trained_model, small_data, scorer):
    params, meta = trained_model
    train_set, val_set, test_set = small_data
    p = build_pipeline(params, meta, train_set, val_set, PipelineConfig(scorer=scorer, lof_k=5))
    scores, _ = p.predict(test_set.features)
    assert np.all(np.isfinite(scores))


# ---------------- 分類ヘッド未学習のモデル ---------------- #
def test_msp_requires_trained_head(kncl_only_model, small_data):
    params, meta = kncl_only_model
    train_set, val_set, _ = small_data
    with pytest.raises(RuntimeError):
        build_pipeline(params, meta, train_set, val_set, PipelineConfig(scorer="msp"))


def test_head_classification_is_refused_without_head(kncl_only_model, small_data):
    params, meta = kncl_only_model
    train_set, val_set, test_set = small_data
    p = build_pipeline(params, meta, train_set, val_set)
    assert p.resolve_classify() == "knn"
    with pytest.raises(RuntimeError):
        p.predict(test_set.features, mode="head")


# ---------------- バンドル ---------------- #
@pytest.mark.parametrize("scorer", ["knn", "lof"])
def test_bundle_round_trip_reproduces_scores(tmp_path, trained_model, small_data, scorer):
    params, meta = trained_model
    train_set, val_set, test_set = small_data
    p = build_pipeline(params, meta, train_set, val_set, PipelineConfig(scorer=scorer, lof_k=5))
    path = save_bundle(str(tmp_path / "bundle.json"), p)
    back = load_bundle(path)
    assert back.threshold == p.threshold
    assert back.config == p.config
    a = p.predict(test_set.features)
    b = back.predict(test_set.features)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])


def test_bundle_with_wrong_format(tmp_path):
    path = tmp_path / "bundle.json"
    path.write_text('{"format": "other", "version": 1}', encoding="utf-8")
    with pytest.raises(ValueError):
        load_bundle(str(path))


def test_pipeline_rejects_mismatched_index(trained_model):
    params, meta = trained_model
    index = KnnIndex(np.eye(3), [0, 1, 2], 3)
    with pytest.raises(ValueError):
        DetectionPipeline(params, meta, index, PipelineConfig(k_score=1))


# ---------------- 出力行 ---------------- #
def test_decision_line_format():
    assert Decision(0.25, False, 1, "balance").as_line() == "0.25\tIND\tbalance"
    assert Decision(0.5, True, OOD_INDEX, "oos").as_line() == "0.5\tOOD\tOOD"
