import csv
import json
import os

import pytest

from app import run
from app.utils import OutputTracker
from model.checkpoint import load_checkpoint

SYNTH_ARGS = ["--ind", "3", "--ood", "1", "--dim", "8", "--per-cluster", "40", "--seed", "3"]
TRAIN_ARGS = [
    "--epochs1", "3", "--epochs2", "2", "--batch-size", "24", "--kncl-k", "3",
    "--hidden", "16", "--d-z", "8", "--dropout", "0.1", "--lr", "0.01",
]


def _data_args(out):
    return ["--data", os.path.join(out, "train.jsonl"), "--val", os.path.join(out, "val.jsonl")]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """
    synth → train → calibrate まで済ませた出力ディレクトリ
    """
    out = str(tmp_path_factory.mktemp("run"))
    assert run(["synth", "--output-dir", out] + SYNTH_ARGS) == 0
    assert run(["train", "--output-dir", out] + _data_args(out) + TRAIN_ARGS) == 0
    assert run(["calibrate", "--output-dir", out] + _data_args(out)) == 0
    return out


# ---------------- synth ---------------- #
def test_synth_writes_splits_and_manifest(workdir):
    with open(os.path.join(workdir, "manifest.json"), encoding="utf-8") as fp:
        manifest = json.load(fp)
    assert manifest["format"] == "neighbor-ood/synthetic-manifest"
    assert manifest["counts"]["train"] == {"n": 72, "n_ood": 0}
    assert manifest["counts"]["val"] == {"n": 44, "n_ood": 20}
    assert manifest["ind_labels"] == ["intent_00", "intent_01", "intent_02"]
    for name in ("train.jsonl", "val.jsonl", "test.jsonl"):
        assert os.path.exists(os.path.join(workdir, name))


def test_synth_is_byte_deterministic(tmp_path, workdir):
    out = str(tmp_path)
    assert run(["synth", "--output-dir", out] + SYNTH_ARGS) == 0
    for name in ("train.jsonl", "val.jsonl", "test.jsonl", "manifest.json"):
        with open(os.path.join(out, name), "rb") as a, open(os.path.join(workdir, name), "rb") as b:
            assert a.read() == b.read(), name


def test_synth_rejects_single_ind_cluster(tmp_path):
    assert run(["synth", "--output-dir", str(tmp_path), "--ind", "1"]) == 2
    assert not os.path.exists(tmp_path / "manifest.json")


# ---------------- train / calibrate / eval ---------------- #
def test_train_outputs(workdir):
    assert os.path.exists(os.path.join(workdir, "checkpoint.json"))
    with open(os.path.join(workdir, "loss_curve.csv"), encoding="utf-8") as fp:
        rows = list(csv.reader(fp))
    assert rows[0] == ["epoch", "phase", "loss", "val_acc"]
    assert len(rows) == 1 + 5


def test_train_and_calibrate_are_byte_deterministic(tmp_path, workdir):
    out = str(tmp_path)
    assert run(["train", "--output-dir", out] + _data_args(workdir) + TRAIN_ARGS) == 0
    assert run(["calibrate", "--output-dir", out] + _data_args(workdir)) == 0
    for name in ("checkpoint.json", "loss_curve.csv", "bundle_knn.json"):
        with open(os.path.join(out, name), "rb") as a, open(os.path.join(workdir, name), "rb") as b:
            assert a.read() == b.read(), name


def test_train_drops_ood_rows_from_training_file(tmp_path, workdir):
    train_path = tmp_path / "train_with_ood.jsonl"
    with open(os.path.join(workdir, "train.jsonl"), encoding="utf-8") as fp:
        lines = fp.read().splitlines()
    with open(os.path.join(workdir, "val.jsonl"), encoding="utf-8") as fp:
        lines += [line for line in fp.read().splitlines() if json.loads(line)["label"] == "oos"][:5]
    train_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    out = str(tmp_path / "out")
    args = ["--data", str(train_path), "--val", os.path.join(workdir, "val.jsonl")]
    assert run(["train", "--output-dir", out] + args + TRAIN_ARGS) == 0
    _, meta = load_checkpoint(os.path.join(out, "checkpoint.json"))
    assert meta.ind_labels == ("intent_00", "intent_01", "intent_02")


def test_eval_writes_reports(workdir):
    test_path = os.path.join(workdir, "test.jsonl")
    code = run(["eval", "--output-dir", workdir, "--test", test_path, "--histogram", "10", "--similarity-k", "3"])
    assert code == 0
    with open(os.path.join(workdir, "metrics.csv"), encoding="utf-8") as fp:
        rows = list(csv.reader(fp))
    assert rows[0] == ["axis", "seed", "ind_acc", "ind_f1", "ood_recall", "ood_f1"]
    assert all(0.0 <= float(v) <= 1.0 for v in rows[1][2:])
    with open(os.path.join(workdir, "confusion.csv"), encoding="utf-8") as fp:
        confusion = list(csv.reader(fp))
    assert sum(int(v) for row in confusion[1:] for v in row[1:]) == 44
    with open(os.path.join(workdir, "histogram.csv"), encoding="utf-8") as fp:
        assert len(fp.read().splitlines()) == 11
    with open(os.path.join(workdir, "similarity.csv"), encoding="utf-8") as fp:
        assert len(fp.read().splitlines()) == 1 + 20


def test_calibrate_without_validation_data_fails_cleanly(tmp_path, workdir):
    out = str(tmp_path)
    ckpt = os.path.join(workdir, "checkpoint.json")
    code = run(["calibrate", "--output-dir", out, "--checkpoint", ckpt, "--data", os.path.join(workdir, "train.jsonl")])
    assert code != 0
    assert not os.path.exists(os.path.join(out, "bundle_knn.json"))


def test_eval_without_bundle_fails(tmp_path):
    assert run(["eval", "--output-dir", str(tmp_path), "--test", "x.jsonl"]) == 1


# ---------------- score ---------------- #
def test_score_prints_one_line_per_query(tmp_path, workdir, capsys):
    with open(os.path.join(workdir, "test.jsonl"), encoding="utf-8") as fp:
        rows = [json.loads(line)["features"] for line in fp.readlines()[:4]]
    queries = tmp_path / "queries.jsonl"
    queries.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    capsys.readouterr()

    assert run(["score", "--output-dir", workdir, "--input", str(queries)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4
    for line in lines:
        score, decision, label = line.split("\t")
        float(score)
        assert decision in ("IND", "OOD")
        assert (label == "OOD") == (decision == "OOD")


def test_score_rejects_text_for_feature_model(workdir):
    assert run(["score", "--output-dir", workdir, "--text", "what is my balance"]) == 2


# ---------------- 引数エラー ---------------- #
def test_sweep_rejects_unknown_axis(tmp_path):
    assert run(["sweep", "--output-dir", str(tmp_path), "--axis", "temperature", "--values", "1,2"]) == 2


def test_unknown_config_key(tmp_path):
    config = tmp_path / "run.env"
    config.write_text("bogus=1\n", encoding="utf-8")
    assert run(["synth", "--output-dir", str(tmp_path), "--config", str(config)]) == 2


def test_version_exits_zero(capsys):
    assert run(["--version"]) == 0
    assert "neighbor-ood" in capsys.readouterr().out


# ---------------- 分類ヘッド未学習 ---------------- #
def test_head_classification_is_refused_for_only_kncl(tmp_path, workdir):
    out = str(tmp_path)
    assert run(["train", "--output-dir", out, "--strategy", "only_kncl"] + _data_args(workdir) + TRAIN_ARGS) == 0
    assert run(["calibrate", "--output-dir", out] + _data_args(workdir)) == 0
    test_path = os.path.join(workdir, "test.jsonl")
    assert run(["eval", "--output-dir", out, "--test", test_path, "--classify", "head"]) == 1
    assert run(["eval", "--output-dir", out, "--test", test_path]) == 0
    assert run(["calibrate", "--output-dir", out, "--scorer", "msp"] + _data_args(workdir)) == 1


def test_eval_is_byte_deterministic(workdir):
    test_path = os.path.join(workdir, "test.jsonl")
    outputs = []
    for _ in range(2):
        assert run(["eval", "--output-dir", workdir, "--test", test_path]) == 0
        with open(os.path.join(workdir, "metrics.csv"), "rb") as a, open(os.path.join(workdir, "confusion.csv"), "rb") as b:
            outputs.append((a.read(), b.read()))
    assert outputs[0] == outputs[1]


# ---------------- 出力管理 ---------------- #
def test_rollback_removes_only_files_created_by_the_command(tmp_path):
    old = tmp_path / "bundle_knn.json"
    old.write_text("previous run\n", encoding="utf-8")
    tracker = OutputTracker(str(tmp_path))
    tracker.write_text("metrics.csv", "axis,seed\n")
    tracker.write_text("bundle_knn.json", "{}\n")
    tracker.rollback()
    assert not (tmp_path / "metrics.csv").exists()
    assert old.exists()


def test_failed_eval_keeps_outputs_of_earlier_runs(tmp_path, workdir):
    out = str(tmp_path)
    args = ["eval", "--output-dir", out, "--test", os.path.join(workdir, "test.jsonl")]
    args += ["--bundle", os.path.join(workdir, "bundle_knn.json")]
    assert run(args) == 0
    with open(os.path.join(out, "metrics.csv"), "rb") as fp:
        before = fp.read()
    # metrics.csv を書いた後、類似度の k が学習行数を超えて失敗する
    assert run(args + ["--similarity-k", "1000"]) != 0
    with open(os.path.join(out, "metrics.csv"), "rb") as fp:
        assert fp.read() == before
    assert os.path.exists(os.path.join(out, "confusion.csv"))
    assert not os.path.exists(os.path.join(out, "similarity.csv"))
