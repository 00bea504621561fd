import numpy as np
import pytest

from conftest import unit_rows
from detection.knn_index import KnnIndex
from detection.scorers import knn_score, knn_scores, msp_score, msp_scores


@pytest.fixture
def index():
    return KnnIndex(unit_rows(30, 5, seed=11), np.arange(30) % 3, 3)


def test_knn_score_with_all_rows_is_mean_distance(index):
    z = unit_rows(1, 5, seed=12)[0]
    expected = np.linalg.norm(index.embeddings - z, axis=1).mean()
    assert np.isclose(knn_score(index, z, index.size), expected, rtol=1e-12)


def test_knn_score_of_training_row_with_k1_is_zero(index):
    assert knn_score(index, index.embeddings[4], 1) == 0.0


def test_knn_score_is_monotone_in_k(index):
    z = unit_rows(1, 5, seed=13)[0]
    values = [knn_score(index, z, k) for k in range(1, index.size + 1)]
    assert all(a <= b + 1e-15 for a, b in zip(values, values[1:]))


def test_far_query_scores_higher(index):
    near = index.embeddings[0]
    far = -near
    assert knn_score(index, far, 5) > knn_score(index, near, 5)
    assert knn_score(index, far, 5) <= 2.0


def test_knn_scores_batch_matches_single(index):
    queries = unit_rows(6, 5, seed=14)
    batch = knn_scores(index, queries, 4)
    assert np.allclose(batch, [knn_score(index, q, 4) for q in queries], rtol=0, atol=0)


def test_msp_score():
    assert msp_score([0.7, 0.2, 0.1]) == pytest.approx(0.3)
    assert msp_score([1 / 3, 1 / 3, 1 / 3]) == pytest.approx(2 / 3)
    assert np.allclose(msp_scores([[0.5, 0.5], [0.9, 0.1]]), [0.5, 0.1])


@pytest.mark.parametrize("seed", range(20))
def test_knn_score_matches_full_sort(seed):
    rng = np.random.default_rng(seed)
    emb = unit_rows(50, 8, seed=1000 + seed)
    index = KnnIndex(emb, rng.integers(0, 3, 50), 3)
    for z in unit_rows(5, 8, seed=2000 + seed):
        diff = emb - z
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        order = np.argsort(dist, kind="stable")
        for k in (1, 5, 17, 50):
            assert knn_score(index, z, k) == float(np.mean(dist[order[:k]]))
