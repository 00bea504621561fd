"""
共通フィクスチャと数値微分ヘルパー
"""

from __future__ import annotations

import numpy as np
import pytest

from intent.synthetic import SyntheticSpec, generate_synthetic
from model.encoder import PARAM_BLOCKS, EncoderParams
from model.numerics import make_rng
from model.objectives import KnclConfig
from model.trainer import TrainPlan

H = 1e-5


def numeric_grad(f, arr: np.ndarray, h: float = H) -> np.ndarray:
    """
    arr をその場で摂動して f() の中心差分を取る
    """
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = arr[i]
        arr[i] = orig + h
        plus = f()
        arr[i] = orig - h
        minus = f()
        arr[i] = orig
        grad[i] = (plus - minus) / (2 * h)
    return grad


def assert_grad_close(analytic, numeric, rel_tol: float = 1e-4, floor: float = 1e-8, tiny: float = 1e-4) -> None:
    """
    |a−n| / max(|a|, |n|, floor) < rel_tol。両方 tiny 未満の成分は絶対誤差 < rel_tol·tiny で比較
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    assert analytic.shape == numeric.shape
    abs_err = np.abs(analytic - numeric)
    rel = abs_err / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    tiny_mask = (np.abs(analytic) < tiny) & (np.abs(numeric) < tiny)
    ok = np.where(tiny_mask, abs_err < rel_tol * tiny, rel < rel_tol)
    assert np.all(ok), f"最大相対誤差 {rel[~ok].max():.3e}"


def param_grad_check(loss_of_params, params: EncoderParams, grads, **kw) -> None:
    """
    全パラメータブロックについて解析勾配と数値勾配を比較
    """
    for name in PARAM_BLOCKS:
        block = getattr(params, name)
        assert_grad_close(getattr(grads, name), numeric_grad(lambda: loss_of_params(params), block), **kw)


def unit_rows(n: int, d: int, seed: int = 0) -> np.ndarray:
    x = make_rng(seed).normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return make_rng(123)


@pytest.fixture
def small_params(rng):
    return EncoderParams.initialize(6, 3, rng, hidden=5, d_z=4)


@pytest.fixture(scope="session")
def small_spec():
    return SyntheticSpec(n_ind_clusters=3, n_ood_clusters=1, dim=8, samples_per_cluster=40, seed=3)


@pytest.fixture(scope="session")
def small_data(small_spec):
    return generate_synthetic(small_spec)


@pytest.fixture(scope="session")
def quick_plan():
    return TrainPlan(
        strategy="kncl_then_ce",
        epochs_phase1=4,
        epochs_phase2=4,
        batch_size=24,
        kncl_cfg=KnclConfig(k=3),
        lr=1e-2,
        seed=1,
        dropout_rate=0.1,
        hidden=16,
        d_z=8,
    )


def train_model(plan, data):
    """
    学習して (params, meta) を返す
    """
    from model.checkpoint import ModelMeta
    from model.trainer import train

    train_set, val_set, _ = data
    report = train(plan, train_set, val_set)
    meta = ModelMeta(train_set.ind_labels, strategy=plan.strategy, head_trained=report.head_trained)
    return report.params, meta


@pytest.fixture(scope="session")
def trained_model(quick_plan, small_data):
    """
    kncl_then_ce で学習した (params, meta)
    """
    return train_model(quick_plan, small_data)


@pytest.fixture(scope="session")
def kncl_only_model(quick_plan, small_data):
    return train_model(quick_plan.with_overrides(strategy="only_kncl"), small_data)
