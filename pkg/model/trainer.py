"""
学習戦略のオーケストレーション

戦略ごとのフェーズ構成:

    kncl_then_ce  : KNCL → CE（既定）
    only_ce       : CE のみ
    only_kncl     : KNCL のみ（分類ヘッドは未学習のまま）
    ce_then_kncl  : CE → KNCL
    multitask     : CE + KNCL をバッチごとに単純加算
    scl_then_ce   : SCL → CE

フェーズの切り替えごとに Adam の状態をリセットする。
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from intent.dataset import FeatureSet
from intent.files import atomic_write_text
from model.encoder import ACTIVATIONS, EncoderParams, Gradients, backward, classify, encode, logits, softmax
from model.numerics import l2_normalize_rows, l2_normalize_rows_backward, make_rng
from model.objectives import KnclConfig, adversarial_views, ce_loss, kncl_loss, scl_loss
from model.optimizer import AdamState, adam_step

logger = logging.getLogger(__name__)

PHASE_CE = "ce"
PHASE_KNCL = "kncl"
PHASE_SCL = "scl"
PHASE_MULTITASK = "multitask"
CONTRASTIVE_PHASES = (PHASE_KNCL, PHASE_SCL, PHASE_MULTITASK)

# 戦略 → (第1フェーズ, 第2フェーズ or None)
STRATEGY_PHASES = {
    "kncl_then_ce": (PHASE_KNCL, PHASE_CE),
    "only_ce": (PHASE_CE, None),
    "only_kncl": (PHASE_KNCL, None),
    "ce_then_kncl": (PHASE_CE, PHASE_KNCL),
    "multitask": (PHASE_MULTITASK, None),
    "scl_then_ce": (PHASE_SCL, PHASE_CE),
}
STRATEGIES = tuple(STRATEGY_PHASES)


# --------------------------------------------------------------------------- #
# 学習計画
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class TrainPlan:
    """
    学習の全ハイパーパラメータ
    """

    strategy: str = "kncl_then_ce"
    epochs_phase1: int = 100
    epochs_phase2: int = 10
    batch_size: int = 128
    kncl_cfg: KnclConfig = field(default_factory=KnclConfig)
    lr: float = 1e-3
    seed: int = 0
    dropout_rate: float = 0.5
    hidden: int = 64
    d_z: int = 32
    activation: str = "tanh"

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGY_PHASES:
            raise ValueError(f"未知の学習戦略です: {self.strategy} (候補: {', '.join(STRATEGIES)})")
        if self.epochs_phase1 < 0 or self.epochs_phase2 < 0:
            raise ValueError("エポック数は非負である必要があります")
        if STRATEGY_PHASES[self.strategy][1] is None and self.epochs_phase2 != 0:
            raise ValueError(f"単一フェーズの戦略 {self.strategy} では epochs_phase2 は 0 である必要があります")
        if self.batch_size < 2:
            raise ValueError(f"batch_size は 2 以上である必要があります: {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"学習率は正である必要があります: {self.lr}")
        if self.seed < 0:
            raise ValueError(f"seed は非負である必要があります: {self.seed}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate は [0, 1) の範囲である必要があります: {self.dropout_rate}")
        if self.hidden < 1 or self.d_z < 1:
            raise ValueError("hidden と d_z は正である必要があります")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"未対応の活性化関数です: {self.activation}")

    @classmethod
    def for_strategy(cls, strategy: str, **overrides) -> "TrainPlan":
        """
        戦略に合わせてエポック数を正規化した計画を作成（単一フェーズなら epochs_phase2 = 0）
        """
        if strategy not in STRATEGY_PHASES:
            raise ValueError(f"未知の学習戦略です: {strategy} (候補: {', '.join(STRATEGIES)})")
        if STRATEGY_PHASES[strategy][1] is None:
            overrides["epochs_phase2"] = 0
        return cls(strategy=strategy, **overrides)

    def with_overrides(self, **overrides) -> "TrainPlan":
        """
        一部の値を差し替えた計画（strategy が変わる場合もエポック数を正規化）
        """
        values = {f: getattr(self, f) for f in self.__dataclass_fields__ if f != "strategy"}
        values.update(overrides)
        strategy = values.pop("strategy", self.strategy)
        return TrainPlan.for_strategy(strategy, **values)

    def phases(self) -> List[Tuple[str, int]]:
        """
        実行するフェーズと各エポック数（0 エポックのフェーズは除く）
        """
        first, second = STRATEGY_PHASES[self.strategy]
        out = [(first, self.epochs_phase1)]
        if second is not None:
            out.append((second, self.epochs_phase2))
        return [(phase, n) for phase, n in out if n > 0]

    @property
    def trains_head(self) -> bool:
        """
        CE を最適化するフェーズを含むか
        """
        return any(phase in (PHASE_CE, PHASE_MULTITASK) for phase, _ in self.phases())


@dataclass
class LossRecord:
    """
    1エポック分の記録
    """

    epoch: int
    phase: str
    loss: float
    val_acc: Optional[float] = None


@dataclass
class TrainReport:
    """
    学習結果
    """

    curve: List[LossRecord]
    params: EncoderParams
    wall_time: float
    strategy: str
    head_trained: bool

    def losses(self, phase: Optional[str] = None) -> List[float]:
        return [r.loss for r in self.curve if phase is None or r.phase == phase]


@dataclass
class Batch:
    """
    ミニバッチ（indices は元データの行番号）
    """

    inputs: np.ndarray
    labels: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return self.inputs.shape[0]


# --------------------------------------------------------------------------- #
# バッチ分割
# --------------------------------------------------------------------------- #
def make_batches(data: FeatureSet, batch_size: int, epoch: int, seed: int, phase: str = PHASE_CE) -> List[Batch]:
    """
    (seed, epoch) から決まる順序でシャッフルし、連続するチャンクに分割

    Args:
        data: 学習データ
        batch_size: バッチサイズ（2 以上）
        epoch: エポック番号（シャッフルの塩）
        seed: 計画のシード
        phase: フェーズ名。コントラスト系フェーズでは末尾の短いチャンクを捨てる

    Returns:
        List[Batch]
    """
    if batch_size < 2:
        raise ValueError(f"batch_size は 2 以上である必要があります: {batch_size}")
    n = len(data)
    order = make_rng(seed, epoch).permutation(n)
    drop_last = phase in CONTRASTIVE_PHASES
    batches: List[Batch] = []
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        if drop_last and len(idx) < batch_size:
            break
        batches.append(Batch(inputs=data.features[idx], labels=data.labels[idx], indices=idx))
    return batches


# --------------------------------------------------------------------------- #
# 1バッチの目的関数
# --------------------------------------------------------------------------- #
def batch_objective(
    params: EncoderParams,
    phase: str,
    inputs: np.ndarray,
    labels: np.ndarray,
    plan: TrainPlan,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, Gradients]:
    """
    1バッチの損失と全パラメータに対する厳密な勾配

    コントラスト系フェーズでは [元ビュー; 拡張ビュー] を1回の順伝播で符号化し、
    行ごとに L2 正規化してから損失を計算する。拡張ビューは定数として扱う。

    Args:
        params: 現在のパラメータ
        phase: "ce" / "kncl" / "scl" / "multitask"
        inputs: (N×D_in) 入力
        labels: (N,) クラス番号
        plan: 学習計画（dropout_rate と kncl_cfg を参照）
        rng: ドロップアウト用ジェネレータ（plan.dropout_rate > 0 のとき必須）

    Returns:
        (loss, grads)
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = inputs.shape[0]
    drop_rng = rng if plan.dropout_rate > 0.0 else None
    if plan.dropout_rate > 0.0 and rng is None:
        raise ValueError("dropout_rate > 0 の学習には rng が必要です")

    if phase == PHASE_CE:
        z, cache = encode(params, inputs, plan.dropout_rate, drop_rng)
        loss, dlog = ce_loss(softmax(logits(params, z)), labels)
        return loss, backward(params, cache, dL_dlogits=dlog)

    if phase not in CONTRASTIVE_PHASES:
        raise ValueError(f"未知のフェーズです: {phase}")

    cfg = plan.kncl_cfg
    augment = cfg.use_augmented_views
    stacked = np.vstack([inputs, adversarial_views(params, inputs, labels, cfg.epsilon_adv)]) if augment else inputs
    z, cache = encode(params, stacked, plan.dropout_rate, drop_rng)
    u, norms = l2_normalize_rows(z)

    if phase == PHASE_SCL:
        scl_labels = np.concatenate([labels, labels]) if augment else labels
        result = scl_loss(u, scl_labels, cfg.tau)
    else:
        result = kncl_loss(u[:n], u[n:] if augment else None, labels, cfg)
    dz = l2_normalize_rows_backward(u, norms, result.dL_dz)
    loss = result.loss

    dlog = None
    if phase == PHASE_MULTITASK:
        ce, dlog_orig = ce_loss(softmax(logits(params, z[:n])), labels)
        loss += ce
        dlog = np.zeros((z.shape[0], params.n_classes))
        dlog[:n] = dlog_orig
    return loss, backward(params, cache, dL_dz=dz, dL_dlogits=dlog)


# --------------------------------------------------------------------------- #
# 学習ループ
# --------------------------------------------------------------------------- #
def _check_training_data(plan: TrainPlan, data: FeatureSet) -> None:
    if len(data) == 0:
        raise ValueError("学習データが空です")
    if data.n_ood > 0:
        raise ValueError(f"学習データに OOD 例が {data.n_ood}件含まれています（IND のみで学習します）")
    for phase, _ in plan.phases():
        if phase not in CONTRASTIVE_PHASES:
            continue
        if plan.batch_size > len(data):
            raise ValueError(
                f"コントラスト学習のバッチサイズ {plan.batch_size} が学習データ数 {len(data)} を超えています"
            )
        if phase != PHASE_SCL and plan.kncl_cfg.k >= plan.batch_size:
            raise ValueError(
                f"KNCL の k はバッチサイズ未満である必要があります: k={plan.kncl_cfg.k}, batch_size={plan.batch_size}"
            )


def _val_accuracy(params: EncoderParams, val_data: Optional[FeatureSet]) -> Optional[float]:
    if val_data is None:
        return None
    ind = val_data.ind_only()
    if len(ind) == 0:
        return None
    z, _ = encode(params, ind.features)
    pred = np.argmax(classify(params, z), axis=1)
    return float(np.mean(pred == ind.labels))


def train(
    plan: TrainPlan,
    train_data: FeatureSet,
    val_data: Optional[FeatureSet] = None,
    init_params: Optional[EncoderParams] = None,
) -> TrainReport:
    """
    計画に従ってエンコーダを学習

    Args:
        plan: 学習計画
        train_data: IND のみの学習データ
        val_data: 検証データ（分類ヘッド学習後のエポックで IND 正解率を記録）
        init_params: 初期パラメータ（None なら plan.seed から Glorot 初期化）

    Returns:
        TrainReport
    """
    _check_training_data(plan, train_data)
    if init_params is None:
        params = EncoderParams.initialize(
            train_data.dim,
            train_data.n_classes,
            make_rng(plan.seed),
            hidden=plan.hidden,
            d_z=plan.d_z,
            activation=plan.activation,
        )
    else:
        if init_params.d_in != train_data.dim or init_params.n_classes != train_data.n_classes:
            raise ValueError("初期パラメータの形状が学習データと一致しません")
        params = init_params.copy()

    logger.info(
        f"学習開始: 戦略={plan.strategy}, 学習データ {len(train_data)}件, "
        f"バッチ {plan.batch_size}, フェーズ {plan.phases()}"
    )
    started = time.perf_counter()
    curve: List[LossRecord] = []
    head_ready = False
    epoch = 0
    for phase, n_epochs in plan.phases():
        state = AdamState.for_params(params, lr=plan.lr)
        head_ready = head_ready or phase in (PHASE_CE, PHASE_MULTITASK)
        for _ in range(n_epochs):
            epoch += 1
            batches = make_batches(train_data, plan.batch_size, epoch, plan.seed, phase)
            batch_losses = []
            for b, batch in enumerate(batches):
                rng = make_rng(plan.seed, epoch, b + 1)
                loss, grads = batch_objective(params, phase, batch.inputs, batch.labels, plan, rng)
                if not np.isfinite(loss):
                    raise FloatingPointError(f"損失が非有限値になりました: エポック {epoch}, バッチ {b}")
                state, params = adam_step(state, params, grads)
                batch_losses.append(loss)
            epoch_loss = float(np.mean(batch_losses))
            val_acc = _val_accuracy(params, val_data) if head_ready else None
            curve.append(LossRecord(epoch=epoch, phase=phase, loss=epoch_loss, val_acc=val_acc))
            logger.debug(f"エポック {epoch} ({phase}): loss={epoch_loss:.6f}, val_acc={val_acc}")
        logger.info(f"フェーズ {phase} 完了: {n_epochs} エポック")

    wall_time = time.perf_counter() - started
    logger.info(f"学習完了: {epoch} エポック, {wall_time:.1f} 秒")
    return TrainReport(
        curve=curve, params=params, wall_time=wall_time, strategy=plan.strategy, head_trained=plan.trains_head
    )


# --------------------------------------------------------------------------- #
# 損失曲線 CSV
# --------------------------------------------------------------------------- #
def loss_curve_csv(report: TrainReport) -> str:
    """
    損失曲線の CSV（epoch,phase,loss,val_acc）。実行時間は含めない
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "phase", "loss", "val_acc"])
    for r in report.curve:
        writer.writerow([r.epoch, r.phase, repr(r.loss), "" if r.val_acc is None else repr(r.val_acc)])
    return buf.getvalue()


def write_loss_curve(path: str, report: TrainReport) -> None:
    atomic_write_text(path, loss_curve_csv(report))
