"""
协同训练

每个 epoch 依次以每个训练病人为锚点 i，与其余病人 j 逐对计算 ‖T − S‖²，
在锚点的所有配对上累积梯度后只做一次参数更新。

同一锚点内 θ 不变，因此所有 Z_j 可以在同一个 θ 下一次批量编码；每个病人的嵌入只汇总成
AᵀA 与 Aᵀy（见 objective），各对损失求和后在一条磁带上反传一次，
结果与逐对重新编码、逐对反传相同（链式法则是线性的）。
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..autodiff import Adam, Tape, Tensor, add, backward, scale_grads
from ..config import EncoderConfig, TrainConfig, validate_config
from ..data.records import PatientRecord
from ..utils.exceptions import DataError, TrainingError
from ..utils.logger import get_logger
from .encoder import ModelParams, encode_many
from .objective import gram_pair_loss, gram_summary

logger = get_logger("trainer")


@dataclass
class TrainTrace:
    epoch_losses: List[float] = field(default_factory=list)
    epoch_seconds: List[float] = field(default_factory=list)
    optimizer_steps: int = 0

    def to_rows(self) -> List[dict]:
        return [
            {"epoch": k + 1, "mean_loss": loss, "seconds": seconds}
            for k, (loss, seconds) in enumerate(zip(self.epoch_losses, self.epoch_seconds))
        ]


def accumulate_anchor_gradients(
    params: ModelParams,
    records: Sequence[PatientRecord],
    anchor: int,
    partners: Sequence[int],
    cfg: TrainConfig,
) -> List[float]:
    """
    把锚点与各配对病人的损失梯度累加进 params 的 grad，返回各对的损失值。
    average_pair_grads 时梯度为各对梯度的平均，否则为总和；调用前 grad 应已清零。
    """
    if not partners:
        raise TrainingError(f"锚点 {records[anchor].patient_id} 没有可配对的病人")
    involved = [anchor, *partners]
    losses: List[float] = []

    with Tape() as tape:
        Z = encode_many([Tensor(records[k].X) for k in involved], params, cfg.tbptt_window)
        summaries = [gram_summary(z, records[k].y) for z, k in zip(Z, involved)]
        total = None
        for slot, j in enumerate(partners, start=1):
            loss = gram_pair_loss(summaries[0], summaries[slot], normalize=cfg.normalize_loss)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingError(
                    f"配对 ({records[anchor].patient_id}, {records[j].patient_id}) 的损失不是有限值"
                )
            losses.append(value)
            total = loss if total is None else add(total, loss)
    backward(tape, total)
    if cfg.average_pair_grads:
        scale_grads(params.parameters(), 1.0 / len(partners))
    return losses


class CollaborativeTrainer:
    """协同训练循环；一次训练内严格顺序执行，固定种子时结果逐位可复现"""

    def __init__(
        self,
        cfg: Optional[TrainConfig] = None,
        encoder_cfg: Optional[EncoderConfig] = None,
        log_path: Optional[Union[str, Path]] = None,
    ):
        self.cfg = validate_config(TrainConfig, cfg or {})
        self.encoder_cfg = validate_config(EncoderConfig, encoder_cfg or {})
        self.log_path = Path(log_path) if log_path else None
        self.schedule_rng = np.random.Generator(np.random.PCG64([self.cfg.seed, 1]))

    def _check_cohort(self, records: Sequence[PatientRecord]) -> None:
        if len(records) < 2:
            raise DataError(f"协同训练至少需要 2 个训练病人，实际 {len(records)}")
        dims = {r.D for r in records}
        if len(dims) != 1:
            raise DataError(f"训练病人的特征维度不一致: {sorted(dims)}")
        for r in records:
            if not r.has_both_classes:
                logger.info("single-class patient in training set", patient_id=r.patient_id, label=int(r.y[0]))

    def _anchor_order(self, n: int) -> np.ndarray:
        if self.cfg.shuffle_anchors:
            return self.schedule_rng.permutation(n)
        return np.arange(n)

    def _partners(self, anchor: int, n: int) -> List[int]:
        others = [j for j in range(n) if j != anchor]
        k = self.cfg.subsample_pairs
        if k is None or k >= len(others):
            return others
        picked = self.schedule_rng.choice(len(others), size=k, replace=False)
        return [others[p] for p in sorted(picked.tolist())]

    def train(
        self, records: Sequence[PatientRecord], params: Optional[ModelParams] = None
    ) -> Tuple[ModelParams, TrainTrace]:
        self._check_cohort(records)
        if params is None:
            params = ModelParams.initialize(records[0].D, self.encoder_cfg, seed=self.cfg.seed)
        optimizer = Adam(
            params.parameters(),
            lr=self.cfg.lr,
            beta1=self.cfg.beta1,
            beta2=self.cfg.beta2,
            eps=self.cfg.eps,
        )
        trace = TrainTrace()
        log_file = None
        if self.log_path is not None:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            log_file = open(self.log_path, "w", encoding="utf-8")

        logger.info(
            "training started",
            n_patients=len(records),
            n_epochs=self.cfg.n_epochs,
            hidden_size=params.hidden_size,
            latent_size=params.latent_size,
        )
        try:
            for epoch in range(1, self.cfg.n_epochs + 1):
                started = time.perf_counter()
                epoch_losses: List[float] = []
                for anchor in self._anchor_order(len(records)).tolist():
                    optimizer.zero_grad()
                    partners = self._partners(anchor, len(records))
                    epoch_losses.extend(accumulate_anchor_gradients(params, records, anchor, partners, self.cfg))
                    optimizer.step()
                mean_loss = float(np.mean(epoch_losses))
                seconds = time.perf_counter() - started
                trace.epoch_losses.append(mean_loss)
                trace.epoch_seconds.append(seconds)
                logger.info("epoch finished", epoch=epoch, mean_loss=round(mean_loss, 6), seconds=round(seconds, 2))
                if log_file is not None:
                    log_file.write(json.dumps({"epoch": epoch, "mean_loss": mean_loss, "seconds": seconds}) + "\n")
                    log_file.flush()
        finally:
            if log_file is not None:
                log_file.close()

        optimizer.zero_grad()
        trace.optimizer_steps = optimizer.step_count
        return params, trace


def train(
    records: Sequence[PatientRecord],
    cfg: Optional[TrainConfig] = None,
    encoder_cfg: Optional[EncoderConfig] = None,
    log_path: Optional[Union[str, Path]] = None,
) -> Tuple[ModelParams, TrainTrace]:
    return CollaborativeTrainer(cfg, encoder_cfg, log_path).train(records)


def checkpoint(params: ModelParams, path: Union[str, Path]) -> str:
    """保存训练好的 θ，返回校验和"""
    return params.save(path)


def restore(path: Union[str, Path]) -> ModelParams:
    return ModelParams.load(path)


__all__ = [
    "TrainTrace",
    "CollaborativeTrainer",
    "accumulate_anchor_gradients",
    "train",
    "checkpoint",
    "restore",
]
