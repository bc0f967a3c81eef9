from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from ..utils.exceptions import DataError

SAMPLE_PERIOD_SECONDS = 60


@dataclass(eq=False)
class RawRecording:
    """
    单个病人的原始分钟级多通道记录（标准化之前）

    channels 按插入顺序保存每个通道的序列，缺失值为 NaN；
    artifact_mask 为 True 的样本是伪迹。
    """

    patient_id: str
    channels: Dict[str, np.ndarray]
    age: float
    artifact_mask: np.ndarray
    sample_period: int = SAMPLE_PERIOD_SECONDS

    def __post_init__(self):
        self.channels = {name: np.asarray(values, dtype=np.float64) for name, values in self.channels.items()}
        self.artifact_mask = np.asarray(self.artifact_mask, dtype=bool)
        if self.sample_period != SAMPLE_PERIOD_SECONDS:
            raise DataError(f"{self.patient_id}: 采样周期必须是 {SAMPLE_PERIOD_SECONDS} 秒")
        if not self.channels:
            raise DataError(f"{self.patient_id}: 记录中没有任何通道")
        n = self.artifact_mask.shape[0]
        if n < 1 or self.artifact_mask.ndim != 1:
            raise DataError(f"{self.patient_id}: 记录长度必须 >= 1")
        for name, values in self.channels.items():
            if values.shape != (n,):
                raise DataError(f"{self.patient_id}: 通道 {name} 长度 {values.shape} 与掩码长度 {n} 不一致")
        if not np.isfinite(self.age) or self.age < 0:
            raise DataError(f"{self.patient_id}: 年龄必须是非负数，实际 {self.age}")

    @property
    def length(self) -> int:
        return int(self.artifact_mask.shape[0])

    @property
    def channel_names(self) -> List[str]:
        return list(self.channels)

    def require_channels(self, names: Sequence[str]) -> None:
        missing = [name for name in names if name not in self.channels]
        if missing:
            raise DataError(f"{self.patient_id}: 缺少必需通道 {', '.join(missing)}")

    def take(self, keep: np.ndarray) -> "RawRecording":
        """按布尔掩码保留行，保持原有相对顺序"""
        return RawRecording(
            patient_id=self.patient_id,
            channels={name: values[keep] for name, values in self.channels.items()},
            age=self.age,
            artifact_mask=self.artifact_mask[keep],
            sample_period=self.sample_period,
        )


@dataclass(eq=False)
class PatientRecord:
    """模型可直接使用的记录: X (N×D) 与 ±1 标签 y"""

    patient_id: str
    X: np.ndarray
    y: np.ndarray
    channel_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise DataError(f"{self.patient_id}: X 必须是非空的 N×D 矩阵，实际 {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise DataError(f"{self.patient_id}: y 长度 {self.y.shape} 与 X 行数 {self.X.shape[0]} 不一致")
        if not np.isin(self.y, (-1, 1)).all():
            raise DataError(f"{self.patient_id}: y 只能包含 -1 / +1")
        if not np.isfinite(self.X).all():
            raise DataError(f"{self.patient_id}: X 含有缺失或非有限值")

    @property
    def N(self) -> int:
        return int(self.X.shape[0])

    @property
    def D(self) -> int:
        return int(self.X.shape[1])

    @property
    def has_both_classes(self) -> bool:
        return bool((self.y == 1).any() and (self.y == -1).any())
