"""
预处理: 伪迹过滤、按压力-时间剂量规则打 IH 标签、逐通道标准化、覆盖率筛选与训练/测试划分
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import DEFAULT_CHANNELS, PreprocessConfig
from ..utils.exceptions import (
    ConfigError,
    CoverageError,
    DataError,
    EmptyRecordingError,
    InsufficientDataError,
)
from ..utils.logger import get_logger
from .records import PatientRecord, RawRecording

logger = get_logger("preprocess")

IQR_FLOOR = 1e-9


def run_lengths(mask: np.ndarray) -> List[Tuple[int, int]]:
    """布尔序列中所有极大连续 True 段的 (起点, 长度)"""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        return []
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    starts, stops = edges[0::2], edges[1::2]
    return [(int(s), int(e - s)) for s, e in zip(starts, stops)]


def filter_artifacts(rec: RawRecording) -> RawRecording:
    """删除被标注为伪迹的行"""
    keep = ~rec.artifact_mask
    if not keep.any():
        raise EmptyRecordingError(f"{rec.patient_id}: 所有样本都是伪迹，过滤后记录为空")
    if keep.all():
        return rec
    return rec.take(keep)


def label_ih(icpm: np.ndarray, threshold: float = 15.0, min_duration: int = 48) -> np.ndarray:
    """
    样本为 +1 当且仅当它属于某个 icpm > threshold 的极大连续段，且该段长度 >= min_duration
    """
    icpm = np.asarray(icpm, dtype=np.float64)
    if icpm.ndim != 1 or icpm.size == 0:
        raise ConfigError("label_ih 需要非空的一维序列")
    if threshold <= 0:
        raise ConfigError(f"threshold 必须 > 0，实际 {threshold}")
    if min_duration < 1:
        raise ConfigError(f"min_duration 必须 >= 1，实际 {min_duration}")

    labels = np.full(icpm.shape[0], -1, dtype=np.int64)
    for start, length in run_lengths(icpm > threshold):
        if length >= min_duration:
            labels[start:start + length] = 1
    return labels


def standardize(channel: np.ndarray) -> np.ndarray:
    """(x - mean) / IQR，分位数为包含端点的线性插值；IQR < 1e-9 时除以 1"""
    x = np.asarray(channel, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 4:
        raise InsufficientDataError(f"标准化至少需要 4 个样本，实际 {x.shape}")
    q1, q3 = np.percentile(x, [25.0, 75.0], method="linear")
    iqr = q3 - q1
    scale = iqr if iqr >= IQR_FLOOR else 1.0
    return (x - x.mean()) / scale


def build_patient_record(
    rec: RawRecording,
    cfg: Optional[PreprocessConfig] = None,
    labels: Optional[np.ndarray] = None,
) -> PatientRecord:
    """
    X 列 = [标准化的各生理通道..., 年龄 / age_scale]；y 在未标准化的 ICPm（mmHg）上计算。
    labels 非空时直接使用（用于“先打标签再过滤”的模式）。
    """
    cfg = cfg or PreprocessConfig()
    if rec.artifact_mask.any():
        raise DataError(f"{rec.patient_id}: 记录仍含伪迹，请先调用 filter_artifacts")
    rec.require_channels(cfg.channels)
    for name in cfg.channels:
        if np.isnan(rec.channels[name]).any():
            raise DataError(f"{rec.patient_id}: 通道 {name} 有缺失值，请先经过 select_by_coverage")

    columns = [standardize(rec.channels[name]) for name in cfg.channels]
    columns.append(np.full(rec.length, rec.age / cfg.age_scale))
    if labels is None:
        labels = label_ih(rec.channels["ICPm"], cfg.threshold, cfg.min_duration)
    return PatientRecord(
        patient_id=rec.patient_id,
        X=np.column_stack(columns),
        y=labels,
        channel_names=[*cfg.channels, "age"],
    )


def prepare_record(rec: RawRecording, cfg: Optional[PreprocessConfig] = None) -> PatientRecord:
    """过滤伪迹并构建 PatientRecord；label_after_filter=False 时先在原始序列上打标签"""
    cfg = cfg or PreprocessConfig()
    if cfg.label_after_filter:
        return build_patient_record(filter_artifacts(rec), cfg)
    labels = label_ih(rec.channels["ICPm"], cfg.threshold, cfg.min_duration)
    filtered = filter_artifacts(rec)
    return build_patient_record(filtered, cfg, labels=labels[~rec.artifact_mask])


def _interpolate_gaps(values: np.ndarray) -> np.ndarray:
    missing = np.isnan(values)
    if not missing.any():
        return values
    idx = np.arange(values.shape[0])
    filled = values.copy()
    filled[missing] = np.interp(idx[missing], idx[~missing], values[~missing])
    return filled


def select_by_coverage(
    cohort: Sequence[RawRecording],
    min_fraction: float = 0.5,
    channels: Sequence[str] = DEFAULT_CHANNELS,
) -> List[RawRecording]:
    """
    保留每个必需通道非缺失比例都 >= min_fraction 的病人，剩余缺口做线性插值（两端取最近值）
    """
    kept = []
    for rec in cohort:
        rec.require_channels(channels)
        coverage = {name: float(np.mean(~np.isnan(rec.channels[name]))) for name in channels}
        worst = min(coverage, key=coverage.get)
        if coverage[worst] < min_fraction or coverage[worst] == 0.0:
            logger.info(
                "patient dropped by coverage",
                patient_id=rec.patient_id,
                channel=worst,
                coverage=round(coverage[worst], 4),
            )
            continue
        kept.append(
            RawRecording(
                patient_id=rec.patient_id,
                channels={
                    name: _interpolate_gaps(values) if name in channels else values
                    for name, values in rec.channels.items()
                },
                age=rec.age,
                artifact_mask=rec.artifact_mask,
            )
        )
    if not kept:
        raise CoverageError(f"没有病人满足覆盖率 >= {min_fraction}，请降低 min_coverage 阈值")
    return kept


def prepare_cohort(cohort: Sequence[RawRecording], cfg: Optional[PreprocessConfig] = None) -> List[PatientRecord]:
    """覆盖率筛选 -> 伪迹过滤 -> 标签与标准化；全伪迹或过短的病人跳过并记录"""
    cfg = cfg or PreprocessConfig()
    records = []
    for rec in select_by_coverage(cohort, cfg.min_coverage, cfg.channels):
        try:
            records.append(prepare_record(rec, cfg))
        except (EmptyRecordingError, InsufficientDataError) as e:
            logger.warning("patient skipped", patient_id=rec.patient_id, reason=str(e))
    if not records:
        raise DataError("预处理后没有剩余病人")
    ih_fraction = float(np.mean(np.concatenate([r.y for r in records]) == 1))
    logger.info("cohort prepared", n_patients=len(records), ih_fraction=round(ih_fraction, 4))
    return records


@dataclass
class SplitPlan:
    seed: int
    train_ids: List[str]
    test_ids: List[str]
    train_fraction: float = 0.8

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            "train": list(self.train_ids),
            "test": list(self.test_ids),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplitPlan":
        return cls(
            seed=int(data["seed"]),
            train_ids=[str(x) for x in data["train"]],
            test_ids=[str(x) for x in data["test"]],
            train_fraction=float(data["train_fraction"]),
        )

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SplitPlan":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (FileNotFoundError, KeyError, json.JSONDecodeError) as e:
            raise DataError(f"无法读取划分文件 '{path}': {e}")


def _ids_of(cohort: Iterable) -> List[str]:
    return [item if isinstance(item, str) else item.patient_id for item in cohort]


def split_cohort(cohort: Sequence, seed: int, train_fraction: float = 0.8) -> SplitPlan:
    """
    病人级随机划分，|train| = floor(train_fraction × P + 0.5)；两侧都保持队列原顺序
    """
    ids = _ids_of(cohort)
    if len(ids) < 2:
        raise DataError(f"划分至少需要 2 个病人，实际 {len(ids)}")
    if len(set(ids)) != len(ids):
        raise DataError("队列中存在重复的 patient_id")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction 必须在 (0, 1) 内，实际 {train_fraction}")

    n_train = int(np.floor(train_fraction * len(ids) + 0.5))
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(ids))
    chosen = set(order[:n_train].tolist())
    return SplitPlan(
        seed=seed,
        train_ids=[pid for k, pid in enumerate(ids) if k in chosen],
        test_ids=[pid for k, pid in enumerate(ids) if k not in chosen],
        train_fraction=train_fraction,
    )


def select_records(records: Sequence[PatientRecord], ids: Sequence[str]) -> List[PatientRecord]:
    """按 ids 的顺序取出记录；缺少任何一个都视为数据错误"""
    by_id = {r.patient_id: r for r in records}
    missing = [pid for pid in ids if pid not in by_id]
    if missing:
        raise DataError("以下病人不在记录中: " + ", ".join(missing))
    return [by_id[pid] for pid in ids]


def save_archive(records: Sequence[PatientRecord], path: Union[str, Path]) -> None:
    """PatientRecord 归档为 .npz: ids + X/<id> + y/<id>"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {"ids": np.array([r.patient_id for r in records])}
    for r in records:
        arrays[f"X/{r.patient_id}"] = r.X
        arrays[f"y/{r.patient_id}"] = r.y
    with open(path, "wb") as f:
        np.savez_compressed(f, **arrays)


def load_archive(path: Union[str, Path]) -> List[PatientRecord]:
    try:
        with np.load(path, allow_pickle=False) as archive:
            return [
                PatientRecord(patient_id=str(pid), X=archive[f"X/{pid}"], y=archive[f"y/{pid}"])
                for pid in archive["ids"].tolist()
            ]
    except (FileNotFoundError, KeyError, ValueError) as e:
        raise DataError(f"无法读取记录归档 '{path}': {e}")
