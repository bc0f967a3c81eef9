"""
队列的 CSV 读写

每个病人一个 CSV: 表头 `t,ICPm,BPm,BPs,BPd,HRT,artifact`，t 为从 0 开始的整数分钟，
artifact ∈ {0,1}，缺失值写成空字段。年龄放在同目录的 cohort.json: {"<id>": {"age": <years>}}。
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..config import DEFAULT_CHANNELS
from ..utils.exceptions import DataError, ParseError
from ..utils.logger import get_logger
from .records import RawRecording

logger = get_logger("csv_io")

SIDECAR_NAME = "cohort.json"


def write_csv_cohort(
    cohort: Sequence[RawRecording],
    path: Union[str, Path],
    channels: Sequence[str] = DEFAULT_CHANNELS,
) -> List[Path]:
    """每个病人写一个 CSV，并写出年龄 sidecar；字段顺序固定"""
    if not cohort:
        raise DataError("队列为空，没有可写出的记录")
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for rec in cohort:
        rec.require_channels(channels)
        frame = pd.DataFrame({"t": np.arange(rec.length, dtype=np.int64)})
        for name in channels:
            frame[name] = rec.channels[name]
        frame["artifact"] = rec.artifact_mask.astype(np.int64)
        target = out_dir / f"{rec.patient_id}.csv"
        frame.to_csv(target, index=False, na_rep="", lineterminator="\n")
        written.append(target)

    sidecar = {rec.patient_id: {"age": rec.age} for rec in cohort}
    (out_dir / SIDECAR_NAME).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("cohort written", path=str(out_dir), n_patients=len(cohort))
    return written


def _load_sidecar(directory: Path) -> Dict[str, dict]:
    sidecar = directory / SIDECAR_NAME
    try:
        data = json.loads(sidecar.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError("缺少年龄 sidecar 文件", path=str(sidecar))
    except json.JSONDecodeError as e:
        raise ParseError(f"sidecar 不是合法 JSON: {e.msg}", path=str(sidecar), line=e.lineno)
    if not isinstance(data, dict):
        raise ParseError("sidecar 顶层必须是对象", path=str(sidecar), line=1)
    return data


def read_patient_csv(
    path: Union[str, Path],
    age: float,
    channels: Sequence[str] = DEFAULT_CHANNELS,
) -> RawRecording:
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise ParseError("文件为空", path=str(path), line=1)
    except pd.errors.ParserError as e:
        raise ParseError(f"字段数量与表头不一致: {e}", path=str(path))

    required = ["t", *channels, "artifact"]
    missing = [name for name in required if name not in frame.columns]
    if missing:
        raise ParseError(f"缺少必需列 {', '.join(missing)}", path=str(path), line=1)
    if frame.empty:
        raise ParseError("没有数据行", path=str(path), line=2)

    for column in ("t", "artifact"):
        incomplete = frame[column].isna().to_numpy()
        if incomplete.any():
            row = int(np.argmax(incomplete))
            raise ParseError(f"第 {row} 行缺少 '{column}'（行长度与表头不一致）", path=str(path), line=row + 2)

    t = frame["t"].to_numpy(dtype=np.float64)
    bad_t = (t != np.round(t)) | (t < 0)
    if bad_t.any():
        row = int(np.argmax(bad_t))
        raise ParseError("t 必须是非负整数分钟", path=str(path), line=row + 2)
    steps = np.diff(t)
    if (steps <= 0).any():
        row = int(np.argmax(steps <= 0)) + 1
        raise ParseError("时间戳不是严格递增的", path=str(path), line=row + 2)

    artifact = frame["artifact"].to_numpy(dtype=np.float64)
    bad_flag = ~np.isin(artifact, (0.0, 1.0))
    if bad_flag.any():
        row = int(np.argmax(bad_flag))
        raise ParseError("artifact 只能是 0 或 1", path=str(path), line=row + 2)

    values = {}
    for name in channels:
        try:
            values[name] = pd.to_numeric(frame[name], errors="raise").to_numpy(dtype=np.float64)
        except (ValueError, TypeError) as e:
            raise ParseError(f"通道 {name} 含有非数值内容: {e}", path=str(path))

    return RawRecording(
        patient_id=path.stem,
        channels=values,
        age=float(age),
        artifact_mask=artifact.astype(bool),
    )


def read_csv_cohort(
    path: Union[str, Path],
    channels: Sequence[str] = DEFAULT_CHANNELS,
) -> List[RawRecording]:
    """读取目录下每个病人的 CSV；缺失值保留为 NaN"""
    directory = Path(path)
    if not directory.is_dir():
        raise DataError(f"'{directory}' 不是目录")
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise DataError(f"目录 '{directory}' 中没有 CSV 文件")

    ages = _load_sidecar(directory)
    cohort = []
    for file in files:
        entry: Optional[dict] = ages.get(file.stem)
        if not entry or "age" not in entry:
            raise ParseError(f"sidecar 中没有病人 '{file.stem}' 的年龄", path=str(directory / SIDECAR_NAME))
        cohort.append(read_patient_csv(file, entry["age"], channels))
    logger.info("cohort read", path=str(directory), n_patients=len(cohort))
    return cohort
