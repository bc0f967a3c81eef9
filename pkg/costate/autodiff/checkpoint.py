"""
参数检查点格式（版本 1）

    {
      "format": "costate-checkpoint",
      "version": 1,
      "kind": "<encoder|vae>",
      "meta": {...},                      # 构建模型所需的配置
      "tensors": {name: {"shape": [...], "data": [row-major floats]}},
      "checksum": "<sha256(canonical json of kind/meta/tensors)>"
    }

浮点数以 JSON 的 repr 形式写出，读回时逐位相等。
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from ..utils.exceptions import CheckpointError, ChecksumError
from ..utils.logger import get_logger

FORMAT_NAME = "costate-checkpoint"
FORMAT_VERSION = 1

logger = get_logger("checkpoint")


def _canonical(payload: Mapping[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _checksum(payload: Mapping[str, Any]) -> str:
    return hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()


def save_tensors(
    path: Union[str, Path],
    tensors: Mapping[str, np.ndarray],
    kind: str,
    meta: Optional[Mapping[str, Any]] = None,
) -> str:
    """写出检查点，返回校验和"""
    payload = {
        "kind": kind,
        "meta": dict(meta or {}),
        "tensors": {
            name: {"shape": list(np.shape(value)), "data": np.asarray(value, dtype=np.float64).reshape(-1).tolist()}
            for name, value in sorted(tensors.items())
        },
    }
    digest = _checksum(payload)
    document = {"format": FORMAT_NAME, "version": FORMAT_VERSION, **payload, "checksum": digest}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_canonical(document), encoding="utf-8")
    logger.info("checkpoint saved", path=str(path), kind=kind, checksum=digest[:12])
    return digest


def load_tensors(
    path: Union[str, Path],
    kind: Optional[str] = None,
    expected_shapes: Optional[Mapping[str, Tuple[int, ...]]] = None,
) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """读取检查点并校验格式、版本、校验和与形状"""
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CheckpointError(f"找不到检查点文件 '{path}'")
    except json.JSONDecodeError as e:
        raise ChecksumError(f"检查点 '{path}' 已损坏: {e}")

    if not isinstance(document, dict) or document.get("format") != FORMAT_NAME:
        raise CheckpointError(f"'{path}' 不是检查点文件")
    if document.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"不支持的检查点版本: {document.get('version')}")
    payload = {key: document.get(key) for key in ("kind", "meta", "tensors")}
    if _checksum(payload) != document.get("checksum"):
        raise ChecksumError(f"检查点 '{path}' 校验和不匹配")
    if kind is not None and payload["kind"] != kind:
        raise CheckpointError(f"检查点类型为 '{payload['kind']}'，期望 '{kind}'")

    tensors: Dict[str, np.ndarray] = {}
    for name, entry in payload["tensors"].items():
        shape = tuple(int(s) for s in entry["shape"])
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f"张量 '{name}' 的形状头 {shape} 与数据长度 {data.size} 不符")
        tensors[name] = data.reshape(shape)

    if expected_shapes is not None:
        missing = sorted(set(expected_shapes) - set(tensors))
        if missing:
            raise CheckpointError(f"检查点缺少张量: {', '.join(missing)}")
        for name, shape in expected_shapes.items():
            if tensors[name].shape != tuple(shape):
                raise CheckpointError(
                    f"张量 '{name}' 形状 {tensors[name].shape} 与模型期望 {tuple(shape)} 不符"
                )
    return tensors, dict(payload["meta"] or {})


def file_digest(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
