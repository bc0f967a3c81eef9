"""
协同推理: 用最小二乘把测试病人的每个时间点与各个已标注参考病人打分，再对参考病人取平均
"""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..data.records import PatientRecord
from ..utils.exceptions import DataError
from ..utils.logger import get_logger
from .encoder import EmbeddingSequence, ModelParams, embed_records, encode
from .objective import cosine_similarity_matrix

PREDICTION_COLUMNS = ["patient_id", "t", "score", "label_true"]


class ReferenceSet:
    """已标注参考病人的花名册: (PatientRecord, EmbeddingSequence) 对"""

    def __init__(self, records: Sequence[PatientRecord] = ()):
        self.logger = get_logger("references")
        self.records: Dict[str, PatientRecord] = {}
        self.embeddings: Dict[str, EmbeddingSequence] = {}
        for record in records:
            self.register(record)

    def register(self, record: PatientRecord, embedding: Optional[EmbeddingSequence] = None) -> None:
        if record.patient_id in self.records:
            self.logger.warning("reference replaced", patient_id=record.patient_id)
            self.embeddings.pop(record.patient_id, None)
        self.records[record.patient_id] = record
        if embedding is not None:
            if embedding.N != record.N:
                raise DataError(f"{record.patient_id}: 嵌入行数 {embedding.N} 与记录长度 {record.N} 不一致")
            self.embeddings[record.patient_id] = embedding

    def unregister(self, patient_id: str) -> None:
        self.records.pop(patient_id, None)
        self.embeddings.pop(patient_id, None)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> List[str]:
        return list(self.records)

    def limit(self, max_references: Optional[int]) -> "ReferenceSet":
        """按注册顺序保留前 max_references 个参考病人"""
        if max_references is None or max_references >= len(self):
            return self
        subset = ReferenceSet()
        for pid in self.ids[:max_references]:
            subset.register(self.records[pid], self.embeddings.get(pid))
        return subset

    def ensure_embeddings(self, params: ModelParams) -> None:
        """对尚未编码的参考病人做一次批量编码并缓存"""
        pending = [r for pid, r in self.records.items() if pid not in self.embeddings]
        if not pending:
            return
        for embedding in embed_records(pending, params):
            self.embeddings[embedding.patient_id] = embedding
        self.logger.debug("references encoded", count=len(pending))

    def pairs(self) -> List[tuple]:
        missing = [pid for pid in self.records if pid not in self.embeddings]
        if missing:
            raise DataError(f"参考病人尚未编码: {', '.join(missing)}")
        return [(self.records[pid], self.embeddings[pid]) for pid in self.records]

    def get_stats(self) -> Dict[str, float]:
        labels = [r.y for r in self.records.values()]
        total = int(sum(y.shape[0] for y in labels))
        return {
            "total_references": len(self.records),
            "total_samples": total,
            "ih_fraction": float(np.mean(np.concatenate(labels) == 1)) if labels else 0.0,
        }


def infer_from_similarity(S: np.ndarray, y_r: np.ndarray) -> np.ndarray:
    """min_y ‖S − y y_r^T‖² 的闭式解 S y_r / (y_r^T y_r)"""
    y_r = np.asarray(y_r, dtype=np.float64)
    if y_r.ndim != 1 or y_r.size == 0:
        raise DataError("参考标签向量为空，无法求最小二乘解")
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] != y_r.shape[0]:
        raise DataError(f"相似度矩阵 {S.shape} 与参考标签长度 {y_r.shape[0]} 不一致")
    return S @ y_r / float(y_r @ y_r)


def infer_single(Z_t: np.ndarray, Z_r: np.ndarray, y_r: np.ndarray) -> np.ndarray:
    """y_t = S y_r (y_r^T y_r)^{-1}，S 为 Z_t 与 Z_r 的余弦相似度矩阵"""
    return infer_from_similarity(cosine_similarity_matrix(Z_t, Z_r).data, y_r)


def collaborative_infer(
    refs: ReferenceSet,
    X_t: Union[np.ndarray, EmbeddingSequence],
    params: ModelParams,
) -> np.ndarray:
    """y_pred = (1/M) Σ_r infer_single(encode(X_t), encode(X_r), y_r)"""
    if len(refs) == 0:
        raise DataError("参考集合为空")
    refs.ensure_embeddings(params)
    Z_t = X_t.Z if isinstance(X_t, EmbeddingSequence) else encode(X_t, params).Z
    total = np.zeros(Z_t.shape[0])
    pairs = refs.pairs()
    for record, embedding in pairs:
        total += infer_single(Z_t, embedding.Z, record.y)
    return total / len(pairs)


def binarize(scores: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    """score > threshold 为 +1，否则为 −1"""
    return np.where(np.asarray(scores) > threshold, 1, -1).astype(np.int64)


def confusion_counts(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.0) -> Dict[str, int]:
    predicted = binarize(scores, threshold)
    labels = np.asarray(labels)
    if predicted.shape != labels.shape:
        raise DataError(f"分数长度 {predicted.shape} 与标签长度 {labels.shape} 不一致")
    return {
        "tp": int(((predicted == 1) & (labels == 1)).sum()),
        "fp": int(((predicted == 1) & (labels == -1)).sum()),
        "tn": int(((predicted == -1) & (labels == -1)).sum()),
        "fn": int(((predicted == -1) & (labels == 1)).sum()),
    }


def infer_cohort(
    refs: ReferenceSet, records: Sequence[PatientRecord], params: ModelParams
) -> Dict[str, np.ndarray]:
    """对一组测试病人做协同推理；测试病人一次批量编码"""
    refs.ensure_embeddings(params)
    return {
        embedding.patient_id: collaborative_infer(refs, embedding, params)
        for embedding in embed_records(records, params)
    }


def predictions_frame(records: Sequence[PatientRecord], scores: Dict[str, np.ndarray]) -> pd.DataFrame:
    frames = [
        pd.DataFrame({
            "patient_id": r.patient_id,
            "t": np.arange(r.N, dtype=np.int64),
            "score": scores[r.patient_id],
            "label_true": r.y,
        })
        for r in records
    ]
    if not frames:
        return pd.DataFrame(columns=PREDICTION_COLUMNS)
    return pd.concat(frames, ignore_index=True)[PREDICTION_COLUMNS]


def write_predictions(
    path: Union[str, Path], records: Sequence[PatientRecord], scores: Dict[str, np.ndarray]
) -> Path:
    """预测文件: CSV `patient_id,t,score,label_true`，t 为过滤后记录内的行号"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    predictions_frame(records, scores).to_csv(path, index=False, lineterminator="\n")
    return path
