"""
AUC 与 AP

auc: Mann–Whitney 统计量（平均秩处理并列，并列计 ½）。
average_precision: 按分数降序、同分按原始下标的稳定顺序逐个累加精确率，不做插值。
"""

from typing import Dict, Sequence

import numpy as np
import pandas as pd

from ..utils.exceptions import DataError, UndefinedMetricError


def _prepare(scores, labels) -> tuple:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise DataError(f"分数 {scores.shape} 与标签 {labels.shape} 形状不一致")
    if not np.isin(labels, (-1, 1)).all():
        raise DataError("标签只能包含 -1 / +1")
    if not np.isfinite(scores).all():
        raise DataError("分数含有非有限值")
    return scores, labels == 1


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """随机正样本得分高于随机负样本的概率"""
    scores, positive = _prepare(scores, labels)
    n_pos = int(positive.sum())
    n_neg = int(positive.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC 需要同时存在正负样本")
    ranks = pd.Series(scores).rank(method="average").to_numpy()
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """AP = Σ_k (R_k − R_{k−1})·P_k"""
    scores, positive = _prepare(scores, labels)
    n_pos = int(positive.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AP 需要至少一个正样本")
    order = np.lexsort((np.arange(scores.size), -scores))
    hits = positive[order]
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(precision[hits].sum() / n_pos)


def patient_metrics(scores: Sequence[float], labels: Sequence[int]) -> Dict[str, float]:
    """单个病人的 AUC / AP；未定义时抛出 UndefinedMetricError"""
    return {"auc": auc(scores, labels), "ap": average_precision(scores, labels)}
