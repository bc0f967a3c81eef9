"""
成对相似度目标: 余弦相似度矩阵 S、标签外积目标矩阵 T，以及损失 ‖T − S‖²

训练时用等价的 Gram 形式: 记单位化嵌入为 A、B，
‖y_i y_jᵀ − A Bᵀ‖² = N_i N_j − 2 (Aᵀy_i)·(Bᵀy_j) + ⟨AᵀA, BᵀB⟩_F，
每个病人只需一次算出 L×L 的 AᵀA 与长度 L 的 Aᵀy，之后每对的代价与序列长度无关。
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from ..autodiff import Tensor, add, frobenius_sq_norm, matmul, mul, row_l2_normalize, scalar_mul, sub, sum_all, transpose
from ..utils.exceptions import DataError, DimensionError

COSINE_EPS = 1e-12

ArrayLike = Union[Tensor, np.ndarray]


def _as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def cosine_similarity_matrix(Z_i: ArrayLike, Z_j: ArrayLike) -> Tensor:
    """S_uv = z_u·z_v / (max(‖z_u‖, ε)·max(‖z_v‖, ε))，ε = 1e-12"""
    Z_i, Z_j = _as_tensor(Z_i), _as_tensor(Z_j)
    if Z_i.ndim != 2 or Z_j.ndim != 2 or Z_i.shape[1] != Z_j.shape[1]:
        raise DimensionError("cosine_similarity_matrix", f"嵌入维度不一致 {Z_i.shape} vs {Z_j.shape}")
    return matmul(row_l2_normalize(Z_i, COSINE_EPS), transpose(row_l2_normalize(Z_j, COSINE_EPS)))


def _check_labels(y: np.ndarray, name: str) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.size == 0:
        raise DataError(f"{name} 必须是非空一维标签向量，实际形状 {y.shape}")
    if not np.isin(y, (-1, 1)).all():
        raise DataError(f"{name} 只能包含 -1 / +1")
    return y.astype(np.int64)


def target_matrix(y_i: np.ndarray, y_j: np.ndarray) -> np.ndarray:
    """T = y_i y_j^T（秩为 1，元素 ∈ {−1, +1}）"""
    return np.outer(_check_labels(y_i, "y_i"), _check_labels(y_j, "y_j"))


def pair_loss(T: ArrayLike, S: ArrayLike, normalize: bool = True) -> Tensor:
    """‖T − S‖²_F；normalize 时除以 N_i·N_j"""
    T, S = _as_tensor(T), _as_tensor(S)
    if T.shape != S.shape or T.ndim != 2:
        raise DimensionError("pair_loss", f"T {T.shape} 与 S {S.shape} 形状不一致")
    loss = frobenius_sq_norm(sub(T, S))
    if normalize:
        loss = scalar_mul(loss, 1.0 / (S.shape[0] * S.shape[1]))
    return loss


@dataclass
class GramSummary:
    """一个病人在配对损失中用到的全部量: AᵀA（L×L）、Aᵀy（L×1）与样本数"""

    gram: Tensor
    projection: Tensor
    n: int


def gram_summary(Z: ArrayLike, y: np.ndarray) -> GramSummary:
    Z = _as_tensor(Z)
    y = _check_labels(y, "y")
    if Z.ndim != 2 or Z.shape[0] != y.shape[0]:
        raise DimensionError("gram_summary", f"嵌入 {Z.shape} 与标签长度 {y.shape[0]} 不匹配")
    A = row_l2_normalize(Z, COSINE_EPS)
    At = transpose(A)
    return GramSummary(
        gram=matmul(At, A),
        projection=matmul(At, Tensor(y.astype(np.float64)[:, None])),
        n=int(y.shape[0]),
    )


def gram_pair_loss(a: GramSummary, b: GramSummary, normalize: bool = True) -> Tensor:
    """与 pair_loss(target_matrix(y_a, y_b), cosine_similarity_matrix(Z_a, Z_b)) 数值相同"""
    if a.gram.shape != b.gram.shape:
        raise DimensionError("gram_pair_loss", f"嵌入维度不一致 {a.gram.shape} vs {b.gram.shape}")
    cross = sum_all(mul(a.projection, b.projection))
    quad = sum_all(mul(a.gram, b.gram))
    loss = add(sub(Tensor(float(a.n * b.n)), scalar_mul(cross, 2.0)), quad)
    if normalize:
        loss = scalar_mul(loss, 1.0 / (a.n * b.n))
    return loss
