"""
精确 t-SNE（非 Barnes-Hut）

逐点二分搜索 β = 1/(2σ²)，使条件分布熵等于 log(perplexity)（容差 1e-5）；
P 对称化后归一化，Q 为学生 t 分布；带动量（第 250 轮从 0.5 切换为 0.8）与自适应增益的梯度下降，
前 250 轮 P 放大 12 倍。复杂度 O(n²)，嵌入行数较多时请先 stratified_subsample。
"""

from typing import List, Optional, Tuple, Union

import numpy as np

from ..utils.exceptions import ConfigError
from ..utils.logger import get_logger

logger = get_logger("tsne")

ENTROPY_TOL = 1e-5
MAX_SEARCH_STEPS = 200
KL_EVERY = 50
P_FLOOR = 1e-12


def _squared_distances(X: np.ndarray) -> np.ndarray:
    sum_x = np.sum(X * X, axis=1)
    D = sum_x[:, None] - 2.0 * X @ X.T + sum_x[None, :]
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _hbeta(distances: np.ndarray, beta: float) -> Tuple[float, np.ndarray]:
    """给定 β 的条件分布及其熵（以 e 为底）"""
    shifted = distances - distances.min()
    P = np.exp(-shifted * beta)
    sum_p = P.sum()
    P = P / sum_p
    H = np.log(sum_p) + beta * np.sum(shifted * P)
    return float(H), P


def conditional_probabilities(X: np.ndarray, perplexity: float, tol: float = ENTROPY_TOL) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    D = _squared_distances(X)
    P = np.zeros((n, n))
    target = np.log(perplexity)
    for i in range(n):
        others = np.concatenate((np.arange(i), np.arange(i + 1, n)))
        Di = D[i, others]
        beta, beta_min, beta_max = 1.0, -np.inf, np.inf
        H, row = _hbeta(Di, beta)
        steps = 0
        while abs(H - target) > tol and steps < MAX_SEARCH_STEPS:
            if H > target:
                beta_min = beta
                beta = beta * 2.0 if np.isinf(beta_max) else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = beta / 2.0 if np.isinf(beta_min) else (beta + beta_min) / 2.0
            H, row = _hbeta(Di, beta)
            steps += 1
        P[i, others] = row
    return P


def joint_probabilities(X: np.ndarray, perplexity: float = 30.0) -> np.ndarray:
    """对称化的 P = (P_{j|i} + P_{i|j}) / 2n；对称、非负、总和为 1"""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ConfigError(f"t-SNE 至少需要 2 个点，实际形状 {X.shape}")
    conditional = conditional_probabilities(X, perplexity)
    return (conditional + conditional.T) / (2.0 * X.shape[0])


def student_t_affinities(Y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (Q, num)，num_ij = 1 / (1 + ‖y_i − y_j‖²)，对角为 0"""
    num = 1.0 / (1.0 + _squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], P_FLOOR))))


class TSNEProjector:
    def __init__(
        self,
        n_components: int = 2,
        perplexity: float = 30.0,
        n_iter: int = 1000,
        learning_rate: Union[float, str] = "auto",
        early_exaggeration: float = 12.0,
        exaggeration_iters: int = 250,
        momentum_switch: int = 250,
        random_state: int = 0,
    ):
        self.n_components = n_components
        self.perplexity = perplexity
        self.n_iter = n_iter
        self.learning_rate = learning_rate
        self.early_exaggeration = early_exaggeration
        self.exaggeration_iters = exaggeration_iters
        self.momentum_switch = momentum_switch
        self.random_state = random_state
        self.P_: Optional[np.ndarray] = None
        self.Q_: Optional[np.ndarray] = None
        self.kl_history_: List[Tuple[int, float]] = []
        self.embedding_: Optional[np.ndarray] = None
        self.learning_rate_: Optional[float] = None

    def _validate(self, n: int) -> None:
        if n < 4:
            raise ConfigError(f"t-SNE 至少需要 4 个点，实际 {n}")
        if not 1.0 < self.perplexity <= n - 1:
            raise ConfigError(f"perplexity={self.perplexity} 对 {n} 个点不可行（需要 1 < perplexity <= n - 1）")
        if self.perplexity >= n / 3.0:
            logger.warning("perplexity is large for sample size", perplexity=self.perplexity, n=n)

    def _resolve_learning_rate(self, n: int) -> float:
        """"auto" 取 max(n / 放大倍数 / 4, 50)"""
        if self.learning_rate == "auto":
            lr = max(n / self.early_exaggeration / 4.0, 50.0)
        elif isinstance(self.learning_rate, str) or self.learning_rate <= 0:
            raise ConfigError(f"learning_rate 必须是正数或 \"auto\"，实际 {self.learning_rate!r}")
        else:
            lr = float(self.learning_rate)
        self.learning_rate_ = lr
        return lr

    def fit_transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ConfigError(f"t-SNE 输入必须是二维矩阵，实际 {X.shape}")
        n = X.shape[0]
        self._validate(n)
        lr = self._resolve_learning_rate(n)

        rng = np.random.Generator(np.random.PCG64(self.random_state))
        P = joint_probabilities(X, self.perplexity)
        self.P_ = P
        P_opt = np.maximum(P, P_FLOOR)

        Y = 1e-4 * rng.standard_normal((n, self.n_components))
        update = np.zeros_like(Y)
        gains = np.ones_like(Y)
        Q, _ = student_t_affinities(Y)
        self.kl_history_ = [(0, kl_divergence(P, Q))]

        for it in range(self.n_iter):
            exaggeration = self.early_exaggeration if it < self.exaggeration_iters else 1.0
            momentum = 0.5 if it < self.momentum_switch else 0.8
            Q, num = student_t_affinities(Y)
            W = (exaggeration * P_opt - np.maximum(Q, P_FLOOR)) * num
            grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)

            flipped = update * grad < 0.0
            gains = np.where(flipped, gains + 0.2, gains * 0.8)
            np.maximum(gains, 0.01, out=gains)
            update = momentum * update - lr * gains * grad
            Y = Y + update
            Y = Y - Y.mean(axis=0)

            if (it + 1) % KL_EVERY == 0:
                Q, _ = student_t_affinities(Y)
                self.kl_history_.append((it + 1, kl_divergence(P, Q)))

        self.Q_, _ = student_t_affinities(Y)
        if self.kl_history_[-1][0] != self.n_iter:
            self.kl_history_.append((self.n_iter, kl_divergence(P, self.Q_)))
        self.embedding_ = Y
        logger.debug("t-SNE finished", n=n, kl_initial=self.kl_history_[0][1], kl_final=self.kl_history_[-1][1])
        return Y


def tsne_project(Z: np.ndarray, perplexity: float = 30.0, iters: int = 1000, seed: int = 0) -> np.ndarray:
    return TSNEProjector(perplexity=perplexity, n_iter=iters, random_state=seed).fit_transform(Z)


def stratified_subsample(n_max: int, labels: np.ndarray, seed: int = 0) -> np.ndarray:
    """最多取 n_max 个下标，按标签比例分层抽样，结果升序"""
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n <= n_max:
        return np.arange(n)
    rng = np.random.Generator(np.random.PCG64(seed))
    positive = np.flatnonzero(labels == 1)
    negative = np.flatnonzero(labels != 1)
    k_pos = int(round(n_max * positive.size / n))
    k_pos = min(positive.size, max(min(1, positive.size), k_pos))
    k_neg = min(negative.size, n_max - k_pos)
    chosen = np.concatenate([
        rng.choice(positive, size=k_pos, replace=False),
        rng.choice(negative, size=k_neg, replace=False),
    ])
    return np.sort(chosen)
