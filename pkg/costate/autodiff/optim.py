from typing import Dict, Iterable, List, Optional

import numpy as np

from .tensor import Tensor


def zero_grads(params: Iterable[Tensor]) -> None:
    """清空所有梯度槽"""
    for p in params:
        p.zero_grad()


def scale_grads(params: Iterable[Tensor], factor: float) -> None:
    for p in params:
        if p.grad is not None:
            p.grad = p.grad * factor


class Adam:
    """
    Adam 优化器，原地更新参数。

    grad 为空的参数视为零梯度: 一阶/二阶矩照常衰减，不会产生位移。
    """

    def __init__(
        self,
        params: Iterable[Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params: List[Tensor] = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: Dict[int, np.ndarray] = {id(p): np.zeros_like(p.data) for p in self.params}
        self._v: Dict[int, np.ndarray] = {id(p): np.zeros_like(p.data) for p in self.params}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self._m[id(p)]
            v = self._v[id(p)]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / correction1
            v_hat = v / correction2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        zero_grads(self.params)


def sgd_adam_step(
    optimizer: Adam,
    lr: Optional[float] = None,
    beta1: Optional[float] = None,
    beta2: Optional[float] = None,
    eps: Optional[float] = None,
) -> None:
    """函数式入口: 可选覆盖超参后执行一次 Adam 更新"""
    if lr is not None:
        optimizer.lr = lr
    if beta1 is not None:
        optimizer.beta1 = beta1
    if beta2 is not None:
        optimizer.beta2 = beta2
    if eps is not None:
        optimizer.eps = eps
    optimizer.step()
