"""
反向模式自动微分: 稠密 float64 张量 + 动态磁带（define-by-run）

只有在某个 Tape 处于激活状态、且至少一个输入 requires_grad 时，原语才会被记录。
激活的磁带保存在 ContextVar 中，因此每个线程 / 协程各自独立。
"""

from contextvars import ContextVar
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..utils.exceptions import DimensionError


class Tensor:
    """带梯度槽的稠密张量"""

    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.is_leaf = True

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self, requires_grad: bool = False) -> "Tensor":
        return Tensor(self.data, requires_grad=requires_grad, name=self.name)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_mul(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        label = f"name='{self.name}', " if self.name else ""
        return f"Tensor({label}shape={self.shape}, requires_grad={self.requires_grad})"


class Node(NamedTuple):
    primitive: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """按执行顺序记录的操作列表（天然满足拓扑序）"""

    def __init__(self):
        self.nodes: List[Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)


_ACTIVE_TAPE: ContextVar[Optional[Tape]] = ContextVar("costate_active_tape", default=None)


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE.get()


def _emit(primitive: str, data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    tape = _ACTIVE_TAPE.get()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        out.is_leaf = False
        tape.nodes.append(Node(primitive, tuple(inputs), out, backward))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """
    把 ∂loss/∂leaf 累加进每个 requires_grad 叶子张量的 grad。
    多次调用会继续累加。
    """
    if loss.data.size != 1:
        raise DimensionError("backward", f"loss 必须是标量，实际形状 {loss.shape}")
    if loss.is_leaf or not any(node.output is loss for node in tape.nodes):
        raise ValueError("loss 不是在这条磁带上产生的")

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        for tensor, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not tensor.requires_grad:
                continue
            if tensor.is_leaf:
                tensor.grad = gi.copy() if tensor.grad is None else tensor.grad + gi
            else:
                key = id(tensor)
                grads[key] = grads[key] + gi if key in grads else gi


# --- 原语 ---

def _same_shape(primitive: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(primitive, f"形状不一致 {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    return _emit("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scalar_mul(a: Tensor, c: float) -> Tensor:
    return _emit("scalar_mul", a.data * c, (a,), lambda g: (g * c,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[..., k] + b[k]"""
    if b.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError("add_bias", f"偏置形状 {b.shape} 与输入 {x.shape} 不匹配")
    axes = tuple(range(x.ndim - 1))
    return _emit("add_bias", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=axes)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., n, k) @ (k, m)"""
    if a.ndim < 2 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError("matmul", f"无法相乘 {a.shape} @ {b.shape}")

    def _backward(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _emit("matmul", a.data @ b.data, (a, b), _backward)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise DimensionError("transpose", f"只支持二维张量，实际 {a.shape}")
    return _emit("transpose", a.data.T, (a,), lambda g: (g.T,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _emit("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return _emit("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _emit("exp", y, (a,), lambda g: (g * y,))


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise DimensionError("concat_rows", "至少需要一个张量")
    tail = parts[0].shape[1:]
    for p in parts:
        if p.ndim < 1 or p.shape[1:] != tail:
            raise DimensionError("concat_rows", f"列形状不一致 {p.shape} vs (*, {tail})")
    bounds = np.cumsum([p.shape[0] for p in parts])[:-1]
    return _emit(
        "concat_rows",
        np.concatenate([p.data for p in parts], axis=0),
        tuple(parts),
        lambda g: tuple(np.split(g, bounds, axis=0)),
    )


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    n = a.shape[0]
    if not 0 <= start < stop <= n:
        raise DimensionError("slice_rows", f"行区间 [{start}, {stop}) 超出 {n}")

    def _backward(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _emit("slice_rows", a.data[start:stop], (a,), _backward)


def row_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def _backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _emit("row_softmax", s, (a,), _backward)


def row_l2_normalize(a: Tensor, eps: float = 1e-12) -> Tensor:
    """每行除以 max(‖row‖, eps)"""
    norms = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    clipped = norms > eps
    denom = np.where(clipped, norms, eps)
    y = a.data / denom

    def _backward(g):
        radial = np.where(clipped, y * (g * y).sum(axis=-1, keepdims=True), 0.0)
        return ((g - radial) / denom,)

    return _emit("row_l2_normalize", y, (a,), _backward)


def frobenius_sq_norm(a: Tensor) -> Tensor:
    return _emit("frobenius_sq_norm", np.array((a.data * a.data).sum()), (a,), lambda g: (2.0 * g * a.data,))


def sum_all(a: Tensor) -> Tensor:
    return _emit("sum_all", np.array(a.data.sum()), (a,), lambda g: (np.full_like(a.data, g),))


def mean_sq_error(a: Tensor, b: Tensor) -> Tensor:
    """mean((a - b)^2)，对所有元素取平均"""
    _same_shape("mean_sq_error", a, b)
    diff = a.data - b.data
    scale = 2.0 / diff.size
    return _emit("mean_sq_error", np.array((diff * diff).mean()), (a, b), lambda g: (g * scale * diff, -g * scale * diff))


def pad_stack(parts: Sequence[Tensor]) -> Tensor:
    """把若干 (n_b, d) 序列在末尾补零后堆成 (B, T, d)"""
    if not parts:
        raise DimensionError("pad_stack", "至少需要一个序列")
    width = parts[0].shape[1:]
    for p in parts:
        if p.ndim != 2 or p.shape[1:] != width:
            raise DimensionError("pad_stack", f"序列形状不一致 {p.shape}")
    lengths = [p.shape[0] for p in parts]
    out = np.zeros((len(parts), max(lengths)) + width)
    for k, p in enumerate(parts):
        out[k, : lengths[k]] = p.data
    return _emit(
        "pad_stack",
        out,
        tuple(parts),
        lambda g: tuple(g[k, : lengths[k]] for k in range(len(parts))),
    )


def take_rows(a: Tensor, batch: int, length: int) -> Tensor:
    """(B, T, d) -> 第 batch 条序列的前 length 行"""
    if a.ndim != 3 or not 0 <= batch < a.shape[0] or not 0 < length <= a.shape[1]:
        raise DimensionError("take_rows", f"无法从 {a.shape} 取出 ({batch}, :{length})")

    def _backward(g):
        full = np.zeros_like(a.data)
        full[batch, :length] = g
        return (full,)

    return _emit("take_rows", a.data[batch, :length], (a,), _backward)


GATES = ("i", "f", "o", "g")


def lstm_sequence(
    x: Tensor,
    weights: Sequence[Tensor],
    biases: Sequence[Tensor],
    tbptt_window: Optional[int] = None,
) -> Tensor:
    """
    整段 LSTM 递推（h_0 = c_0 = 0），作为单个磁带节点记录，反向为 BPTT。

    x: (T, D) 或 (B, T, D)；weights: W_i, W_f, W_o, W_g 各为 (H, D+H)；biases: 各为 (H,)。
    批内序列按末尾补零对齐，因果递推保证有效前缀的输出与单独计算一致。
    tbptt_window 非空时，每隔该步数截断跨窗口的梯度。
    """
    squeeze = x.ndim == 2
    xs = x.data[None] if squeeze else x.data
    if xs.ndim != 3:
        raise DimensionError("lstm_sequence", f"输入必须是 (T, D) 或 (B, T, D)，实际 {x.shape}")
    if len(weights) != 4 or len(biases) != 4:
        raise DimensionError("lstm_sequence", "需要四个门的权重与偏置")
    batch, steps, d_in = xs.shape
    hidden = weights[0].shape[0]
    for w, b in zip(weights, biases):
        if w.shape != (hidden, d_in + hidden) or b.shape != (hidden,):
            raise DimensionError(
                "lstm_sequence",
                f"权重 {w.shape} / 偏置 {b.shape} 与 D={d_in}, H={hidden} 不一致",
            )

    W = np.concatenate([w.data for w in weights], axis=0)
    bias = np.concatenate([b.data for b in biases])

    hx = np.zeros((steps, batch, d_in + hidden))
    gates = np.zeros((steps, batch, 4 * hidden))
    cells = np.zeros((steps, batch, hidden))
    tanh_c = np.zeros((steps, batch, hidden))
    out = np.zeros((batch, steps, hidden))

    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    for t in range(steps):
        hx[t, :, :d_in] = xs[:, t]
        hx[t, :, d_in:] = h
        a = hx[t] @ W.T + bias
        act = gates[t]
        act[:, : 3 * hidden] = _sigmoid(a[:, : 3 * hidden])
        act[:, 3 * hidden:] = np.tanh(a[:, 3 * hidden:])
        i, f, o, g = np.split(act, 4, axis=1)
        c = f * c + i * g
        cells[t] = c
        tanh_c[t] = np.tanh(c)
        h = o * tanh_c[t]
        out[:, t] = h

    def _backward(g_out):
        g_out = g_out[None] if squeeze else g_out
        dW = np.zeros_like(W)
        db = np.zeros_like(bias)
        dx = np.zeros_like(xs)
        dh_next = np.zeros((batch, hidden))
        dc_next = np.zeros((batch, hidden))
        for t in reversed(range(steps)):
            if tbptt_window and (t + 1) % tbptt_window == 0:
                dh_next[:] = 0.0
                dc_next[:] = 0.0
            i, f, o, gg = np.split(gates[t], 4, axis=1)
            c_prev = cells[t - 1] if t > 0 else np.zeros((batch, hidden))
            dh = g_out[:, t] + dh_next
            dc = dh * o * (1.0 - tanh_c[t] ** 2) + dc_next
            da = np.concatenate(
                [
                    dc * gg * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dh * tanh_c[t] * o * (1.0 - o),
                    dc * i * (1.0 - gg * gg),
                ],
                axis=1,
            )
            dW += da.T @ hx[t]
            db += da.sum(axis=0)
            dhx = da @ W
            dx[:, t] = dhx[:, :d_in]
            dh_next = dhx[:, d_in:]
            dc_next = dc * f
        dx_out = dx[0] if squeeze else dx
        return (dx_out,) + tuple(np.split(dW, 4, axis=0)) + tuple(np.split(db, 4))

    data = out[0] if squeeze else out
    return _emit("lstm_sequence", data, (x,) + tuple(weights) + tuple(biases), _backward)


__all__ = [
    "Tensor", "Tape", "Node", "active_tape", "backward",
    "add", "sub", "mul", "scalar_mul", "add_bias", "matmul", "transpose",
    "tanh", "sigmoid", "exp", "concat_rows", "slice_rows",
    "row_softmax", "row_l2_normalize", "frobenius_sq_norm", "sum_all", "mean_sq_error",
    "pad_stack", "take_rows", "lstm_sequence", "GATES",
]
