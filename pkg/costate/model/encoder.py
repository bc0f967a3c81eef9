"""
LSTM 嵌入模型

流水线: [跨通道注意力（作用于输入通道）] -> LSTM -> 投影到 L 维 -> [自注意力（作用于隐状态序列）]
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..autodiff import (
    Tensor,
    concat_rows,
    lstm_sequence,
    matmul,
    pad_stack,
    row_softmax,
    scalar_mul,
    slice_rows,
    take_rows,
    transpose,
    save_tensors,
    load_tensors,
)
from ..autodiff.tensor import GATES
from ..config import EncoderConfig, validate_config
from ..utils.exceptions import DataError, DimensionError

CHECKPOINT_KIND = "encoder"


class ModelParams:
    """编码器的全部权重 θ（每个都是带梯度槽的叶子张量）"""

    def __init__(self, input_size: int, cfg: EncoderConfig, tensors: Dict[str, Tensor]):
        self.input_size = input_size
        self.cfg = cfg
        self.tensors = tensors
        expected = self.expected_shapes(input_size, cfg)
        if set(expected) != set(tensors):
            raise DimensionError("ModelParams", f"参数名 {sorted(tensors)} 与期望 {sorted(expected)} 不一致")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise DimensionError("ModelParams", f"{name} 形状 {tensors[name].shape}，期望 {shape}")

    @staticmethod
    def expected_shapes(input_size: int, cfg: EncoderConfig) -> Dict[str, Tuple[int, ...]]:
        h = cfg.hidden_size
        shapes = {}
        for gate in GATES:
            shapes[f"W_{gate}"] = (h, input_size + h)
            shapes[f"b_{gate}"] = (h,)
        if cfg.latent_size != cfg.hidden_size:
            shapes["P"] = (cfg.latent_size, h)
        return shapes

    @classmethod
    def initialize(cls, input_size: int, cfg: Optional[EncoderConfig] = None, seed: int = 0) -> "ModelParams":
        """权重 ~ U(-1/√H, 1/√H)，偏置为 0，遗忘门偏置为 +1"""
        cfg = validate_config(EncoderConfig, cfg or {})
        rng = np.random.Generator(np.random.PCG64(seed))
        bound = 1.0 / np.sqrt(cfg.hidden_size)
        tensors = {}
        for name, shape in cls.expected_shapes(input_size, cfg).items():
            if name.startswith("b_"):
                data = np.full(shape, 1.0 if name == "b_f" else 0.0)
            else:
                data = rng.uniform(-bound, bound, size=shape)
            tensors[name] = Tensor(data, requires_grad=True, name=name)
        return cls(input_size, cfg, tensors)

    @property
    def hidden_size(self) -> int:
        return self.cfg.hidden_size

    @property
    def latent_size(self) -> int:
        return self.cfg.latent_size

    def parameters(self) -> List[Tensor]:
        return [self.tensors[name] for name in sorted(self.tensors)]

    @property
    def weights(self) -> List[Tensor]:
        return [self.tensors[f"W_{gate}"] for gate in GATES]

    @property
    def biases(self) -> List[Tensor]:
        return [self.tensors[f"b_{gate}"] for gate in GATES]

    @property
    def projection(self) -> Optional[Tensor]:
        return self.tensors.get("P")

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.tensors.items()}

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.input_size,
            self.cfg,
            {name: Tensor(t.data.copy(), requires_grad=True, name=name) for name, t in self.tensors.items()},
        )

    def meta(self) -> dict:
        return {"input_size": self.input_size, "encoder": self.cfg.model_dump()}

    def save(self, path: Union[str, Path]) -> str:
        return save_tensors(path, self.state_dict(), kind=CHECKPOINT_KIND, meta=self.meta())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelParams":
        _, meta = load_tensors(path, kind=CHECKPOINT_KIND)
        cfg = validate_config(EncoderConfig, meta["encoder"])
        input_size = int(meta["input_size"])
        arrays, _ = load_tensors(path, kind=CHECKPOINT_KIND, expected_shapes=cls.expected_shapes(input_size, cfg))
        return cls(
            input_size,
            cfg,
            {name: Tensor(value, requires_grad=True, name=name) for name, value in arrays.items()},
        )


@dataclass(eq=False)
class EmbeddingSequence:
    Z: np.ndarray
    patient_id: str = ""

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=np.float64)
        if self.Z.ndim != 2:
            raise DimensionError("EmbeddingSequence", f"Z 必须是 N×L 矩阵，实际 {self.Z.shape}")
        if not np.isfinite(self.Z).all():
            raise DataError(f"{self.patient_id}: 嵌入含有非有限值")

    @property
    def N(self) -> int:
        return int(self.Z.shape[0])


def _as_input(X) -> Tensor:
    return X if isinstance(X, Tensor) else Tensor(X)


def _check_input(X: Tensor, params: ModelParams) -> None:
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] != params.input_size:
        raise DimensionError(
            "encoder", f"输入形状 {X.shape} 与模型输入维度 D={params.input_size} 不匹配"
        )


def lstm_forward(X, params: ModelParams, tbptt_window: Optional[int] = None) -> Tensor:
    """X (N×D) -> 全部隐状态 (N×H)，h_0 = c_0 = 0"""
    X = _as_input(X)
    _check_input(X, params)
    return lstm_sequence(X, params.weights, params.biases, tbptt_window)


def self_attention(Z: Tensor, residual: bool = False) -> Tensor:
    """z'_i = Σ_j softmax_j(z_i·z_j / √L) z_j"""
    Z = _as_input(Z)
    if Z.ndim != 2 or Z.shape[1] < 1:
        raise DimensionError("self_attention", f"输入必须是 N×L 且 L >= 1，实际 {Z.shape}")
    scores = scalar_mul(matmul(Z, transpose(Z)), 1.0 / np.sqrt(Z.shape[1]))
    out = matmul(row_softmax(scores), Z)
    return out + Z if residual else out


def _channel_attention(X: Tensor, k: float) -> Tensor:
    scores = scalar_mul(matmul(transpose(X), X), 1.0 / np.sqrt(k))
    return matmul(X, transpose(row_softmax(scores)))


def cross_channel_attention(X, k: float = 60.0, windowed: bool = False) -> Tensor:
    """
    把每个通道当作列向量 c ∈ R^N：c'_i = Σ_j softmax_j(c_i·c_j / √K) c_j。
    windowed=True 时在连续的 K 行窗口内各自计算（最后一个不足窗口照常计算）。
    """
    X = _as_input(X)
    if X.ndim != 2 or X.shape[1] < 1:
        raise DimensionError("cross_channel_attention", f"输入必须是 N×D 且 D >= 1，实际 {X.shape}")
    if not windowed:
        return _channel_attention(X, k)
    width = max(1, int(k))
    n = X.shape[0]
    return concat_rows([
        _channel_attention(slice_rows(X, start, min(n, start + width)), k)
        for start in range(0, n, width)
    ])


def project(hidden: Tensor, params: ModelParams) -> Tensor:
    P = params.projection
    return hidden if P is None else matmul(hidden, transpose(P))


def _post_lstm(hidden: Tensor, params: ModelParams) -> Tensor:
    Z = project(hidden, params)
    if params.cfg.use_self_attention:
        Z = self_attention(Z, residual=params.cfg.self_attention_residual)
    return Z


def _pre_lstm(X: Tensor, params: ModelParams) -> Tensor:
    if params.cfg.use_cross_attention:
        return cross_channel_attention(X, params.cfg.ca_scale_k, params.cfg.ca_windowed)
    return X


def encode_tensor(X, params: ModelParams, tbptt_window: Optional[int] = None) -> Tensor:
    """单个病人的完整编码，返回可求导的 Z 张量"""
    X = _as_input(X)
    _check_input(X, params)
    hidden = lstm_sequence(_pre_lstm(X, params), params.weights, params.biases, tbptt_window)
    return _post_lstm(hidden, params)


def encode_many(
    inputs: Sequence, params: ModelParams, tbptt_window: Optional[int] = None
) -> List[Tensor]:
    """
    同一组参数下批量编码多个病人: 各序列末尾补零后一次跑完 LSTM，再按有效长度取回
    """
    xs = [_as_input(X) for X in inputs]
    for X in xs:
        _check_input(X, params)
    if len(xs) == 1:
        return [encode_tensor(xs[0], params, tbptt_window)]
    batch = pad_stack([_pre_lstm(X, params) for X in xs])
    hidden = lstm_sequence(batch, params.weights, params.biases, tbptt_window)
    return [_post_lstm(take_rows(hidden, b, X.shape[0]), params) for b, X in enumerate(xs)]


def encode(X, params: ModelParams, patient_id: str = "") -> EmbeddingSequence:
    """推理用编码: 不记录磁带，返回 numpy 嵌入"""
    frozen = Tensor(_as_input(X).data)
    return EmbeddingSequence(Z=encode_tensor(frozen, _frozen(params)).data, patient_id=patient_id)


def _frozen(params: ModelParams) -> ModelParams:
    return ModelParams(
        params.input_size,
        params.cfg,
        {name: Tensor(t.data, name=name) for name, t in params.tensors.items()},
    )


def embed_records(records: Sequence, params: ModelParams) -> List[EmbeddingSequence]:
    """批量推理编码（不求导）"""
    frozen = _frozen(params)
    outputs = encode_many([Tensor(r.X) for r in records], frozen)
    return [EmbeddingSequence(Z=z.data, patient_id=r.patient_id) for z, r in zip(outputs, records)]
