"""
基于 LSTM 的变分自编码器基线

编码器 LSTM 在每个时间点给出 (μ_t, logσ²_t)，z_t = μ_t + σ_t ⊙ ε_t，
解码器 LSTM 以 z 序列为输入重建窗口。损失 = 重建 MSE + β·KL(N(μ, σ²) ‖ N(0, I))，
KL 在隐维度上求和、在时间点上取平均。
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..autodiff import (
    Adam,
    Tape,
    Tensor,
    add,
    add_bias,
    backward,
    exp,
    lstm_sequence,
    load_tensors,
    matmul,
    mean_sq_error,
    mul,
    save_tensors,
    scalar_mul,
    sub,
    sum_all,
    transpose,
)
from ..autodiff.tensor import GATES
from ..config import VaeConfig, validate_config
from ..data.records import PatientRecord
from ..utils.exceptions import DataError, DimensionError, TrainingError
from ..utils.logger import get_logger
from .encoder import EmbeddingSequence

logger = get_logger("vae")

CHECKPOINT_KIND = "vae"


class VaeParams:
    def __init__(self, input_size: int, latent_size: int, cfg: VaeConfig, tensors: Dict[str, Tensor]):
        self.input_size = input_size
        self.latent_size = latent_size
        self.cfg = cfg
        self.tensors = tensors
        for name, shape in self.expected_shapes(input_size, latent_size, cfg).items():
            if name not in tensors or tensors[name].shape != shape:
                found = tensors[name].shape if name in tensors else None
                raise DimensionError("VaeParams", f"{name} 形状 {found}，期望 {shape}")

    @staticmethod
    def expected_shapes(input_size: int, latent_size: int, cfg: VaeConfig) -> Dict[str, Tuple[int, ...]]:
        h = cfg.hidden_size
        shapes: Dict[str, Tuple[int, ...]] = {}
        for prefix, width in (("enc", input_size), ("dec", latent_size)):
            for gate in GATES:
                shapes[f"{prefix}_W_{gate}"] = (h, width + h)
                shapes[f"{prefix}_b_{gate}"] = (h,)
        shapes.update({
            "W_mu": (latent_size, h),
            "b_mu": (latent_size,),
            "W_logvar": (latent_size, h),
            "b_logvar": (latent_size,),
            "W_out": (input_size, h),
            "b_out": (input_size,),
        })
        return shapes

    @classmethod
    def initialize(cls, input_size: int, latent_size: int, cfg: Optional[VaeConfig] = None, seed: int = 0) -> "VaeParams":
        cfg = validate_config(VaeConfig, cfg or {})
        rng = np.random.Generator(np.random.PCG64(seed))
        bound = 1.0 / np.sqrt(cfg.hidden_size)
        tensors = {}
        for name, shape in cls.expected_shapes(input_size, latent_size, cfg).items():
            if "_b_" in name or name.startswith("b_"):
                data = np.full(shape, 1.0 if name.endswith("_b_f") else 0.0)
            else:
                data = rng.uniform(-bound, bound, size=shape)
            tensors[name] = Tensor(data, requires_grad=True, name=name)
        return cls(input_size, latent_size, cfg, tensors)

    def lstm(self, prefix: str) -> Tuple[List[Tensor], List[Tensor]]:
        return (
            [self.tensors[f"{prefix}_W_{gate}"] for gate in GATES],
            [self.tensors[f"{prefix}_b_{gate}"] for gate in GATES],
        )

    def parameters(self) -> List[Tensor]:
        return [self.tensors[name] for name in sorted(self.tensors)]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.tensors.items()}

    def save(self, path: Union[str, Path]) -> str:
        meta = {"input_size": self.input_size, "latent_size": self.latent_size, "vae": self.cfg.model_dump()}
        return save_tensors(path, self.state_dict(), kind=CHECKPOINT_KIND, meta=meta)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "VaeParams":
        _, meta = load_tensors(path, kind=CHECKPOINT_KIND)
        cfg = validate_config(VaeConfig, meta["vae"])
        input_size, latent_size = int(meta["input_size"]), int(meta["latent_size"])
        arrays, _ = load_tensors(
            path, kind=CHECKPOINT_KIND, expected_shapes=cls.expected_shapes(input_size, latent_size, cfg)
        )
        tensors = {name: Tensor(value, requires_grad=True, name=name) for name, value in arrays.items()}
        return cls(input_size, latent_size, cfg, tensors)


@dataclass
class VaeOutput:
    loss: Tensor
    recon: Tensor
    mu: Tensor
    logvar: Tensor
    kl: Tensor


def _linear(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    return add_bias(matmul(x, transpose(W)), b)


def kl_divergence(mu: Tensor, logvar: Tensor) -> Tensor:
    """−½ Σ_L (1 + logσ² − μ² − σ²)，再对所有时间点取平均"""
    if mu.shape != logvar.shape or mu.ndim < 1:
        raise DimensionError("kl_divergence", f"μ {mu.shape} 与 logσ² {logvar.shape} 形状不一致")
    rows = int(np.prod(mu.shape[:-1], dtype=np.int64))
    inner = sub(sub(sum_all(logvar), sum_all(mul(mu, mu))), sum_all(exp(logvar)))
    inner = add(inner, Tensor(np.array(float(mu.data.size))))
    return scalar_mul(inner, -0.5 / rows)


def encode_heads(x: Tensor, params: VaeParams) -> Tuple[Tensor, Tensor]:
    weights, biases = params.lstm("enc")
    hidden = lstm_sequence(x, weights, biases)
    t = params.tensors
    return _linear(hidden, t["W_mu"], t["b_mu"]), _linear(hidden, t["W_logvar"], t["b_logvar"])


def vae_elbo(
    window: Union[np.ndarray, Tensor],
    params: VaeParams,
    noise: Union[np.ndarray, np.random.Generator, int],
) -> VaeOutput:
    """
    window: (W, D) 或批量 (B, W, D)；noise 可以直接给出 ε，也可以是种子 / 随机数发生器
    """
    x = window if isinstance(window, Tensor) else Tensor(window)
    if x.ndim not in (2, 3) or x.shape[-1] != params.input_size:
        raise DimensionError("vae_elbo", f"窗口形状 {x.shape} 与输入维度 D={params.input_size} 不匹配")
    mu, logvar = encode_heads(x, params)
    if isinstance(noise, np.ndarray):
        eps = np.asarray(noise, dtype=np.float64)
    else:
        rng = noise if isinstance(noise, np.random.Generator) else np.random.Generator(np.random.PCG64(noise))
        eps = rng.standard_normal(mu.shape)
    if eps.shape != mu.shape:
        raise DimensionError("vae_elbo", f"噪声形状 {eps.shape} 与 μ 形状 {mu.shape} 不一致")

    z = add(mu, mul(exp(scalar_mul(logvar, 0.5)), Tensor(eps)))
    weights, biases = params.lstm("dec")
    decoded = lstm_sequence(z, weights, biases)
    recon = _linear(decoded, params.tensors["W_out"], params.tensors["b_out"])
    kl = kl_divergence(mu, logvar)
    loss = add(mean_sq_error(recon, x), scalar_mul(kl, params.cfg.beta))
    return VaeOutput(loss=loss, recon=recon, mu=mu, logvar=logvar, kl=kl)


def extract_windows(records: Sequence[PatientRecord], window_length: int) -> np.ndarray:
    """每个病人切成互不重叠的定长窗口，余数丢弃；过短的病人跳过"""
    windows = []
    for r in records:
        count = r.N // window_length
        if count == 0:
            logger.warning("patient shorter than window", patient_id=r.patient_id, length=r.N, window=window_length)
            continue
        windows.append(r.X[: count * window_length].reshape(count, window_length, r.D))
    if not windows:
        raise DataError(f"没有长度 >= {window_length} 的训练病人，无法提取窗口")
    return np.concatenate(windows, axis=0)


def vae_train(
    records: Sequence[PatientRecord],
    cfg: Optional[VaeConfig] = None,
    latent_size: int = 32,
    seed: int = 0,
) -> Tuple[VaeParams, List[float]]:
    """在全部训练窗口上用 Adam 最小化平均 ELBO 损失；同一种子结果逐位相同"""
    cfg = validate_config(VaeConfig, cfg or {})
    windows = extract_windows(records, cfg.window_length)
    init_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    params = VaeParams.initialize(windows.shape[2], latent_size, cfg, seed=int(init_seq.generate_state(1)[0]))
    rng = np.random.Generator(np.random.PCG64(noise_seq))
    optimizer = Adam(params.parameters(), lr=cfg.lr)

    logger.info("vae training started", n_windows=windows.shape[0], epochs=cfg.epochs, latent_size=latent_size)
    history: List[float] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(windows.shape[0])
        total = 0.0
        for start in range(0, order.shape[0], cfg.batch_size):
            batch = windows[order[start:start + cfg.batch_size]]
            optimizer.zero_grad()
            with Tape() as tape:
                out = vae_elbo(batch, params, rng)
            backward(tape, out.loss)
            optimizer.step()
            value = out.loss.item()
            if not np.isfinite(value):
                raise TrainingError(f"VAE 第 {epoch} 轮损失不是有限值")
            total += value * batch.shape[0]
        history.append(total / windows.shape[0])
        logger.info("vae epoch finished", epoch=epoch, mean_loss=round(history[-1], 6))
    optimizer.zero_grad()
    return params, history


def vae_embed(X: np.ndarray, params: VaeParams, patient_id: str = "") -> EmbeddingSequence:
    """按窗口独立编码（每个窗口 h_0 = 0），按顺序拼接 μ；最后不足一个窗口的部分照常编码"""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_size:
        raise DimensionError("vae_embed", f"输入形状 {X.shape} 与输入维度 D={params.input_size} 不匹配")
    width = params.cfg.window_length
    full = X.shape[0] // width
    frozen = VaeParams(
        params.input_size,
        params.latent_size,
        params.cfg,
        {name: Tensor(t.data, name=name) for name, t in params.tensors.items()},
    )
    parts = []
    if full:
        mu, _ = encode_heads(Tensor(X[: full * width].reshape(full, width, X.shape[1])), frozen)
        parts.append(mu.data.reshape(full * width, -1))
    if X.shape[0] > full * width:
        mu, _ = encode_heads(Tensor(X[full * width:]), frozen)
        parts.append(mu.data)
    return EmbeddingSequence(Z=np.concatenate(parts, axis=0), patient_id=patient_id)
