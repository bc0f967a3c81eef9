import numpy as np
import pytest

from costate.config import EncoderConfig
from costate.data import PatientRecord, RawRecording


def make_record(patient_id: str, n: int, d: int = 3, seed: int = 0, ih_every: int = 0) -> PatientRecord:
    """随机特征；ih_every > 0 时每隔 ih_every 行切换一次标签"""
    rng = np.random.Generator(np.random.PCG64(seed))
    X = rng.normal(size=(n, d))
    if ih_every:
        y = np.where((np.arange(n) // ih_every) % 2 == 1, 1, -1)
    else:
        y = np.where(rng.random(n) < 0.3, 1, -1)
    return PatientRecord(patient_id=patient_id, X=X, y=y)


def separable_record(patient_id: str, n: int, seed: int) -> PatientRecord:
    """IH 段与非 IH 段有截然不同的通道特征"""
    rng = np.random.Generator(np.random.PCG64(seed))
    y = np.where((np.arange(n) // 10) % 2 == 1, 1, -1)
    X = np.column_stack([
        np.where(y == 1, 2.0, -2.0) + 0.05 * rng.normal(size=n),
        np.where(y == 1, -1.5, 1.5) + 0.05 * rng.normal(size=n),
    ])
    return PatientRecord(patient_id=patient_id, X=X, y=y)


def make_raw(patient_id: str, icp, artifact=None, age: float = 6.0) -> RawRecording:
    icp = np.asarray(icp, dtype=np.float64)
    n = icp.shape[0]
    base = np.linspace(0.0, 1.0, n)
    return RawRecording(
        patient_id=patient_id,
        channels={
            "ICPm": icp,
            "BPm": 70.0 + base,
            "BPs": 95.0 + 2.0 * base,
            "BPd": 55.0 - base,
            "HRT": 110.0 + 3.0 * np.sin(np.arange(n)),
        },
        age=age,
        artifact_mask=np.zeros(n, dtype=bool) if artifact is None else np.asarray(artifact, dtype=bool),
    )


@pytest.fixture
def tiny_encoder_cfg() -> EncoderConfig:
    return EncoderConfig(hidden_size=4, latent_size=3, use_self_attention=True, use_cross_attention=False)


@pytest.fixture
def small_cohort():
    return [make_record(f"P{k:03d}", n=12 + 3 * k, d=3, seed=k, ih_every=4) for k in range(4)]


def numeric_grad(f, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """中心差分；f 读取 array 的当前值并返回标量"""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        saved = array[idx]
        array[idx] = saved + h
        up = f()
        array[idx] = saved - h
        down = f()
        array[idx] = saved
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    denom = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / denom)
