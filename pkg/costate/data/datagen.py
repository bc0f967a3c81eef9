"""
合成的儿科 ICU 生命体征队列

基线: 围绕每个病人设定点的一阶自回归过程；颅内高压（IH）发作: ICPm 在平台期严格高于 15 mmHg
且持续 >= 50 个样本，两端各有 10 个样本的线性斜坡，BP 升高、HRT 下降（耦合强度可调）；
另有短于 48 个样本的孤立 ICP 偏移作为干扰。随机数发生器为 numpy 的 PCG64，
每个病人一个由 SeedSequence.spawn 派生的独立子流。
"""

from typing import Any, List, Mapping, Tuple, Union

import numpy as np

from ..config import GeneratorSpec, validate_config
from ..utils.logger import get_logger
from .records import RawRecording

logger = get_logger("datagen")

ICP_THRESHOLD = 15.0
RAMP = 10
MIN_PLATEAU = 50
MAX_PLATEAU = 240
EPISODE_MARGIN = 5
BASELINE_ICP_CEILING = 14.5
AR_COEF = 0.97


def _ar1(rng: np.random.Generator, n: int, setpoint: float, sigma: float) -> np.ndarray:
    noise = rng.normal(0.0, sigma, size=n)
    out = np.empty(n)
    dev = rng.normal(0.0, sigma / np.sqrt(1.0 - AR_COEF ** 2))
    for t in range(n):
        dev = AR_COEF * dev + noise[t]
        out[t] = setpoint + dev
    return out


def _episode_envelope(plateau: int) -> np.ndarray:
    up = np.arange(1, RAMP + 1) / (RAMP + 1)
    return np.concatenate([up, np.ones(plateau), up[::-1]])


def _place_episodes(
    rng: np.random.Generator, n: int, count: int
) -> List[Tuple[int, int]]:
    """把 count 次发作分别放进 count 个等长区段，返回 (起点, 平台长度)

    记录放不下的部分被截掉: 每个区段至少要容纳最短平台加两端斜坡和间隔。
    """
    placed = []
    capacity = max(0, n // (MIN_PLATEAU + 2 * RAMP + 2 * EPISODE_MARGIN))
    if count > capacity:
        logger.debug("episode count capped", requested=count, capacity=capacity, length=n)
        count = capacity
    if count == 0:
        return placed
    seg = n // count
    for k in range(count):
        room = seg - 2 * EPISODE_MARGIN - 2 * RAMP
        if room < MIN_PLATEAU:
            continue
        plateau = int(rng.integers(MIN_PLATEAU, min(MAX_PLATEAU, room) + 1))
        span = plateau + 2 * RAMP
        lo = k * seg + EPISODE_MARGIN
        hi = (k + 1) * seg - EPISODE_MARGIN - span
        placed.append((int(rng.integers(lo, hi + 1)), plateau))
    return placed


def _generate_patient(patient_id: str, rng: np.random.Generator, spec: GeneratorSpec) -> RawRecording:
    low, high = spec.length_range
    n = int(rng.integers(low, high + 1))
    age = round(float(rng.uniform(0.5, 17.0)), 1)

    hr_sp = rng.uniform(90.0, 130.0)
    bpm_sp = rng.uniform(60.0, 80.0)
    icp_sp = rng.uniform(8.0, 12.0)
    pulse_pressure = rng.uniform(30.0, 45.0)

    icp = np.clip(_ar1(rng, n, icp_sp, 0.25), 1.0, BASELINE_ICP_CEILING)
    bpm = _ar1(rng, n, bpm_sp, 0.8)
    hrt = _ar1(rng, n, hr_sp, 1.2)

    occupied = np.zeros(n, dtype=bool)
    envelope = np.zeros(n)

    n_episodes = int(rng.poisson(spec.episode_rate))
    m_low, m_high = spec.episode_magnitude_range
    for start, plateau in _place_episodes(rng, n, n_episodes):
        env = _episode_envelope(plateau)
        stop = start + env.shape[0]
        magnitude = rng.uniform(m_low, m_high)
        target = ICP_THRESHOLD + magnitude + rng.normal(0.0, 0.6, size=env.shape[0])
        core = slice(start + RAMP, start + RAMP + plateau)
        window = slice(start, stop)
        icp[window] = icp[window] * (1.0 - env) + target * env
        icp[core] = np.maximum(icp[core], ICP_THRESHOLD + 0.5)
        bpm[window] += spec.coupling_strength * env * (10.0 + magnitude)
        hrt[window] -= spec.coupling_strength * env * (8.0 + 0.5 * magnitude)
        envelope[window] = np.maximum(envelope[window], env)
        occupied[max(0, start - EPISODE_MARGIN): min(n, stop + EPISODE_MARGIN)] = True

    # 孤立的短时 ICP 偏移（< 48 样本），不伴随其他通道反应
    for _ in range(int(rng.poisson(1.0))):
        length = int(rng.integers(5, 31))
        start = int(rng.integers(0, max(1, n - length)))
        span = slice(max(0, start - EPISODE_MARGIN), min(n, start + length + EPISODE_MARGIN))
        if occupied[span].any():
            continue
        icp[start:start + length] = ICP_THRESHOLD + rng.uniform(1.0, 4.0) + rng.normal(0.0, 0.3, size=length)
        occupied[span] = True

    bps = bpm + (2.0 / 3.0) * pulse_pressure + rng.normal(0.0, 1.0, size=n)
    bpd = bpm - (1.0 / 3.0) * pulse_pressure + rng.normal(0.0, 1.0, size=n)

    channels = {"ICPm": icp, "BPm": bpm, "BPs": bps, "BPd": bpd, "HRT": hrt}

    artifact = rng.random(n) < spec.artifact_fraction
    in_episode = envelope > 0
    spike = np.where(in_episode, True, rng.random(n) < 0.5) & artifact
    dropout = artifact & ~spike
    for name, values in channels.items():
        values[spike] += rng.uniform(20.0, 60.0, size=int(spike.sum()))
        values[dropout] = rng.uniform(0.0, 3.0, size=int(dropout.sum()))
    # 发作之外的 ICP 伪迹只做向下的掉线，避免拼出伪造的长时高压段
    icp_spike_outside = spike & ~in_episode
    icp[icp_spike_outside] = rng.uniform(0.0, 3.0, size=int(icp_spike_outside.sum()))

    if spec.missing_fraction > 0:
        for name in ("BPm", "BPs", "BPd", "HRT"):
            _punch_gaps(rng, channels[name], spec.missing_fraction)

    return RawRecording(patient_id=patient_id, channels=channels, age=age, artifact_mask=artifact)


def _punch_gaps(rng: np.random.Generator, values: np.ndarray, fraction: float) -> None:
    n = values.shape[0]
    target = int(round(fraction * n))
    while np.isnan(values).sum() < target:
        length = int(rng.integers(10, 61))
        start = int(rng.integers(0, n))
        values[start:start + length] = np.nan


def generate_cohort(spec: Union[GeneratorSpec, Mapping[str, Any]]) -> List[RawRecording]:
    """按 GeneratorSpec 生成队列；同一 spec（含 seed）得到逐位相同的结果"""
    spec = validate_config(GeneratorSpec, spec)
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_patients)
    cohort = [
        _generate_patient(f"P{k:03d}", np.random.Generator(np.random.PCG64(child)), spec)
        for k, child in enumerate(children)
    ]
    logger.info(
        "cohort generated",
        seed=spec.seed,
        n_patients=spec.n_patients,
        total_samples=sum(r.length for r in cohort),
    )
    return cohort
