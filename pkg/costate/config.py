from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Type, TypeVar, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .utils.exceptions import ConfigError


DEFAULT_CHANNELS = ["ICPm", "BPm", "BPs", "BPd", "HRT"]


class Settings(BaseSettings):
    """进程级配置（环境变量 / .env）"""

    log_level: str = Field(default="INFO", validation_alias="LOG_LEVEL")
    log_dir: str = Field(default="logs", validation_alias="LOG_DIR")
    costate_seed: Optional[int] = Field(default=None, validation_alias="COSTATE_SEED")
    costate_jobs: Optional[int] = Field(default=None, validation_alias="COSTATE_JOBS")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",  # 忽略额外的环境变量
    )


def load_settings() -> Settings:
    """加载配置"""
    load_dotenv()
    return Settings()  # type: ignore


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeneratorSpec(_StrictModel):
    """合成队列生成参数"""

    seed: int = Field(default=7, ge=0)
    n_patients: int = Field(default=30, ge=1)
    length_range: Tuple[int, int] = (200, 400)
    episode_rate: float = Field(default=2.0, ge=0.0)
    episode_magnitude_range: Tuple[float, float] = (5.0, 15.0)
    artifact_fraction: float = Field(default=0.02, ge=0.0, le=1.0)
    coupling_strength: float = Field(default=0.6, ge=0.0, le=1.0)
    missing_fraction: float = Field(default=0.0, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "GeneratorSpec":
        low, high = self.length_range
        if low < 96:
            raise ValueError("length_range 下限必须 >= 96（至少两个剂量窗口）")
        if high < low:
            raise ValueError("length_range 上限小于下限")
        m_low, m_high = self.episode_magnitude_range
        if m_low <= 0 or m_high < m_low:
            raise ValueError("episode_magnitude_range 必须满足 0 < min <= max")
        return self


class PreprocessConfig(_StrictModel):
    threshold: float = Field(default=15.0, gt=0.0)
    min_duration: int = Field(default=48, ge=1)
    min_coverage: float = Field(default=0.5, ge=0.0, le=1.0)
    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)
    label_after_filter: bool = True
    age_scale: float = Field(default=18.0, gt=0.0)
    channels: List[str] = Field(default_factory=lambda: list(DEFAULT_CHANNELS))

    @model_validator(mode="after")
    def _check_channels(self) -> "PreprocessConfig":
        # 标签总是在 ICPm 上计算
        if "ICPm" not in self.channels:
            raise ValueError(f"channels 必须包含 ICPm，实际 {self.channels}")
        if len(set(self.channels)) != len(self.channels):
            raise ValueError(f"channels 中有重复项: {self.channels}")
        return self


class EncoderConfig(_StrictModel):
    hidden_size: int = Field(default=16, ge=1)
    latent_size: int = Field(default=16, ge=1)
    use_self_attention: bool = True
    use_cross_attention: bool = False
    ca_scale_k: float = Field(default=60.0, gt=0.0)
    ca_windowed: bool = False
    self_attention_residual: bool = False


class TrainConfig(_StrictModel):
    n_epochs: int = Field(default=8, ge=1)
    lr: float = Field(default=1e-2, gt=0.0)
    seed: int = Field(default=0, ge=0)
    normalize_loss: bool = True
    tbptt_window: Optional[int] = Field(default=None, ge=1)
    subsample_pairs: Optional[int] = Field(default=None, ge=1)
    shuffle_anchors: bool = False
    average_pair_grads: bool = True
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class InferenceConfig(_StrictModel):
    threshold: float = 0.0
    max_references: Optional[int] = Field(default=None, ge=1)


class EvalConfig(_StrictModel):
    n_iterations: int = Field(default=20, ge=1)
    pooled: bool = False
    tsne_perplexity: float = Field(default=30.0, gt=1.0)
    tsne_iters: int = Field(default=1000, ge=1)
    tsne_max_points: int = Field(default=2000, ge=4)
    tsne_iteration: int = Field(default=0, ge=0)


class VaeConfig(_StrictModel):
    window_length: int = Field(default=60, ge=1)
    hidden_size: int = Field(default=32, ge=1)
    beta: float = Field(default=1.0, ge=0.0)
    epochs: int = Field(default=20, ge=1)
    lr: float = Field(default=1e-3, gt=0.0)
    batch_size: int = Field(default=32, ge=1)


class ExperimentConfig(_StrictModel):
    """一次实验的完整配置，所有字段都有默认值，未知键直接拒绝"""

    master_seed: int = Field(default=7, ge=0)
    output_dir: str = "runs/default"
    data_dir: Optional[str] = None
    jobs: int = Field(default=1, ge=1)
    data: GeneratorSpec = Field(default_factory=GeneratorSpec)
    preprocess: PreprocessConfig = Field(default_factory=PreprocessConfig)
    model: EncoderConfig = Field(default_factory=EncoderConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    inference: InferenceConfig = Field(default_factory=InferenceConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    vae: VaeConfig = Field(default_factory=VaeConfig)


M = TypeVar("M", bound=BaseModel)


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"  - {key}: {item['msg']}")
    return "配置校验失败:\n" + "\n".join(lines)


def validate_config(model_cls: Type[M], data: Union[M, Mapping[str, Any]]) -> M:
    """把字典（或已有模型）校验为配置模型，失败时一次列出全部非法键"""
    if isinstance(data, model_cls):
        data = data.model_dump()
    try:
        return model_cls.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from e


def _set_dotted(tree: Dict[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"无法覆盖 '{dotted}': '{part}' 不是一个配置段")
        node = child
    node[parts[-1]] = value


def apply_overrides(tree: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """应用 --set key=value 形式的覆盖项，值按 YAML 解析"""
    bad = [item for item in overrides if "=" not in item]
    if bad:
        raise ConfigError("覆盖项必须是 key=value 形式: " + ", ".join(bad))
    for item in overrides:
        key, raw = item.split("=", 1)
        _set_dotted(tree, key.strip(), yaml.safe_load(raw))
    return tree


def load_experiment_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
    settings: Optional[Settings] = None,
) -> ExperimentConfig:
    """
    加载实验配置: 文件(YAML/JSON) -> --set 覆盖 -> COSTATE_SEED -> 校验
    """
    tree: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                loaded = yaml.safe_load(f)
        except FileNotFoundError:
            raise ConfigError(f"找不到配置文件 '{path}'")
        except yaml.YAMLError as e:
            raise ConfigError(f"解析配置文件 '{path}' 时出错: {e}")
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError(f"配置文件 '{path}' 顶层必须是映射")
        tree = loaded or {}
    apply_overrides(tree, overrides)

    settings = settings if settings is not None else load_settings()
    if settings.costate_seed is not None:
        tree["master_seed"] = settings.costate_seed
    return validate_config(ExperimentConfig, tree)


def config_diff(a: BaseModel, b: BaseModel) -> Dict[str, Tuple[Any, Any]]:
    """两份配置的差异，键为点分路径"""

    def flatten(prefix: str, value: Any, out: Dict[str, Any]) -> None:
        if isinstance(value, dict):
            for k, v in value.items():
                flatten(f"{prefix}.{k}" if prefix else k, v, out)
        else:
            out[prefix] = value

    left: Dict[str, Any] = {}
    right: Dict[str, Any] = {}
    flatten("", a.model_dump(mode="json"), left)
    flatten("", b.model_dump(mode="json"), right)
    return {
        key: (left.get(key), right.get(key))
        for key in sorted(set(left) | set(right))
        if left.get(key) != right.get(key)
    }


# 全局配置实例
settings = load_settings()
