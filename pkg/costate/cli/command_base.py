import abc
import argparse
import inspect
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type, Union, get_args, get_origin

from rich.console import Console

from ..config import ExperimentConfig, load_experiment_config, settings
from ..data.csv_io import read_csv_cohort
from ..data.datagen import generate_cohort
from ..data.preprocess import prepare_cohort
from ..data.records import PatientRecord
from ..utils.exceptions import ConfigError
from ..utils.logger import get_logger
from .command_card import CommandCard

# 参数表: {参数名: (类型, 说明)} 或 {参数名: (类型, 说明, 默认值)}
ParameterSpec = Dict[str, Tuple[Any, ...]]

CONFIG_PARAMETERS: ParameterSpec = {
    "config": (Optional[str], "实验配置文件（YAML 或 JSON）"),
    "overrides": (List[str], "覆盖配置项 key=value，可重复，例如 --set train.n_epochs=5"),
}


# 参数名与命令行开关不一致时在这里登记
FLAG_ALIASES = {"overrides": "--set"}


class CommandBase(abc.ABC):
    """
    子命令基类

    子类声明 parameters 并实现 async run(**kwargs)；说明卡片按类名自动查找，
    例如 Gen -> gen_card.yaml，Experiment -> experiment_card.yaml
    """

    parameters: ParameterSpec = {}

    def __init__(self, card: Optional[CommandCard] = None, console: Optional[Console] = None):
        if card is None:
            card = self._auto_find_card()
        self.card = card
        self.name = str(card.name)
        self.logger = get_logger(f"command.{card.name}")
        self.console = console or Console()

    def _auto_find_card(self) -> CommandCard:
        """
        注意：这个方法中不能调用 self.logger，因为还没初始化
        """
        class_name = self.__class__.__name__
        snake_case = re.sub(r'(?<!^)(?=[A-Z])', '_', class_name).lower()
        card_filename = f"{snake_case}_card.yaml"
        current_dir = os.path.dirname(inspect.getfile(self.__class__))
        card_path = os.path.join(current_dir, card_filename)
        if not os.path.exists(card_path):
            raise ConfigError(f"找不到 {class_name} 的命令卡片: {card_path}")
        return CommandCard(card_path)

    # ---- argparse 映射 ----

    @staticmethod
    def _is_optional_type(py_type: Any) -> bool:
        return get_origin(py_type) is Union and type(None) in get_args(py_type)

    @staticmethod
    def _is_list_type(py_type: Any) -> bool:
        return get_origin(py_type) in (list, List)

    def _map_python_type(self, py_type: Any) -> Type:
        """把类型注解映射为 argparse 的 type 转换函数"""
        if self._is_optional_type(py_type):
            non_none = [t for t in get_args(py_type) if t is not type(None)]
            return self._map_python_type(non_none[0]) if non_none else str
        if self._is_list_type(py_type):
            args = get_args(py_type)
            return self._map_python_type(args[0]) if args else str
        if py_type in (int, float, str):
            return py_type
        return str

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        for param_name, spec in self.parameters.items():
            param_type, param_desc = spec[0], spec[1]
            flag = FLAG_ALIASES.get(param_name, "--" + param_name.replace("_", "-"))
            if param_type is bool:
                parser.add_argument(flag, dest=param_name, action="store_true", help=param_desc)
            elif self._is_list_type(param_type):
                parser.add_argument(
                    flag, dest=param_name, action="append", default=[],
                    type=self._map_python_type(param_type), help=param_desc,
                )
            else:
                required = not self._is_optional_type(param_type) and len(spec) < 3
                default = spec[2] if len(spec) >= 3 else None
                parser.add_argument(
                    flag, dest=param_name, required=required, default=default,
                    type=self._map_python_type(param_type), help=param_desc,
                )

    def build_parser(self, subparsers) -> argparse.ArgumentParser:
        parser = subparsers.add_parser(
            self.name,
            help=self.card.help_text,
            description=str(self.card.description or self.card.help_text).strip(),
            epilog=self.card.epilog_text or None,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        self.add_arguments(parser)
        parser.set_defaults(command=self.name)
        return parser

    # ---- 各子命令共用的辅助方法 ----

    def load_config(self, config: Optional[str] = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
        cfg = load_experiment_config(config, list(overrides or []))
        self.logger.debug("config loaded", path=config, overrides=list(overrides or []), master_seed=cfg.master_seed)
        return cfg

    @staticmethod
    def resolve_jobs(jobs: Optional[int], cfg: ExperimentConfig) -> int:
        """--jobs > COSTATE_JOBS > 配置文件中的 jobs"""
        value = jobs if jobs is not None else (settings.costate_jobs or cfg.jobs)
        if value < 1:
            raise ConfigError(f"--jobs 必须 >= 1，实际 {value}")
        return value

    def load_cohort(self, cfg: ExperimentConfig, data_dir: Optional[str] = None) -> List[PatientRecord]:
        """有数据目录时读取 CSV 队列，否则按 cfg.data 生成合成队列；随后统一预处理"""
        source = data_dir or cfg.data_dir
        if source:
            raw = read_csv_cohort(source, channels=cfg.preprocess.channels)
            self.logger.info("cohort loaded", source=str(source), n_patients=len(raw))
        else:
            raw = generate_cohort(cfg.data)
            self.logger.info("synthetic cohort generated", seed=cfg.data.seed, n_patients=len(raw))
        return prepare_cohort(raw, cfg.preprocess)

    @staticmethod
    def ensure_dir(path: Union[str, Path]) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        return path

    @abc.abstractmethod
    async def run(self, **kwargs) -> Any:
        """
        执行子命令的核心逻辑。
        子类需要实现这个方法；失败时抛出 CostateException 的子类。
        """
        raise NotImplementedError("Subclasses should implement this method.")

    def __str__(self) -> str:
        param_descs = []
        for param, spec in self.parameters.items():
            ptype, desc = spec[0], spec[1]
            type_name = ptype.__name__ if hasattr(ptype, '__name__') else str(ptype)
            param_descs.append(f"{param} ({type_name}): {desc}")
        return f"Command(name={self.name}, role={self.card.role}" + \
               (f"\nParameters:\n  " + "\n  ".join(param_descs) if param_descs else "") + \
               ")"
