import yaml
from types import SimpleNamespace

from ..utils.exceptions import ConfigError


class CommandCard:
    """
    子命令的说明卡片（Command Card）。

    从 YAML 文件读取 name / role / description（以及可选的 epilog、artifacts），
    转换为可以用属性访问的对象，--help 的文字都取自这里。

    用法:
        card = CommandCard('commands/gen/gen_card.yaml')
        print(card.name)
        print(card.help_text)
    """

    def __init__(self, filepath: str):
        self.filepath = filepath
        self.name = None
        self.role = None
        self.description = None
        self.artifacts = []
        self.epilog = None
        try:
            self._load_and_set_attrs()
        except FileNotFoundError:
            raise ConfigError(f"CommandCard错误：找不到指定的配置文件 '{filepath}'")
        except yaml.YAMLError as e:
            raise ConfigError(f"解析YAML文件 '{filepath}' 时出错: {e}")
        if not self.name:
            raise ConfigError(f"命令卡片 '{filepath}' 缺少 name 字段")

    def _load_and_set_attrs(self):
        with open(self.filepath, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
        self._data_to_attributes(data)

    def _data_to_attributes(self, data: dict):
        for key, value in data.items():
            if isinstance(value, dict):
                setattr(self, key, self._dict_to_simplenamespace(value))
            else:
                setattr(self, key, value)

    def _dict_to_simplenamespace(self, data: dict) -> SimpleNamespace:
        for key, value in data.items():
            if isinstance(value, dict):
                data[key] = self._dict_to_simplenamespace(value)
        return SimpleNamespace(**data)

    @property
    def help_text(self) -> str:
        """子命令列表里显示的一行说明"""
        return str(self.role or self.name)

    @property
    def epilog_text(self) -> str:
        lines = []
        if self.artifacts:
            lines.append("outputs: " + ", ".join(str(a) for a in self.artifacts))
        if self.epilog:
            lines.append(str(self.epilog).strip())
        return "\n".join(lines)

    def __repr__(self) -> str:
        name = getattr(self, 'name', 'N/A')
        role = getattr(self, 'role', 'N/A')
        return f"CommandCard(name='{name}', role='{role}')"
