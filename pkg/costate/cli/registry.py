import argparse
import asyncio
from typing import Dict, List, Optional, Sequence

from ..utils.exceptions import CheckpointError, ConfigError, DataError
from ..utils.logger import get_logger
from .command_base import CommandBase

logger = get_logger("cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, (DataError, CheckpointError)):
        return EXIT_DATA
    return EXIT_RUNTIME


class CommandRegistry:
    def __init__(self, prog: str = "costate"):
        self.prog = prog
        self.commands: Dict[str, CommandBase] = {}

    def register(self, command: CommandBase):
        if command.name in self.commands:
            raise ValueError(f"命令 '{command.name}' 已经注册。")
        self.commands[command.name] = command

    def get_command(self, name: str) -> Optional[CommandBase]:
        return self.commands.get(name)

    def names(self) -> List[str]:
        return list(self.commands)

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog=self.prog,
            description="多病人 ICU 时间序列的共享潜在状态协同学习",
        )
        subparsers = parser.add_subparsers(dest="command", metavar="<command>")
        subparsers.required = True
        for command in self.commands.values():
            command.build_parser(subparsers)
        return parser

    def dispatch(self, argv: Sequence[str]) -> int:
        """解析参数并执行子命令，返回进程退出码（0 / 2 / 3 / 4）"""
        parser = self.build_parser()
        try:
            args = parser.parse_args(list(argv))
        except SystemExit as e:
            # argparse 对 --help 返回 0，参数错误返回 2
            return int(e.code or 0)

        kwargs = vars(args)
        command = self.get_command(kwargs.pop("command"))
        try:
            asyncio.run(command.run(**kwargs))
        except (ConfigError, DataError, CheckpointError) as e:
            logger.error("command failed", command=command.name, error_type=type(e).__name__, error=str(e))
            return exit_code_for(e)
        except Exception as e:
            logger.exception("command crashed", command=command.name, error_type=type(e).__name__)
            return exit_code_for(e)
        logger.info("command finished", command=command.name)
        return EXIT_OK
