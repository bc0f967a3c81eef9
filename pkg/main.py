import sys
from typing import Optional, Sequence

from commands import ALL_COMMANDS
from costate.cli import CommandRegistry


def build_registry() -> CommandRegistry:
    registry = CommandRegistry(prog="costate")
    for command_cls in ALL_COMMANDS:
        registry.register(command_cls())
    return registry


def main(argv: Optional[Sequence[str]] = None) -> int:
    return build_registry().dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
