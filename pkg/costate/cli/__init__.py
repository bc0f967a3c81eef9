from .command_card import CommandCard
from .command_base import CommandBase, CONFIG_PARAMETERS
from .registry import CommandRegistry, exit_code_for, EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME

__all__ = [
    'CommandCard', 'CommandBase', 'CONFIG_PARAMETERS',
    'CommandRegistry', 'exit_code_for', 'EXIT_OK', 'EXIT_CONFIG', 'EXIT_DATA', 'EXIT_RUNTIME',
]
