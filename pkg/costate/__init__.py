import sys

# 禁用Python字节码缓存
sys.dont_write_bytecode = True

from .config import ExperimentConfig, Settings, load_experiment_config, load_settings, validate_config
from .utils.logger import get_logger, get_run_logger
from .utils.exceptions import (
    CostateException, ConfigError, DataError, ParseError, EmptyRecordingError, InsufficientDataError,
    CoverageError, DimensionError, CheckpointError, ChecksumError, UndefinedMetricError, TrainingError,
)

__all__ = [
    'ExperimentConfig', 'Settings', 'load_experiment_config', 'load_settings', 'validate_config',
    'get_logger', 'get_run_logger',
    'CostateException', 'ConfigError', 'DataError', 'ParseError', 'EmptyRecordingError', 'InsufficientDataError',
    'CoverageError', 'DimensionError', 'CheckpointError', 'ChecksumError', 'UndefinedMetricError', 'TrainingError',
]
