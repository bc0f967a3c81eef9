from typing import Optional


class CostateException(Exception):
    pass


class ConfigError(CostateException):
    """配置或参数不合法（CLI 退出码 2）"""
    pass


class DataError(CostateException):
    """数据层面的错误（CLI 退出码 3）"""
    pass


class ParseError(DataError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{location}: {message}" if location else message)


class EmptyRecordingError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class CoverageError(DataError):
    pass


class DimensionError(CostateException, ValueError):
    def __init__(self, primitive: str, message: str):
        self.primitive = primitive
        super().__init__(f"[{primitive}] {message}")


class CheckpointError(CostateException):
    pass


class ChecksumError(CheckpointError):
    pass


class UndefinedMetricError(CostateException):
    pass


class TrainingError(CostateException):
    pass
