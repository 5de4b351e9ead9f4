"""
Loguru 配置模块 - 统一管理 pcharts 的日志记录

此模块提供了基于 Loguru 的日志配置，支持：
- 控制台（stderr）和可选的文件日志输出
- 日志轮转
- 上下文绑定
- 耗时较长的编译/验证阶段的性能记录
"""

import functools
import logging as std_logging
import sys
import time
from typing import Any, Callable, List, TypeVar, cast

from loguru import logger

from .config import Config

F = TypeVar("F", bound=Callable[..., Any])

# 调试模式下的控制台格式（带颜色）
CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss.SSS}</green> | "
    "<level>{level: <8}</level> | "
    "<cyan>{extra[name]}</cyan> | "
    "<level>{message}</level>"
)

# 文件和普通控制台格式
PLAIN_FORMAT = (
    "{time:YYYY-MM-DD HH:mm:ss.SSS ZZ} | "
    "{level: <8} | "
    "{extra[name]}:{function}:{line} | "
    "{message}"
)

logger.configure(extra={"name": "pcharts"})

# 移除 loguru 默认的 stderr 处理器（id 0）；库调用方未调用 configure_logging 时保持安静
try:
    logger.remove(0)
except ValueError:
    # 默认处理器已被移除
    pass


class LoggingManager:
    """日志系统管理器"""

    def __init__(self, config: Config):
        """
        初始化日志管理器

        Args:
            config: 配置对象
        """
        self.config = config
        self._handler_ids: List[int] = []

    def setup_logging(self) -> None:
        """设置 Loguru 日志配置"""
        # 移除默认处理器
        logger.remove()

        self._add_console_handler()

        if self.config.logging.file:
            self._add_file_handler()

        self._configure_third_party_loggers()

    def _add_console_handler(self) -> None:
        """添加控制台日志处理器；标准输出留给报告和 JSON"""
        is_debug = self.config.logging.level in ("DEBUG", "TRACE")
        handler_id = logger.add(
            sys.stderr,
            format=CONSOLE_FORMAT if is_debug else "<level>{level: <8}</level> | {message}",
            level=self.config.logging.level,
            colorize=None,
            backtrace=is_debug,
            diagnose=is_debug,
            catch=True,
        )
        self._handler_ids.append(handler_id)

    def _add_file_handler(self) -> None:
        """添加文件日志处理器"""
        handler_id = logger.add(
            str(self.config.logging.file),
            format=PLAIN_FORMAT,
            level="DEBUG",
            rotation=self.config.logging.rotation,
            retention=self.config.logging.retention,
            backtrace=False,
            diagnose=False,
            enqueue=True,
            catch=True,
        )
        self._handler_ids.append(handler_id)

    def _configure_third_party_loggers(self) -> None:
        """降低第三方库的日志级别"""
        for logger_name in ("lark", "concurrent.futures"):
            std_logging.getLogger(logger_name).setLevel(std_logging.WARNING)

    def cleanup(self) -> None:
        """清理日志处理器"""
        for handler_id in self._handler_ids:
            try:
                logger.remove(handler_id)
            except ValueError:
                # 处理器已被移除
                pass
        self._handler_ids.clear()


def get_logger(name: str) -> Any:
    """
    获取带有模块名称绑定的 logger 实例

    Args:
        name: 模块名称，通常是 __name__

    Returns:
        绑定了模块名称的 logger 实例
    """
    return logger.bind(name=name)


def configure_logging(config: Config) -> LoggingManager:
    """
    配置项目日志系统

    Args:
        config: 配置对象

    Returns:
        日志管理器实例
    """
    logging_manager = LoggingManager(config)
    logging_manager.setup_logging()
    return logging_manager


class LogContext:
    """日志上下文管理器，用于绑定结构化数据到日志记录"""

    def __init__(self, **context_data: Any):
        self.context_data = context_data
        self.bound_logger: Any = None

    def __enter__(self) -> Any:
        self.bound_logger = logger.bind(**self.context_data)
        return self.bound_logger

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        self.bound_logger = None


def log_performance(threshold_ms: float = 1000.0, level: str = "DEBUG") -> Callable[[F], F]:
    """
    性能监控装饰器，记录函数执行时间

    Args:
        threshold_ms: 执行时间阈值（毫秒），超过此值会记录为 INFO
        level: 未超过阈值时的日志级别
    """

    def decorator(func: F) -> F:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            func_logger = get_logger(func.__module__)
            start_time = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                duration_ms = (time.perf_counter() - start_time) * 1000
                func_logger.debug(
                    "{}() failed after {:.2f}ms with {}: {}",
                    func.__name__,
                    duration_ms,
                    type(e).__name__,
                    str(e),
                )
                raise
            duration_ms = (time.perf_counter() - start_time) * 1000
            func_logger.log(
                "INFO" if duration_ms > threshold_ms else level,
                "{}() took {:.2f}ms",
                func.__name__,
                duration_ms,
            )
            return result

        return cast(F, wrapper)

    return decorator
