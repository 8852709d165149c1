"""
日志配置模块
"""
import contextvars
import functools
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Iterator, Optional, TypeVar, Union

from loguru import logger

from dpcnet.config import settings

CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {extra[run]} | {name}:{function}:{line} - {message}"
RUN_LOG_NAME = "run.log"

T = TypeVar("T")

logger.configure(extra={"run": "-"})


def setup_logger(level: Optional[str] = None):
    """配置日志系统（CLI 启动时调用一次）；控制台走 stderr，stdout 只输出 JSON 结果"""
    level = level or settings.LOG_LEVEL
    logger.remove()
    logger.add(sys.stderr, format=CONSOLE_FORMAT, level=level, colorize=True)

    if settings.LOG_FILE:
        log_dir = os.path.dirname(settings.LOG_FILE)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        logger.add(
            settings.LOG_FILE,
            format=FILE_FORMAT,
            level=level,
            rotation="100 MB",
            retention="30 days",
            compression="zip",
            encoding="utf-8",
        )

    logger.debug("日志系统初始化完成")


@contextmanager
def run_log(report_dir: Union[str, Path], run_id: str, level: str = "DEBUG") -> Iterator[Path]:
    """
    在 report_dir/run.log 记录一次运行的全部日志，每行带 run_id（配置哈希）

    退出时移除该文件处理器；全局处理器不受影响。
    """
    path = Path(report_dir) / RUN_LOG_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logger.add(
        path,
        format=FILE_FORMAT,
        level=level,
        filter=lambda record: record["extra"].get("run") == run_id,
        encoding="utf-8",
    )
    try:
        with logger.contextualize(run=run_id):
            yield path
    finally:
        logger.remove(handler)


def carry_context(fn: Callable[..., T]) -> Callable[..., T]:
    """
    把调用方此刻的日志上下文（run_log 的 run id）带进线程池

    工作线程不继承 contextvars；每次调用在快照的副本里执行，可并发。
    """
    context = contextvars.copy_context()

    @functools.wraps(fn)
    def wrapper(*args, **kwargs) -> T:
        return context.copy().run(fn, *args, **kwargs)

    return wrapper


__all__ = ["logger", "setup_logger", "run_log", "carry_context", "RUN_LOG_NAME"]
