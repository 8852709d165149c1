"""
JSON 产物落盘
"""
from pathlib import Path
from typing import Union

from pydantic import BaseModel
from loguru import logger


def write_artifact(path: Union[str, Path], model: BaseModel) -> Path:
    """写 schema 化的 JSON 产物（不含时间戳，重复运行逐字节相同）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.debug(f"产物已写入 {path}")
    return path
