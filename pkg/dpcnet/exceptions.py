"""
异常定义
所有库级错误都继承自 DPCError，CLI 据此决定退出码
"""
from typing import Optional


class DPCError(Exception):
    """DPCNet 基础异常"""


class ParseError(DPCError):
    """点云文件解析失败"""

    def __init__(self, message: str, line_number: Optional[int] = None, path: Optional[str] = None):
        self.line_number = line_number
        self.path = path
        location = ""
        if path:
            location += f"{path}"
        if line_number is not None:
            location += f":{line_number}"
        super().__init__(f"{location}: {message}" if location else message)


class EmptyInputError(DPCError):
    """输入为空（空文件、无有效点）"""


class InsufficientPointsError(DPCError):
    """有效点数量不足以支撑 k 近邻查询"""

    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        super().__init__(f"需要 {requested} 个近邻，但只有 {available} 个候选点")


class DimensionError(DPCError):
    """矩阵/数组维度不匹配"""


class NonFiniteError(DPCError):
    """输入中出现 NaN 或 Inf"""


class DegenerateBatchError(DPCError):
    """批次中没有任何参与计算的行"""


class TrainingDivergedError(DPCError):
    """训练发散（损失或梯度非有限）"""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(f"[step {step}] {message}" if step is not None else message)


class ClassRangeError(DPCError):
    """类别标签越界"""


class InvalidTargetError(DPCError):
    """感受野目标点非法（越界或为填充点）"""


class ConfigError(DPCError):
    """配置错误"""


class CheckpointError(DPCError):
    """检查点文件损坏或不兼容"""


class MissingLabelsError(DPCError):
    """训练或评估需要标签，但点云没有标签"""
