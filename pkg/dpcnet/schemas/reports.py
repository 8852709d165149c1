"""
报告相关的 Pydantic Schemas
所有 JSON 产物都带 schema_version 与 config_hash
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from dpcnet import __version__

SCHEMA_VERSION = 1


class Artifact(BaseModel):
    """产物公共字段"""
    schema_version: int = SCHEMA_VERSION
    config_hash: str = Field("", description="生成该产物的配置哈希")
    created_by: str = f"dpcnet {__version__}"


class MetricsReport(Artifact):
    """分割/分类指标"""
    miou: float
    macc: float
    oacc: float
    per_class_iou: List[Optional[float]] = Field(..., description="缺席类别为 null")
    per_class_acc: List[Optional[float]]
    support: List[int]
    confusion: List[List[int]]


class HistoryRow(BaseModel):
    """单个 epoch 的训练记录"""
    epoch: int
    step: int
    lr: float
    loss: float
    oacc: float
    miou: float
    macc: float
    val_loss: Optional[float] = None
    val_oacc: Optional[float] = None
    val_miou: Optional[float] = None
    val_macc: Optional[float] = None


class TrainHistory(Artifact):
    """训练历史"""
    mode: str
    seed: int
    rows: List[HistoryRow] = Field(default_factory=list)


class RfStatsModel(BaseModel):
    """单个感受野的统计"""
    size: int
    radius: float
    coverage: float
    density: float


class RfCell(BaseModel):
    """感受野网格中的一个格子 (depth, k, d)"""
    depth: int
    k: int
    d: int
    graph: RfStatsModel
    gradient: Optional[RfStatsModel] = None
    error: Optional[str] = None


class RfReport(Artifact):
    """感受野追踪报告"""
    target: int
    n_valid: int
    cells: List[RfCell] = Field(default_factory=list)


class AblationRow(BaseModel):
    """消融表的一行"""
    group: str = Field(..., description="depth_k 或 dilation")
    layers: int
    k: int
    d: int
    forward_ms: Optional[float] = None
    parameters: Optional[int] = None
    miou: Optional[float] = None
    macc: Optional[float] = None
    seeds: int = 0
    error: Optional[str] = None


class AblationReport(Artifact):
    """消融实验报告"""
    rows: List[AblationRow] = Field(default_factory=list)


class BenchReport(Artifact):
    """前向计时报告"""
    n_points: int
    k: int
    depth: int
    trials: int
    median_ms: Dict[str, float] = Field(..., description="d -> 前向中位数耗时（毫秒）")
    neighbor_ms: Dict[str, float] = Field(..., description="d -> 近邻搜索中位数耗时（毫秒）")
    samples_ms: Dict[str, List[float]]
    ratio_to_d1: Dict[str, float] = Field(default_factory=dict)


class ManifestEntry(BaseModel):
    """数据清单条目"""
    file: str
    kind: str
    seed: int
    n_points: int
    class_label: Optional[int] = None


class DatasetManifest(Artifact):
    """合成数据清单"""
    kind: str
    seed: int
    format: str = "xyz-text"
    num_classes: int
    entries: List[ManifestEntry] = Field(default_factory=list)
