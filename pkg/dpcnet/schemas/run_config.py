"""
运行配置相关的 Pydantic Schemas
训练、评估、消融、计时、感受野追踪都从这里读取超参数
"""
from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from dpcnet.exceptions import ConfigError
from dpcnet.utils.hashing import short_hash


class Mode(str, Enum):
    """任务模式"""
    SEGMENTATION = "segmentation"
    CLASSIFICATION = "classification"


class StrictModel(BaseModel):
    """禁止未知字段的基类，JSON 拼写错误直接报 schema 错误"""
    model_config = ConfigDict(extra="forbid")


class CropSpec(StrictModel):
    """训练裁剪块设置"""
    side_length: float = Field(3.0, gt=0, description="立方体裁剪边长（米）")
    point_budget: int = Field(4092, ge=1, description="每个裁剪块的点数（不足补零）")
    seed: int = Field(0, ge=0, description="采样随机种子")


class LrSchedule(StrictModel):
    """指数衰减学习率"""
    lr0: float = Field(1e-3, gt=0, description="初始学习率")
    decay_factor: float = Field(0.7, gt=0, le=1, description="衰减系数 γ")
    decay_steps: Optional[int] = Field(None, ge=1, description="衰减间隔步数，默认一个 epoch 的步数")

    def lr(self, step: int, steps_per_epoch: int = 1) -> float:
        """lr(step) = lr0 · γ^floor(step / decay_steps)"""
        decay_steps = self.decay_steps or max(1, steps_per_epoch)
        return self.lr0 * self.decay_factor ** (step // decay_steps)


class LayerSpec(StrictModel):
    """单个点卷积层 (F_out, k, d)"""
    out_features: int = Field(64, ge=1, description="输出特征维度 F_out")
    k: int = Field(20, ge=1, description="近邻数量")
    d: int = Field(1, ge=1, description="空洞系数")


def dilation_schedule(
    kind: Literal["constant", "linear", "doubling"],
    depth: int,
    d0: int = 1,
    step: int = 1,
) -> List[int]:
    """
    生成逐层空洞系数

    - constant: 每层都是 d0
    - linear:   d0, d0+step, d0+2·step, ...
    - doubling: d0, 2·d0, 4·d0, ...
    """
    if depth < 1 or d0 < 1:
        raise ConfigError("depth 与 d0 必须 ≥ 1")
    if kind == "constant":
        return [d0] * depth
    if kind == "linear":
        return [max(1, d0 + i * step) for i in range(depth)]
    if kind == "doubling":
        return [d0 * 2 ** i for i in range(depth)]
    raise ConfigError(f"未知的空洞调度: {kind}")


def make_layers(
    depth: int,
    out_features: int = 64,
    k: int = 20,
    d: Union[int, List[int]] = 1,
) -> List[LayerSpec]:
    """按深度批量生成层配置，d 可以是逐层列表"""
    ds = [d] * depth if isinstance(d, int) else list(d)
    if len(ds) != depth:
        raise ConfigError(f"空洞列表长度 {len(ds)} 与深度 {depth} 不一致")
    return [LayerSpec(out_features=out_features, k=k, d=di) for di in ds]


class NetworkConfig(StrictModel):
    """网络结构配置"""
    layers: List[LayerSpec] = Field(
        default_factory=lambda: make_layers(7),
        description="逐层 (F_out, k, d)",
    )
    kernel_hidden: List[int] = Field([64], description="核函数 MLP g 的隐藏层宽度")
    seg_head: List[int] = Field([256], description="分割分支隐藏层宽度")
    cls_head: List[int] = Field([256], description="分类分支隐藏层宽度")
    num_seg_classes: int = Field(3, ge=1, description="分割类别数 K")
    num_cls_classes: int = Field(5, ge=1, description="分类类别数 C")
    seed: int = Field(0, ge=0, description="参数初始化种子")

    @model_validator(mode="after")
    def _check_layers(self) -> "NetworkConfig":
        if not self.layers:
            raise ValueError("至少需要一个点卷积层")
        if any(w < 1 for w in self.kernel_hidden + self.seg_head + self.cls_head):
            raise ValueError("隐藏层宽度必须 ≥ 1")
        return self

    @property
    def depth(self) -> int:
        return len(self.layers)

    def with_neighborhood(self, k: Optional[int] = None, d: Optional[Union[int, List[int]]] = None) -> "NetworkConfig":
        """复制一份配置并替换所有层的 k / d（消融实验用）"""
        ds = [d] * self.depth if isinstance(d, int) else d
        layers = []
        for i, layer in enumerate(self.layers):
            layers.append(layer.model_copy(update={
                "k": k if k is not None else layer.k,
                "d": ds[i] if ds is not None else layer.d,
            }))
        return self.model_copy(update={"layers": layers})


class TrainingConfig(StrictModel):
    """训练配置"""
    epochs: int = Field(20, ge=0, description="训练轮数")
    crops_per_epoch: int = Field(8, ge=1, description="每轮采样的裁剪块数量")
    batch_size: int = Field(1, ge=1, description="每步梯度平均的裁剪块数量")
    crop: Optional[CropSpec] = Field(default_factory=CropSpec, description="裁剪设置，null 表示整片点云训练")
    lr: LrSchedule = Field(default_factory=LrSchedule)
    weight_decay: float = Field(0.0, ge=0, description="L2 权重衰减")
    checkpoint_every: int = Field(1, ge=0, description="每隔多少轮写一次检查点，0 表示只写最终检查点")


class PathsConfig(StrictModel):
    """路径配置"""
    data: str = Field("./data", description="训练数据目录（含 manifest.json）或单个点云文件")
    val_data: Optional[str] = Field(None, description="验证数据目录或文件")
    checkpoints: str = Field("./checkpoints", description="检查点输出目录")
    reports: str = Field("./reports", description="报告输出目录")


class RunConfig(StrictModel):
    """一次实验的完整配置"""
    schema_version: int = Field(1, description="配置格式版本")
    mode: Mode = Mode.SEGMENTATION
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    seed: int = Field(0, ge=0, description="全局随机种子")
    threads: int = Field(1, ge=1, description="工作线程数")
    deterministic: bool = Field(True, description="固定归约顺序")
    data_format: Literal["xyz-text", "ply-ascii"] = "xyz-text"
    paths: PathsConfig = Field(default_factory=PathsConfig)
    resume: Optional[str] = Field(None, description="从该检查点继续训练")

    def config_hash(self) -> str:
        """配置哈希：规范化 JSON 的 sha256 前 16 位"""
        return short_hash(self.model_dump(mode="json"))

    def check_paths(self) -> None:
        """运行开始前检查引用的路径"""
        if not Path(self.paths.data).exists():
            raise ConfigError(f"训练数据不存在: {self.paths.data}")
        if self.paths.val_data and not Path(self.paths.val_data).exists():
            raise ConfigError(f"验证数据不存在: {self.paths.val_data}")
        if self.resume and not Path(self.resume).is_file():
            raise ConfigError(f"检查点不存在: {self.resume}")

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunConfig":
        """从 JSON 文件加载并校验"""
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"无法读取配置文件 {path}: {e}") from e
        try:
            return cls.model_validate_json(text)
        except ValueError as e:
            raise ConfigError(f"配置文件校验失败 {path}:\n{e}") from e


# 感受野网格的行 (k, d) 与列（深度）
RF_GRID_ROWS: List[Tuple[int, int]] = [(5, 1), (10, 1), (20, 1), (20, 2), (20, 8), (20, 16)]
RF_GRID_DEPTHS: List[int] = [1, 2, 3, 5, 7]


class AblationConfig(StrictModel):
    """消融实验配置（默认值对应深度/k 与空洞两张表）"""
    run: RunConfig = Field(default_factory=RunConfig)
    depths: List[int] = Field([3, 5, 7], description="深度分组")
    ks: List[int] = Field([5, 10, 20], description="近邻数量")
    dilations: List[int] = Field([1, 2, 8, 16], description="空洞系数（在 dilation_depth / dilation_k 下扫描）")
    dilation_depth: int = Field(7, ge=1)
    dilation_k: int = Field(20, ge=1)
    seeds: List[int] = Field([0], description="每个格子重复的种子")
    timing_points: int = Field(4092, ge=2, description="计时用的点数")
    timing_trials: int = Field(3, ge=1)
    train: bool = Field(True, description="是否训练并报告 mIoU/mAcc，false 时只报告时间与参数量")

    @model_validator(mode="after")
    def _check_grid(self) -> "AblationConfig":
        for name in ("depths", "ks", "dilations", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"{name} 不能为空")
        return self


class BenchConfig(StrictModel):
    """前向计时配置"""
    n_points: int = Field(4092, ge=2)
    k: int = Field(20, ge=1)
    dilations: List[int] = Field([1, 8], description="计时的空洞系数列表")
    depth: int = Field(7, ge=1)
    out_features: int = Field(64, ge=1)
    in_features: int = Field(3, ge=1)
    trials: int = Field(3, ge=1)
    seed: int = Field(0, ge=0)


class TraceConfig(StrictModel):
    """感受野追踪配置"""
    cloud: Optional[str] = Field(None, description="点云文件；为空时按 scene_kind/scene_seed 生成")
    scene_kind: Literal["rooms", "beacon", "shapes"] = "rooms"
    scene_seed: int = Field(0, ge=0)
    n_points: Optional[int] = Field(None, ge=2)
    target: Optional[int] = Field(None, ge=0, description="目标点，默认取离质心最近的有效点")
    depth: int = Field(3, ge=0, description="单格模式的深度")
    k: int = Field(20, ge=1)
    d: int = Field(1, ge=1)
    depths: List[int] = Field(default_factory=lambda: list(RF_GRID_DEPTHS), description="网格的列")
    rows: List[Tuple[int, int]] = Field(default_factory=lambda: list(RF_GRID_ROWS), description="网格的行 (k, d)")
    out_features: int = Field(16, ge=1, description="追踪用随机网络的层宽")
    kernel_hidden: List[int] = Field([16])
    gradient: bool = Field(True, description="是否同时计算梯度感受野")
    seed: int = Field(0, ge=0)
