"""
点云数据模型
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from dpcnet.exceptions import ClassRangeError, DimensionError, EmptyInputError, NonFiniteError


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class PointCloud:
    """
    点云：位置、逐点特征、可选标签、有效掩码

    valid=False 的行是零填充行，位置与特征必须全为 0，
    不参与近邻搜索、池化、损失与指标。构造后数组只读，可在线程间共享。
    """

    positions: np.ndarray  # N×3，米
    features: np.ndarray  # N×F_in
    labels: Optional[np.ndarray] = None  # N，整数
    valid: Optional[np.ndarray] = None  # N，布尔
    meta: Dict[str, Any] = field(default_factory=dict)  # 生成器元数据

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64)
        features = np.asarray(self.features, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise DimensionError(f"positions 必须是 N×3，实际 {positions.shape}")
        n = positions.shape[0]
        if n < 1:
            raise EmptyInputError("点云至少需要 1 个点")
        if features.ndim == 1:
            features = features.reshape(n, -1)
        if features.ndim != 2 or features.shape[0] != n or features.shape[1] < 1:
            raise DimensionError(f"features 必须是 {n}×F_in，实际 {features.shape}")

        valid = np.ones(n, dtype=bool) if self.valid is None else np.asarray(self.valid, dtype=bool)
        if valid.shape != (n,):
            raise DimensionError(f"valid 长度 {valid.shape} 与点数 {n} 不一致")

        if not (np.isfinite(positions).all() and np.isfinite(features).all()):
            raise NonFiniteError("点云包含 NaN/Inf")
        if (positions[~valid] != 0).any() or (features[~valid] != 0).any():
            raise DimensionError("填充行的位置与特征必须全为 0")

        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (n,):
                raise DimensionError(f"labels 长度 {labels.shape} 与点数 {n} 不一致")
            if labels.size and not np.issubdtype(labels.dtype, np.integer):
                if not np.all(labels == np.round(labels)):
                    raise ClassRangeError("标签必须是整数")
            labels = labels.astype(np.int64)
            if (labels < 0).any():
                raise ClassRangeError("标签必须 ≥ 0")
            labels = _frozen(labels)

        object.__setattr__(self, "positions", _frozen(positions))
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "valid", _frozen(valid))
        object.__setattr__(self, "labels", labels)

    # ---------- 便捷属性 ----------

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    @property
    def in_features(self) -> int:
        return self.features.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @property
    def class_label(self) -> Optional[int]:
        """分类目标：优先取生成器元数据，否则取有效点的多数标签"""
        if "class_label" in self.meta:
            return int(self.meta["class_label"])
        if self.labels is None or self.n_valid == 0:
            return None
        return int(np.bincount(self.labels[self.valid]).argmax())

    def check_labels(self, num_classes: int) -> None:
        """检查标签是否都在 [0, num_classes) 内"""
        if self.labels is None:
            return
        bad = self.labels[self.valid] >= num_classes
        if bad.any():
            raise ClassRangeError(
                f"标签 {int(self.labels[self.valid][bad].max())} 超出类别数 {num_classes}"
            )

    def bounding_box(self):
        """有效点的轴对齐包围盒 (min, max)"""
        pts = self.positions[self.valid]
        if len(pts) == 0:
            raise EmptyInputError("点云没有有效点")
        return pts.min(axis=0), pts.max(axis=0)

    def subset(self, rows: np.ndarray) -> "PointCloud":
        """按行索引取子集（保持元数据）"""
        rows = np.asarray(rows, dtype=np.int64)
        return PointCloud(
            positions=self.positions[rows],
            features=self.features[rows],
            labels=None if self.labels is None else self.labels[rows],
            valid=self.valid[rows],
            meta=dict(self.meta),
        )

    def permute(self, order: np.ndarray) -> "PointCloud":
        """重排点的顺序"""
        return self.subset(order)

    def __repr__(self):
        return (
            f"<PointCloud(n={self.n_points}, valid={self.n_valid}, "
            f"F_in={self.in_features}, labeled={self.has_labels})>"
        )


def constant_features(n: int) -> np.ndarray:
    """缺失特征列时补一列常数 1.0"""
    return np.ones((n, 1), dtype=np.float64)
