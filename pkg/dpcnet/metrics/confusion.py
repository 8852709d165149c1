"""
混淆矩阵与分割/分类指标

    IoU_c = TP_c / (TP_c + FP_c + FN_c)
    Acc_c = TP_c / (TP_c + FN_c)
    mIoU / mAcc 只对出现过的类别取平均（support > 0），oAcc = 迹 / 总数
"""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from dpcnet.exceptions import ClassRangeError, DimensionError
from dpcnet.schemas.reports import MetricsReport


@dataclass(frozen=True)
class ConfusionMatrix:
    """K×K 计数，行是真实类别，列是预测类别"""
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] < 1:
            raise DimensionError(f"混淆矩阵必须是 K×K，实际 {counts.shape}")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        if other.num_classes != self.num_classes:
            raise DimensionError("类别数不同的混淆矩阵不能相加")
        return ConfusionMatrix(self.counts + other.counts)

    def update(self, predictions, labels, mask=None) -> "ConfusionMatrix":
        return cm_update(self, predictions, labels, mask)

    def per_class_iou(self) -> List[Optional[float]]:
        """TP / (TP+FP+FN)；只被预测、从未出现在真实标签里的类 IoU 为 0，两边都没有的类为 None"""
        tp = np.diag(self.counts)
        denom = self.counts.sum(axis=0) + self.counts.sum(axis=1) - tp
        present = denom > 0
        return [float(tp[c] / denom[c]) if present[c] else None for c in range(self.num_classes)]

    def per_class_acc(self) -> List[Optional[float]]:
        tp = np.diag(self.counts)
        support = self.support
        return [float(tp[c] / support[c]) if support[c] > 0 else None for c in range(self.num_classes)]

    def miou(self) -> float:
        return _mean_present(self.per_class_iou())

    def macc(self) -> float:
        return _mean_present(self.per_class_acc())

    def oacc(self) -> float:
        total = self.total
        return float(np.trace(self.counts) / total) if total else 0.0

    def to_report(self, config_hash: str = "") -> MetricsReport:
        return MetricsReport(
            config_hash=config_hash,
            miou=self.miou(),
            macc=self.macc(),
            oacc=self.oacc(),
            per_class_iou=self.per_class_iou(),
            per_class_acc=self.per_class_acc(),
            support=[int(s) for s in self.support],
            confusion=self.counts.tolist(),
        )


def _mean_present(values: List[Optional[float]]) -> float:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else 0.0


def cm_update(cm: ConfusionMatrix, predictions, labels, mask=None) -> ConfusionMatrix:
    """
    把一批预测累加进混淆矩阵（返回新矩阵）

    Raises:
        ClassRangeError: 被选中的标签或预测不在 [0, K)
    """
    predictions = np.asarray(predictions, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if predictions.shape != labels.shape:
        raise DimensionError(f"预测 {predictions.shape} 与标签 {labels.shape} 长度不一致")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        predictions, labels = predictions[mask], labels[mask]
    k = cm.num_classes
    for name, values in (("标签", labels), ("预测", predictions)):
        if values.size and (values.min() < 0 or values.max() >= k):
            raise ClassRangeError(f"{name}超出 [0, {k})")
    counts = np.bincount(labels * k + predictions, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(cm.counts + counts)


def miou(cm: ConfusionMatrix) -> float:
    return cm.miou()


def macc(cm: ConfusionMatrix) -> float:
    return cm.macc()


def oacc(cm: ConfusionMatrix) -> float:
    return cm.oacc()
